"""Polynomial/exponential convex term bank with non-negative weights.

Each term is a sum over powers a in {1, 2, 3} and activations
f in {identity, exp(.)-1}:

    value(x) = sum_{a,b} g_ab * f_b(w_ab * x^a)

Non-negative (w, g) make the term convex and non-decreasing on x >= 0,
so the assembled energy stays polyconvex with no extra penalty.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

POWERS = (1, 2, 3)
N_ACTIVATIONS = 2  # column 0: identity, column 1: exp(.) - 1
N_PARAMS = len(POWERS) * N_ACTIVATIONS * 2

# Optional clamp on exponent arguments, active only inside exponent_guard().
# Training enables it to survive exploratory optimizer steps; plain
# evaluation never clamps.
_EXP_CAP: float | None = None
_CLAMP_EVENTS = 0


@contextmanager
def exponent_guard(cap: float = 50.0):
    """Clamp exp arguments at `cap` within the context, counting clamps."""
    global _EXP_CAP
    previous = _EXP_CAP
    _EXP_CAP = float(cap)
    try:
        yield
    finally:
        _EXP_CAP = previous


def clamp_events() -> int:
    return _CLAMP_EVENTS


def reset_clamp_events() -> None:
    global _CLAMP_EVENTS
    _CLAMP_EVENTS = 0


def _exp(t: np.ndarray) -> np.ndarray:
    global _CLAMP_EVENTS
    if _EXP_CAP is not None:
        over = t > _EXP_CAP
        if np.any(over):
            _CLAMP_EVENTS += int(np.count_nonzero(over))
            t = np.minimum(t, _EXP_CAP)
    return np.exp(t)


def _check_domain(x: np.ndarray) -> None:
    if np.any(x < 0.0):
        raise DomainError("CANN terms are defined on x >= 0")


@dataclass
class CannTermParams:
    """Weights (w, g), shape (3, 2): rows are powers 1..3, columns (identity, exp)."""

    w: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))
    g: np.ndarray = field(default_factory=lambda: np.zeros((3, 2)))

    family = "cann"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(3, 2)
        self.g = np.asarray(self.g, dtype=float).reshape(3, 2)

    # Init scale keeps exp(w * x^3) tame on the normalized input range [0, 3].
    INIT_HIGH = 0.1

    @classmethod
    def random(cls, rng: np.random.Generator) -> "CannTermParams":
        return cls(
            w=rng.uniform(0.0, cls.INIT_HIGH, (3, 2)),
            g=rng.uniform(0.0, cls.INIT_HIGH, (3, 2)),
        )

    @property
    def n_params(self) -> int:
        return N_PARAMS

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.g.ravel()])

    def set_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        self.w = vec[:6].reshape(3, 2).copy()
        self.g = vec[6:12].reshape(3, 2).copy()

    def project(self) -> None:
        # Constraint: weights stay >= 0 (projected gradient step).
        np.maximum(self.w, 0.0, out=self.w)
        np.maximum(self.g, 0.0, out=self.g)

    def value(self, x):
        return cann_value(self, x)

    def first_derivative(self, x):
        return cann_first_derivative(self, x)

    def second_derivative(self, x):
        return cann_second_derivative(self, x)

    def first_derivative_param_grad(self, x, seeds) -> np.ndarray:
        return cann_first_derivative_param_grad(self, x, seeds)

    def to_config(self) -> dict:
        return {"family": "cann", "w": self.w.tolist(), "g": self.g.tolist()}

    @classmethod
    def from_config(cls, config: dict) -> "CannTermParams":
        return cls(w=np.array(config["w"]), g=np.array(config["g"]))


def _eval(params: CannTermParams, x, order: int):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    _check_domain(x)
    out = np.zeros_like(x)
    for row, a in enumerate(POWERS):
        xa = x ** a
        w_id, w_ex = params.w[row]
        g_id, g_ex = params.g[row]
        e = _exp(w_ex * xa)
        if order == 0:
            out += g_id * (w_id * xa) + g_ex * (e - 1.0)
        elif order == 1:
            slope = a * x ** (a - 1)
            out += (g_id * w_id + g_ex * w_ex * e) * slope
        else:
            slope = a * x ** (a - 1)
            out += (g_id * w_id * 0.0 + g_ex * w_ex ** 2 * e) * slope ** 2
            if a > 1:
                curve = a * (a - 1) * x ** (a - 2)
                out += (g_id * w_id + g_ex * w_ex * e) * curve
    return float(out[0]) if scalar else out


def cann_value(params: CannTermParams, x):
    """Energy contribution at x >= 0 (scalar or array)."""
    return _eval(params, x, order=0)


def cann_first_derivative(params: CannTermParams, x):
    """Analytic d(value)/dx; non-negative for non-negative weights."""
    return _eval(params, x, order=1)


def cann_second_derivative(params: CannTermParams, x):
    """Analytic d2(value)/dx2; non-negative for non-negative weights."""
    return _eval(params, x, order=2)


def cann_first_derivative_param_grad(params: CannTermParams, x, seeds) -> np.ndarray:
    """Gradient of sum_n seeds[n] * first_derivative(x[n]) w.r.t. the 12 weights.

    Closed form; ordering matches get_params (w raveled, then g raveled).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    seeds = np.atleast_1d(np.asarray(seeds, dtype=float))
    _check_domain(x)
    grad_w = np.zeros((3, 2))
    grad_g = np.zeros((3, 2))
    for row, a in enumerate(POWERS):
        xa = x ** a
        slope = a * x ** (a - 1)
        w_id, w_ex = params.w[row]
        g_id, g_ex = params.g[row]
        e = _exp(w_ex * xa)
        grad_g[row, 0] = np.dot(seeds, w_id * slope)
        grad_g[row, 1] = np.dot(seeds, w_ex * e * slope)
        grad_w[row, 0] = np.dot(seeds, g_id * slope)
        grad_w[row, 1] = np.dot(seeds, g_ex * e * (w_ex * xa + 1.0) * slope)
    return np.concatenate([grad_w.ravel(), grad_g.ravel()])
