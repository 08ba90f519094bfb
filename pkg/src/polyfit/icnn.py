"""Input-convex scalar network: convex, non-decreasing in its single input.

Layer recursion (raw weights are exponentiated, so effective weights are
always positive):

    Z_1 = softplus^2( x * exp(Wx_1) + b_1 )
    Z_i = softplus^2( exp(Wz_i)^T Z_{i-1} + x * exp(Wx_i) + b_i )
    out = exp(Wz_n)^T Z_{n-1} + x * exp(Wx_n) + b_n

softplus is squared elementwise per unit. Derivatives are propagated
forward through the recursion as extra scalar channels, so no external
autodiff is involved.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericalError

DEFAULT_WIDTHS = (4, 4)
INIT_STD = 0.5


def _softplus(t):
    return np.logaddexp(0.0, t)


@dataclass
class IcnnParams:
    """Raw (pre-exp) weights of one scalar input-convex network.

    wx[i], b[i] have one entry per unit of layer i; wz[i-1] connects layer
    i-1 to layer i. The final layer has a single linear unit.
    """

    hidden_widths: tuple = DEFAULT_WIDTHS
    wx: list = field(default_factory=list)
    wz: list = field(default_factory=list)
    b: list = field(default_factory=list)

    family = "icnn"

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if not self.wx:
            widths = list(self.hidden_widths) + [1]
            prev = None
            for width in widths:
                self.wx.append(np.zeros(width))
                self.b.append(np.zeros(width))
                if prev is not None:
                    self.wz.append(np.zeros((prev, width)))
                prev = width
        self.wx = [np.asarray(a, dtype=float) for a in self.wx]
        self.wz = [np.asarray(a, dtype=float) for a in self.wz]
        self.b = [np.asarray(a, dtype=float) for a in self.b]

    @classmethod
    def random(cls, rng: np.random.Generator, hidden_widths=DEFAULT_WIDTHS) -> "IcnnParams":
        """Raw weights ~ N(mean, INIT_STD) with means picked so effective
        weights scale like 1/fan-in; keeps initial outputs order one on the
        normalized input range despite the squared-softplus amplification.
        """
        params = cls(hidden_widths=tuple(hidden_widths))
        params.wx = [rng.normal(-np.log(2.0), INIT_STD, a.shape) for a in params.wx]
        params.wz = [
            rng.normal(-np.log(4.0 * a.shape[0]), INIT_STD, a.shape) for a in params.wz
        ]
        return params

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.wx + self.wz + self.b)

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._ordered()])

    def set_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        offset = 0
        for a in self._ordered():
            a[...] = vec[offset : offset + a.size].reshape(a.shape)
            offset += a.size

    def _ordered(self):
        # Layer by layer: wx, wz (absent for the first layer), b.
        out = []
        for i in range(len(self.wx)):
            out.append(self.wx[i])
            if i > 0:
                out.append(self.wz[i - 1])
            out.append(self.b[i])
        return out

    def project(self) -> None:
        pass  # raw weights are unconstrained; exp() keeps effective weights positive

    def value(self, x):
        return icnn_value(self, x)

    def first_derivative(self, x):
        return icnn_first_derivative(self, x)

    def second_derivative(self, x):
        return icnn_second_derivative(self, x)

    def first_derivative_param_grad(self, x, seeds) -> np.ndarray:
        return icnn_first_derivative_param_grad(self, x, seeds)

    def to_config(self) -> dict:
        return {
            "family": "icnn",
            "hidden_widths": list(self.hidden_widths),
            "wx": [a.tolist() for a in self.wx],
            "wz": [a.tolist() for a in self.wz],
            "b": [a.tolist() for a in self.b],
        }

    @classmethod
    def from_config(cls, config: dict) -> "IcnnParams":
        return cls(
            hidden_widths=tuple(config["hidden_widths"]),
            wx=[np.array(a) for a in config["wx"]],
            wz=[np.array(a) for a in config["wz"]],
            b=[np.array(a) for a in config["b"]],
        )


def _forward(params: IcnnParams, x: np.ndarray, want_grad2: bool = True):
    """Propagate (Z, dZ/dx, d2Z/dx2) through the layers; returns scalars per sample."""
    n_layers = len(params.wx)
    z = s = s2 = None
    for i in range(n_layers):
        c = np.exp(params.wx[i])[:, None]
        bias = params.b[i][:, None]
        if i == 0:
            u = x[None, :] * c + bias
            du = np.broadcast_to(c, u.shape)
            d2u = np.zeros_like(u)
        else:
            a_mat = np.exp(params.wz[i - 1]).T
            u = a_mat @ z + x[None, :] * c + bias
            du = a_mat @ s + c
            d2u = a_mat @ s2
        if i == n_layers - 1:
            value, d1, d2 = u[0], du[0], d2u[0]
            break
        sp = _softplus(u)
        sig = expit(u)
        phi1 = 2.0 * sp * sig
        phi2 = 2.0 * (sig * sig + sp * sig * (1.0 - sig))
        z = sp * sp
        s = phi1 * du
        s2 = phi2 * du * du + phi1 * d2u if want_grad2 else np.zeros_like(u)
    if not np.all(np.isfinite(value)):
        raise NumericalError("non-finite intermediate in convex network evaluation")
    return value, d1, d2


def _eval(params: IcnnParams, x, order: int):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    out = _forward(params, np.atleast_1d(x), want_grad2=order == 2)[order]
    return float(out[0]) if scalar else out


def icnn_value(params: IcnnParams, x):
    """Network output; convex and non-decreasing in x."""
    return _eval(params, x, order=0)


def icnn_first_derivative(params: IcnnParams, x):
    """Exact d(value)/dx, propagated forward; >= 0 by construction."""
    return _eval(params, x, order=1)


def icnn_second_derivative(params: IcnnParams, x):
    """Exact d2(value)/dx2, propagated forward; >= 0 by construction."""
    return _eval(params, x, order=2)


def icnn_first_derivative_param_grad(params: IcnnParams, x, seeds) -> np.ndarray:
    """Gradient of sum_n seeds[n] * first_derivative(x[n]) w.r.t. raw parameters.

    Reverse pass over the forward (Z, dZ/dx) recursion; ordering matches
    get_params.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    seeds = np.atleast_1d(np.asarray(seeds, dtype=float))
    n_layers = len(params.wx)

    # Forward, caching what the reverse sweep needs.
    cache = []
    z = s = None
    for i in range(n_layers):
        c = np.exp(params.wx[i])[:, None]
        if i == 0:
            u = x[None, :] * c + params.b[i][:, None]
            t = np.broadcast_to(c, u.shape)
            a_mat = None
        else:
            a_mat = np.exp(params.wz[i - 1]).T
            u = a_mat @ z + x[None, :] * c + params.b[i][:, None]
            t = a_mat @ s + c
        if i == n_layers - 1:
            cache.append((a_mat, c, None, None, None, z, s))
            break
        sp = _softplus(u)
        sig = expit(u)
        phi1 = 2.0 * sp * sig
        phi2 = 2.0 * (sig * sig + sp * sig * (1.0 - sig))
        cache.append((a_mat, c, t, phi1, phi2, z, s))
        s = phi1 * t
        z = sp * sp

    grad_wx = [np.zeros_like(a) for a in params.wx]
    grad_wz = [np.zeros_like(a) for a in params.wz]
    grad_b = [np.zeros_like(a) for a in params.b]

    # Head: d1 = a_mat @ s_prev + c (or just c when there are no hidden layers).
    a_mat, c, _, _, _, z_prev, s_prev = cache[-1]
    lam = seeds[None, :]
    grad_wx[-1] += (lam.sum(axis=1)) * c[:, 0]
    lam_z = lam_s = None
    if a_mat is not None:
        grad_a = lam @ s_prev.T
        grad_wz[-1] += grad_a.T * np.exp(params.wz[-1])
        lam_s = a_mat.T @ lam
        lam_z = np.zeros_like(lam_s)

    for i in range(n_layers - 2, -1, -1):
        a_mat, c, t, phi1, phi2, z_prev, s_prev = cache[i]
        lam_t = lam_s * phi1
        lam_u = lam_z * phi1 + lam_s * t * phi2
        grad_wx[i] += (lam_u @ x + lam_t.sum(axis=1)) * c[:, 0]
        grad_b[i] += lam_u.sum(axis=1)
        if a_mat is not None:
            grad_a = lam_u @ z_prev.T + lam_t @ s_prev.T
            grad_wz[i - 1] += grad_a.T * np.exp(params.wz[i - 1])
            lam_z = a_mat.T @ lam_u
            lam_s = a_mat.T @ lam_t

    chunks = []
    for i in range(n_layers):
        chunks.append(grad_wx[i].ravel())
        if i > 0:
            chunks.append(grad_wz[i - 1].ravel())
        chunks.append(grad_b[i].ravel())
    return np.concatenate(chunks)
