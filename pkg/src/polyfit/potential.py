"""Convex scalar-term banks: the shared polyconvex energy expansion.

A bank is an ordered list of convex non-decreasing scalar terms, each
reading either one normalized invariant or a convex blend of two. The
total energy is the sum of the terms; derivatives with respect to the raw
invariants follow by the chain rule through the normalization constants
and blend weights.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .cann import CannTermParams
from .errors import ConfigurationError, NumericalError
from .icnn import IcnnParams
from .kinematics import (
    INVARIANT_KEYS,
    InvariantBundle,
    MixedInvariant,
    NormalizationConstants,
    mixed_invariant,
    normalize_invariants,
)
from .node import NodeParams

BACKENDS = {"cann": CannTermParams, "icnn": IcnnParams, "node": NodeParams}
ANSATZE = ("reduced", "full")
ANISOTROPIC_KEYS = ("i4a", "i4s")

SERIAL_FORMAT = "polyfit-bank"
SERIAL_VERSION = 1


def default_targets(anisotropic: bool, ansatz: str) -> list[tuple[str, ...]]:
    """Term menu per benchmark material.

    Isotropic rubber uses the two principal invariants. Anisotropic tissue
    adds the fiber blend (reduced) or the full set of pairwise blends.
    """
    if ansatz not in ANSATZE:
        raise ConfigurationError(f"unknown ansatz {ansatz!r}")
    if not anisotropic:
        return [("i1",), ("i2",)]
    if ansatz == "reduced":
        return [("i1",), ("i2",), ("i4a", "i4s")]
    return [
        ("i1",),
        ("i2",),
        ("i1", "i2"),
        ("i1", "i4a"),
        ("i1", "i4s"),
        ("i4a", "i4s"),
    ]


@dataclass
class ConvexScalarTerm:
    """One convex non-decreasing scalar function of a single (blended) input."""

    target: tuple
    backend: object
    raw_alpha: float | None = None

    def __post_init__(self):
        self.target = tuple(self.target)
        for key in self.target:
            if key not in INVARIANT_KEYS:
                raise ConfigurationError(f"unknown invariant target {key!r}")
        if len(self.target) == 2 and self.raw_alpha is None:
            self.raw_alpha = 0.0
        if len(self.target) == 1:
            self.raw_alpha = None
        if len(self.target) not in (1, 2):
            raise ConfigurationError("targets are single invariants or pairs")

    @property
    def is_mixed(self) -> bool:
        return len(self.target) == 2

    @property
    def alpha(self) -> float | None:
        # Logistic squash keeps alpha in [0, 1] for any raw parameter value.
        return float(expit(self.raw_alpha)) if self.is_mixed else None

    def input_value(self, hat: dict) -> float:
        if self.is_mixed:
            i, j = self.target
            return self.alpha * hat[i] + (1.0 - self.alpha) * hat[j]
        return hat[self.target[0]]


@dataclass
class EnergyDerivatives:
    """Energy derivatives with respect to the raw invariants."""

    first: dict
    second: dict
    cross: dict = field(default_factory=dict)


@dataclass
class ConvexTermBank:
    """Ordered convex terms plus the normalization they were built against."""

    terms: list
    constants: NormalizationConstants
    ansatz: str = "reduced"
    family: str = ""

    def __post_init__(self):
        seen = set()
        for term in self.terms:
            if term.target in seen:
                raise ConfigurationError(f"duplicate term target {term.target}")
            seen.add(term.target)
        if not self.family and self.terms:
            self.family = self.terms[0].backend.family
        for term in self.terms:
            if term.backend.family != self.family:
                raise ConfigurationError("all terms in a bank share one backend family")

    @property
    def anisotropic(self) -> bool:
        return any(k in ANISOTROPIC_KEYS for t in self.terms for k in t.target)

    def active_invariants(self) -> list[str]:
        keys = {k for t in self.terms for k in t.target}
        return [k for k in INVARIANT_KEYS if k in keys]

    # -- evaluation ---------------------------------------------------------

    def normalize(self, bundle: InvariantBundle) -> InvariantBundle:
        return normalize_invariants(bundle, self.constants)

    def mixed_invariants(self, bundle: InvariantBundle) -> list[MixedInvariant]:
        if bundle.hat is None:
            bundle = self.normalize(bundle)
        out = []
        for term in self.terms:
            if term.is_mixed:
                i, j = term.target
                out.append(
                    mixed_invariant(bundle.hat[i], bundle.hat[j], term.alpha, (i, j))
                )
        return out

    def derivatives(self, bundle: InvariantBundle) -> EnergyDerivatives:
        bundle = self.normalize(bundle)
        return energy_derivatives(self, bundle, self.mixed_invariants(bundle))

    def invariant_derivatives(self, bundle: InvariantBundle) -> dict:
        return self.derivatives(bundle).first

    def energy(self, bundle: InvariantBundle) -> float:
        return energy_value(self, self.normalize(bundle))

    # -- trainable parameters -----------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(t.backend.n_params + (1 if t.is_mixed else 0) for t in self.terms)

    def get_params(self) -> np.ndarray:
        chunks = []
        for term in self.terms:
            chunks.append(term.backend.get_params())
            if term.is_mixed:
                chunks.append(np.array([term.raw_alpha]))
        return np.concatenate(chunks) if chunks else np.zeros(0)

    def set_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        offset = 0
        for term in self.terms:
            size = term.backend.n_params
            term.backend.set_params(vec[offset : offset + size])
            offset += size
            if term.is_mixed:
                term.raw_alpha = float(vec[offset])
                offset += 1
        if offset != vec.size:
            raise ConfigurationError("parameter vector length mismatch")

    def project(self) -> None:
        for term in self.terms:
            term.backend.project()

    # -- serialization --------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": SERIAL_FORMAT,
            "version": SERIAL_VERSION,
            "family": self.family,
            "ansatz": self.ansatz,
            "constants": {
                "offsets": self.constants.offsets,
                "scales": self.constants.scales,
            },
            "terms": [
                {
                    "target": list(t.target),
                    "raw_alpha": t.raw_alpha,
                    "backend": t.backend.to_config(),
                }
                for t in self.terms
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConvexTermBank":
        doc = json.loads(text)
        if doc.get("format") != SERIAL_FORMAT or doc.get("version") != SERIAL_VERSION:
            raise ConfigurationError("unrecognized model document")
        constants = NormalizationConstants(
            offsets=doc["constants"]["offsets"], scales=doc["constants"]["scales"]
        )
        terms = []
        for entry in doc["terms"]:
            backend_cls = BACKENDS[entry["backend"]["family"]]
            terms.append(
                ConvexScalarTerm(
                    target=tuple(entry["target"]),
                    backend=backend_cls.from_config(entry["backend"]),
                    raw_alpha=entry["raw_alpha"],
                )
            )
        return cls(
            terms=terms, constants=constants, ansatz=doc["ansatz"], family=doc["family"]
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ConvexTermBank":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"model file not found: {path}")
        return cls.from_json(path.read_text())


def energy_derivatives(
    bank: ConvexTermBank, bundle: InvariantBundle, mixed: list | None = None
) -> EnergyDerivatives:
    """Chain-rule the term derivatives back to the raw invariants.

    Single terms contribute psi'(hat_k)/b_k; a blend on (i, j) splits its
    slope with weights alpha/b_i and (1-alpha)/b_j, and its curvature with
    the squared factors plus one cross contribution.
    """
    if bundle.hat is None:
        raise ConfigurationError("bundle must be normalized before evaluation")
    if bundle.constants != bank.constants:
        raise ConfigurationError("bundle was normalized with different constants")
    if mixed is None:
        mixed = bank.mixed_invariants(bundle)
    mixed_by_pair = {m.indices: m for m in mixed}
    scales = bank.constants.scales
    first = {k: 0.0 for k in INVARIANT_KEYS}
    second = {k: 0.0 for k in INVARIANT_KEYS}
    cross: dict = {}
    for term in bank.terms:
        if term.is_mixed:
            i, j = term.target
            blend = mixed_by_pair.get((i, j))
            if blend is None:
                raise ConfigurationError(f"missing mixed invariant for target {(i, j)}")
            x, alpha = blend.value, blend.alpha
            d1 = term.backend.first_derivative(x)
            d2 = term.backend.second_derivative(x)
            first[i] += d1 * alpha / scales[i]
            first[j] += d1 * (1.0 - alpha) / scales[j]
            second[i] += d2 * (alpha / scales[i]) ** 2
            second[j] += d2 * ((1.0 - alpha) / scales[j]) ** 2
            cross[(i, j)] = cross.get((i, j), 0.0) + d2 * alpha * (1.0 - alpha) / (
                scales[i] * scales[j]
            )
        else:
            k = term.target[0]
            x = bundle.hat[k]
            first[k] += term.backend.first_derivative(x) / scales[k]
            second[k] += term.backend.second_derivative(x) / scales[k] ** 2
    return EnergyDerivatives(first=first, second=second, cross=cross)


def energy_value(bank: ConvexTermBank, bundle: InvariantBundle) -> float:
    """Total energy, gauged to vanish at the reference state."""
    if bundle.hat is None:
        raise ConfigurationError("bundle must be normalized before evaluation")
    if bundle.constants != bank.constants:
        raise ConfigurationError("bundle was normalized with different constants")
    total = 0.0
    for term in bank.terms:
        x = term.input_value(bundle.hat)
        total += term.backend.value(x) - term.backend.value(0.0)
    if not np.isfinite(total):
        raise NumericalError("energy evaluation produced a non-finite value")
    return float(total)


def new_bank(
    family: str,
    constants: NormalizationConstants,
    rng: np.random.Generator,
    anisotropic: bool = False,
    ansatz: str = "reduced",
    icnn_widths=(4, 4),
    node_widths=(5, 5),
    node_steps: int = 20,
) -> ConvexTermBank:
    """Randomly initialized bank with the standard term menu for the material."""
    if family not in BACKENDS:
        raise ConfigurationError(f"unknown model family {family!r}")
    terms = []
    for target in default_targets(anisotropic, ansatz):
        if family == "cann":
            backend = CannTermParams.random(rng)
        elif family == "icnn":
            backend = IcnnParams.random(rng, hidden_widths=icnn_widths)
        else:
            backend = NodeParams.random(rng, hidden_widths=node_widths, steps=node_steps)
        raw_alpha = float(rng.normal(0.0, 1.0)) if len(target) == 2 else None
        terms.append(ConvexScalarTerm(target=target, backend=backend, raw_alpha=raw_alpha))
    return ConvexTermBank(terms=terms, constants=constants, ansatz=ansatz, family=family)


def convexity_report(bank: ConvexTermBank, x_max: float = 4.5, n: int = 200) -> dict:
    """Minimum slope/curvature of every term on [0, x_max]: the polyconvexity witness."""
    grid = np.linspace(0.0, x_max, n)
    per_term = []
    for term in bank.terms:
        d1 = np.asarray(term.backend.first_derivative(grid))
        d2 = np.asarray(term.backend.second_derivative(grid))
        per_term.append(
            {"target": term.target, "min_first": float(d1.min()), "min_second": float(d2.min())}
        )
    return {
        "min_first": min(t["min_first"] for t in per_term),
        "min_second": min(t["min_second"] for t in per_term),
        "per_term": per_term,
    }
