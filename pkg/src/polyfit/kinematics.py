"""Deformation kinematics and invariants for incompressible hyperelasticity.

All deformation measures derive from the right Cauchy-Green tensor
C = F^T F, so superimposed rigid rotations drop out by construction.
Five scalar invariants are used throughout:

    I1  = tr C
    I2  = ((tr C)^2 - tr C^2) / 2
    I3  = det C
    I4a = C : a0 x a0        (fiber family along a0)
    I4s = C : s0 x s0        (fiber family along s0)
"""

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidDeformationError,
    InvalidInvariantError,
    InvalidParameterError,
)

INVARIANT_KEYS = ("i1", "i2", "i4a", "i4s")

# Reference-state offsets: I1 = I2 = 3 and I4 = 1 at F = Identity.
REFERENCE_OFFSETS: Mapping[str, float] = MappingProxyType(
    {"i1": 3.0, "i2": 3.0, "i4a": 1.0, "i4s": 1.0}
)

_UNIT_TOL = 1e-12
_DET_GUARD = 1e-14


def _unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise InvalidParameterError(f"expected a 3-vector, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise InvalidParameterError(f"direction {v} is not a unit vector")
    return v


@dataclass(frozen=True)
class MaterialFrame:
    """Two orthogonal unit vectors marking the material fiber directions."""

    a0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    s0: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "a0", _unit_vector(self.a0))
        object.__setattr__(self, "s0", _unit_vector(self.s0))

    def swapped(self) -> "MaterialFrame":
        return MaterialFrame(a0=self.s0.copy(), s0=self.a0.copy())


DEFAULT_FRAME = MaterialFrame()


@dataclass(frozen=True)
class DeformationState:
    """A deformation gradient F with det F > 0."""

    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.shape != (3, 3):
            raise InvalidDeformationError(f"F must be 3x3, got shape {F.shape}")
        if np.linalg.det(F) <= 0.0:
            raise InvalidDeformationError("det F must be positive")
        object.__setattr__(self, "F", F)

    @property
    def C(self) -> np.ndarray:
        return self.F.T @ self.F

    @property
    def J(self) -> float:
        return float(np.linalg.det(self.F))

    @classmethod
    def from_stretches(cls, lam_x: float, lam_y: float, lam_z: float) -> "DeformationState":
        return cls(np.diag([float(lam_x), float(lam_y), float(lam_z)]))

    @classmethod
    def incompressible_biaxial(cls, lam_x: float, lam_y: float) -> "DeformationState":
        """Diagonal F with lam_z = 1/(lam_x lam_y) so that det F = 1."""
        if lam_x <= 0.0 or lam_y <= 0.0:
            raise InvalidDeformationError("stretches must be positive")
        return cls.from_stretches(lam_x, lam_y, 1.0 / (lam_x * lam_y))

    @classmethod
    def uniaxial(cls, lam: float) -> "DeformationState":
        """Incompressible uniaxial stretch: (lam, lam^-1/2, lam^-1/2)."""
        if lam <= 0.0:
            raise InvalidDeformationError("stretch must be positive")
        s = 1.0 / np.sqrt(lam)
        return cls.from_stretches(lam, s, s)

    @classmethod
    def pure_shear(cls, lam: float) -> "DeformationState":
        """Incompressible pure shear: (lam, 1, 1/lam)."""
        if lam <= 0.0:
            raise InvalidDeformationError("stretch must be positive")
        return cls.from_stretches(lam, 1.0, 1.0 / lam)

    @classmethod
    def equibiaxial(cls, lam: float) -> "DeformationState":
        """Incompressible equibiaxial stretch: (lam, lam, lam^-2)."""
        if lam <= 0.0:
            raise InvalidDeformationError("stretch must be positive")
        return cls.from_stretches(lam, lam, lam ** -2)


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-invariant shift/scale (a_i, b_i) used to map I_i to ~[0, 3]."""

    offsets: Mapping[str, float] = REFERENCE_OFFSETS
    scales: Mapping[str, float] = field(
        default_factory=lambda: {k: 1.0 for k in INVARIANT_KEYS}
    )

    def __post_init__(self):
        for key in INVARIANT_KEYS:
            if key not in self.offsets or key not in self.scales:
                raise ConfigurationError(f"missing normalization constants for {key}")
            if self.scales[key] <= 0.0:
                raise ConfigurationError(f"scale b for {key} must be positive")
        object.__setattr__(self, "offsets", dict(self.offsets))
        object.__setattr__(self, "scales", dict(self.scales))

    def __eq__(self, other):
        if not isinstance(other, NormalizationConstants):
            return NotImplemented
        return self.offsets == other.offsets and self.scales == other.scales

    @classmethod
    def reference(cls) -> "NormalizationConstants":
        return cls()


@dataclass(frozen=True)
class InvariantBundle:
    """Raw invariants of C, optionally with isochoric and normalized variants."""

    i1: float
    i2: float
    i3: float
    i4a: float
    i4s: float
    iso: Mapping[str, float] | None = None
    hat: Mapping[str, float] | None = None
    constants: NormalizationConstants | None = None

    def raw(self, key: str) -> float:
        return getattr(self, key)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.i1, self.i2, self.i3, self.i4a, self.i4s)


@dataclass(frozen=True)
class MixedInvariant:
    """Convex blend k = alpha*hat_i + (1-alpha)*hat_j of two normalized invariants."""

    value: float
    alpha: float
    indices: tuple[str, str]


def invariants_from_deformation(
    state: DeformationState, frame: MaterialFrame = DEFAULT_FRAME
) -> InvariantBundle:
    """Compute (I1, I2, I3, I4a, I4s) from the deformation state."""
    C = state.C
    tr_c = float(np.trace(C))
    i1 = tr_c
    i2 = 0.5 * (tr_c ** 2 - float(np.trace(C @ C)))
    i3 = float(np.linalg.det(C))
    i4a = float(frame.a0 @ C @ frame.a0)
    i4s = float(frame.s0 @ C @ frame.s0)
    return InvariantBundle(i1=i1, i2=i2, i3=i3, i4a=i4a, i4s=i4s)


def isochoric_invariants(bundle: InvariantBundle) -> InvariantBundle:
    """Attach the volume-preserving invariants, scaled by powers of J = sqrt(I3)."""
    if bundle.i3 <= 0.0:
        raise InvalidInvariantError("I3 must be positive")
    j = np.sqrt(bundle.i3)
    iso = {
        "i1": bundle.i1 * j ** (-2.0 / 3.0),
        "i2": bundle.i2 * j ** (-4.0 / 3.0),
        "i4a": bundle.i4a * j ** (-2.0 / 3.0),
        "i4s": bundle.i4s * j ** (-2.0 / 3.0),
    }
    return replace(bundle, iso=iso)


def normalize_invariants(
    bundle: InvariantBundle, constants: NormalizationConstants
) -> InvariantBundle:
    """Attach hat_i = (I_i - a_i) / b_i and remember the constants used."""
    hat = {
        key: (bundle.raw(key) - constants.offsets[key]) / constants.scales[key]
        for key in INVARIANT_KEYS
    }
    return replace(bundle, hat=hat, constants=constants)


def mixed_invariant(
    hat_i: float, hat_j: float, alpha: float, indices: tuple[str, str] = ("i1", "i2")
) -> MixedInvariant:
    """Blend two normalized invariants; alpha in [0, 1] keeps the result >= 0."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    value = alpha * hat_i + (1.0 - alpha) * hat_j
    return MixedInvariant(value=value, alpha=alpha, indices=indices)


def _inverse_3x3(C: np.ndarray) -> np.ndarray:
    # Closed-form adjugate inverse; cheap and keeps the determinant guard explicit.
    det = (
        C[0, 0] * (C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1])
        - C[0, 1] * (C[1, 0] * C[2, 2] - C[1, 2] * C[2, 0])
        + C[0, 2] * (C[1, 0] * C[2, 1] - C[1, 1] * C[2, 0])
    )
    if abs(det) < _DET_GUARD:
        raise InvalidDeformationError("C is numerically singular")
    adj = np.empty((3, 3))
    adj[0, 0] = C[1, 1] * C[2, 2] - C[1, 2] * C[2, 1]
    adj[0, 1] = C[0, 2] * C[2, 1] - C[0, 1] * C[2, 2]
    adj[0, 2] = C[0, 1] * C[1, 2] - C[0, 2] * C[1, 1]
    adj[1, 0] = C[1, 2] * C[2, 0] - C[1, 0] * C[2, 2]
    adj[1, 1] = C[0, 0] * C[2, 2] - C[0, 2] * C[2, 0]
    adj[1, 2] = C[0, 2] * C[1, 0] - C[0, 0] * C[1, 2]
    adj[2, 0] = C[1, 0] * C[2, 1] - C[1, 1] * C[2, 0]
    adj[2, 1] = C[0, 1] * C[2, 0] - C[0, 0] * C[2, 1]
    adj[2, 2] = C[0, 0] * C[1, 1] - C[0, 1] * C[1, 0]
    return adj / det


def invariant_c_derivatives(
    state: DeformationState, frame: MaterialFrame = DEFAULT_FRAME
) -> dict[str, np.ndarray]:
    """Derivatives of the five invariants with respect to C.

    Returns symmetric 3x3 matrices keyed 'i1', 'i2', 'i3', 'i4a', 'i4s':

        dI1/dC  = Identity
        dI2/dC  = I1 * Identity - C
        dI3/dC  = I3 * C^-1
        dI4a/dC = a0 x a0,   dI4s/dC = s0 x s0
    """
    C = state.C
    eye = np.eye(3)
    i1 = float(np.trace(C))
    i3 = float(np.linalg.det(C))
    return {
        "i1": eye,
        "i2": i1 * eye - C,
        "i3": i3 * _inverse_3x3(C),
        "i4a": np.outer(frame.a0, frame.a0),
        "i4s": np.outer(frame.s0, frame.s0),
    }
