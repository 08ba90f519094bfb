"""Nominal stress responses for incompressible benchmark loading protocols.

Scalar protocols (stress in the pulled direction, fully determined by one
stretch):

    UT  P = 2(lam - lam^-2) (psi_1 + psi_2 / lam)
    PS  P = 2(lam - lam^-3) (psi_1 + psi_2)
    ET  P = 2(lam - lam^-5) (psi_1 + lam^2 psi_2)

General biaxial loading resolves the through-thickness stretch from
incompressibility and the pressure multiplier from plane stress. psi_k
denotes the energy derivative with respect to raw invariant k, supplied by
any model exposing invariant_derivatives(bundle).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDeformationError, ProtocolMismatchError
from .kinematics import (
    DEFAULT_FRAME,
    DeformationState,
    MaterialFrame,
    invariants_from_deformation,
)

SCALAR_MODES = ("UT", "PS", "ET")
BIAXIAL_MODES = ("SX", "SY", "EB")
ALL_MODES = SCALAR_MODES + BIAXIAL_MODES

_STATE_BUILDERS = {
    "UT": DeformationState.uniaxial,
    "PS": DeformationState.pure_shear,
    "ET": DeformationState.equibiaxial,
}


@dataclass(frozen=True)
class StressResponse:
    """In-plane nominal stresses of a biaxial state plus the solved unknowns."""

    p_xx: float
    p_yy: float
    pressure: float
    lam_z: float


def biaxial_stretches(mode: str, lam: float) -> tuple[float, float]:
    """(lam_x, lam_y) for the strip/equibiaxial protocols driven by one stretch."""
    if mode == "SX":
        return lam, 1.0
    if mode == "SY":
        return 1.0, lam
    if mode == "EB":
        return lam, lam
    raise ProtocolMismatchError(f"{mode!r} is not a biaxial protocol")


def _require_isotropic(model) -> None:
    if getattr(model, "anisotropic", False):
        raise ProtocolMismatchError(
            "scalar protocols are defined for isotropic models only"
        )


def _axis_weights(frame: MaterialFrame) -> tuple[np.ndarray, np.ndarray]:
    # The closed-form biaxial solution assumes fibers along coordinate axes;
    # off-axis fibers would shear the specimen.
    for v in (frame.a0, frame.s0):
        if np.max(np.abs(v)) < 1.0 - 1e-12:
            raise ProtocolMismatchError("biaxial formulas require axis-aligned fibers")
    return frame.a0 ** 2, frame.s0 ** 2


def stress_uniaxial(model, lam: float) -> float:
    """Nominal stress under incompressible uniaxial tension."""
    _require_isotropic(model)
    state = DeformationState.uniaxial(lam)
    d = model.invariant_derivatives(invariants_from_deformation(state))
    return 2.0 * (lam - lam ** -2) * (d["i1"] + d["i2"] / lam)


def stress_pure_shear(model, lam: float) -> float:
    """Nominal stress under pure shear of a wide thin specimen."""
    _require_isotropic(model)
    state = DeformationState.pure_shear(lam)
    d = model.invariant_derivatives(invariants_from_deformation(state))
    return 2.0 * (lam - lam ** -3) * (d["i1"] + d["i2"])


def stress_equibiaxial(model, lam: float) -> float:
    """Nominal stress under equibiaxial tension (equal in both directions)."""
    _require_isotropic(model)
    state = DeformationState.equibiaxial(lam)
    d = model.invariant_derivatives(invariants_from_deformation(state))
    return 2.0 * (lam - lam ** -5) * (d["i1"] + lam ** 2 * d["i2"])


def stress_biaxial(
    model, lam_x: float, lam_y: float, frame: MaterialFrame = DEFAULT_FRAME
) -> StressResponse:
    """In-plane nominal stresses for an incompressible biaxial state.

    lam_z follows from incompressibility, the pressure from the plane
    stress condition through the thickness; both are reported back.
    """
    if lam_x <= 0.0 or lam_y <= 0.0:
        raise InvalidDeformationError("stretches must be positive")
    state = DeformationState.incompressible_biaxial(lam_x, lam_y)
    bundle = invariants_from_deformation(state, frame)
    d = model.invariant_derivatives(bundle)
    wa, ws = _axis_weights(frame)
    i1 = bundle.i1
    lam_z = 1.0 / (lam_x * lam_y)

    def plane(k):  # sum of fiber contributions seen by direction k
        return d["i4a"] * wa[k] + d["i4s"] * ws[k]

    pressure = 2.0 * lam_z ** 2 * (d["i1"] + d["i2"] * (i1 - lam_z ** 2) + plane(2))
    p_xx = (
        2.0 * lam_x * (d["i1"] + d["i2"] * (i1 - lam_x ** 2) + plane(0))
        - pressure / lam_x
    )
    p_yy = (
        2.0 * lam_y * (d["i1"] + d["i2"] * (i1 - lam_y ** 2) + plane(1))
        - pressure / lam_y
    )
    return StressResponse(p_xx=p_xx, p_yy=p_yy, pressure=pressure, lam_z=lam_z)


def stress_for_mode(
    model, mode: str, lam_x, lam_y=None, frame: MaterialFrame = DEFAULT_FRAME
):
    """Dispatch one sample of any protocol; biaxial modes return (P_xx, P_yy)."""
    if mode == "UT":
        return stress_uniaxial(model, lam_x)
    if mode == "PS":
        return stress_pure_shear(model, lam_x)
    if mode == "ET":
        return stress_equibiaxial(model, lam_x)
    if mode in BIAXIAL_MODES:
        response = stress_biaxial(model, lam_x, lam_y, frame)
        return response.p_xx, response.p_yy
    raise ProtocolMismatchError(f"unknown loading mode {mode!r}")


def stress_coefficients(
    mode: str, lam_x: np.ndarray, lam_y=None, frame: MaterialFrame = DEFAULT_FRAME
) -> list:
    """Stress as a linear map over the energy derivatives, vectorized.

    Returns one (component_name, {invariant_key: coefficient_array}) entry
    per stress component, such that P_comp = sum_k coeff[k] * psi_k. Keeps
    the training loss and the closed-form stress functions on the same
    formulas.
    """
    lam_x = np.asarray(lam_x, dtype=float)
    zeros = np.zeros_like(lam_x)
    if mode == "UT":
        pre = 2.0 * (lam_x - lam_x ** -2)
        return [("xx", {"i1": pre, "i2": pre / lam_x, "i4a": zeros, "i4s": zeros})]
    if mode == "PS":
        pre = 2.0 * (lam_x - lam_x ** -3)
        return [("xx", {"i1": pre, "i2": pre, "i4a": zeros, "i4s": zeros})]
    if mode == "ET":
        pre = 2.0 * (lam_x - lam_x ** -5)
        return [("xx", {"i1": pre, "i2": pre * lam_x ** 2, "i4a": zeros, "i4s": zeros})]
    if mode in BIAXIAL_MODES:
        lam_y = np.asarray(lam_y, dtype=float)
        wa, ws = _axis_weights(frame)
        lam_z = 1.0 / (lam_x * lam_y)
        i1 = lam_x ** 2 + lam_y ** 2 + lam_z ** 2
        rows = []
        for comp, lam_d, idx in (("xx", lam_x, 0), ("yy", lam_y, 1)):
            ratio = 2.0 * lam_z ** 2 / lam_d  # pressure contribution per psi_k
            rows.append(
                (
                    comp,
                    {
                        "i1": 2.0 * lam_d - ratio,
                        "i2": 2.0 * lam_d * (i1 - lam_d ** 2) - ratio * (i1 - lam_z ** 2),
                        "i4a": 2.0 * lam_d * wa[idx] - ratio * wa[2],
                        "i4s": 2.0 * lam_d * ws[idx] - ratio * ws[2],
                    },
                )
            )
        return rows
    raise ProtocolMismatchError(f"unknown loading mode {mode!r}")
