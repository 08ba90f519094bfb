"""Independent verification oracles used across the test suite.

These deliberately avoid the closed-form stress functions in the package:
stresses are rebuilt from the full tensor relation S = 2 dpsi/dC - p C^-1
with the pressure solved from traction-free directions, or from symbolic
differentiation of the substituted strain energy.
"""

import numpy as np
import sympy as sp

from polyfit.kinematics import (
    DEFAULT_FRAME,
    invariant_c_derivatives,
    invariants_from_deformation,
)

FREE_AXES = {"UT": (1, 2), "PS": (2,), "ET": (2,)}


def tensor_nominal_stress(model, state, frame=DEFAULT_FRAME, free_axis=2):
    """Nominal stress tensor P = F S with p solved from S[free, free] = 0."""
    bundle = invariants_from_deformation(state, frame)
    d = model.invariant_derivatives(bundle)
    dC = invariant_c_derivatives(state, frame)
    dpsi = sum(d[k] * dC[k] for k in ("i1", "i2", "i4a", "i4s"))
    C = state.C
    C_inv = np.linalg.inv(C)
    p = 2.0 * dpsi[free_axis, free_axis] / C_inv[free_axis, free_axis]
    S = 2.0 * dpsi - p * C_inv
    return state.F @ S, p


def central_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def _uniaxial_invariants(lam):
    return lam ** 2 + 2 / lam, 2 * lam + lam ** -2


def _pure_shear_invariants(lam):
    i = lam ** 2 + 1 + lam ** -2
    return i, i


def _equibiaxial_invariants(lam):
    return 2 * lam ** 2 + lam ** -4, lam ** 4 + 2 * lam ** -2


def symbolic_scalar_stress(mode: str, energy_of_invariants):
    """P(lam) for a scalar protocol by symbolic differentiation of W(lam).

    `energy_of_invariants(i1, i2)` returns a sympy expression; the result is
    a vectorized numpy callable.
    """
    lam = sp.Symbol("lam", positive=True)
    invariants = {
        "UT": _uniaxial_invariants,
        "PS": _pure_shear_invariants,
        "ET": _equibiaxial_invariants,
    }[mode](lam)
    energy = energy_of_invariants(*invariants)
    factor = {"UT": 1, "PS": 1, "ET": sp.Rational(1, 2)}[mode]  # ET pulls two axes
    stress = sp.diff(energy, lam) * factor
    return sp.lambdify(lam, sp.simplify(stress), "numpy")


def symbolic_biaxial_stress(energy_of_invariants):
    """(P_xx, P_yy)(lam_x, lam_y) from W with lam_z = 1/(lam_x lam_y) substituted.

    `energy_of_invariants(i1, i2, i4a, i4s)` returns a sympy expression for
    fibers along the coordinate axes.
    """
    lx, ly = sp.symbols("lx ly", positive=True)
    lz = 1 / (lx * ly)
    i1 = lx ** 2 + ly ** 2 + lz ** 2
    i2 = lx ** 2 * ly ** 2 + lx ** 2 * lz ** 2 + ly ** 2 * lz ** 2
    energy = energy_of_invariants(i1, i2, lx ** 2, ly ** 2)
    p_xx = sp.lambdify((lx, ly), sp.diff(energy, lx), "numpy")
    p_yy = sp.lambdify((lx, ly), sp.diff(energy, ly), "numpy")
    return p_xx, p_yy


def random_deformation(rng, scale=0.3):
    """Random deformation gradient with positive determinant."""
    while True:
        F = np.eye(3) + scale * rng.standard_normal((3, 3))
        if np.linalg.det(F) > 0.05:
            return F


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
