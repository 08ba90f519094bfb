import numpy as np
import pytest

from polyfit.data import FiberOracle, MooneyRivlinOracle, NeoHookeanOracle
from polyfit.errors import InvalidDeformationError, ProtocolMismatchError
from polyfit.kinematics import (
    DeformationState,
    MaterialFrame,
    NormalizationConstants,
    invariants_from_deformation,
)
from polyfit.loading import (
    biaxial_stretches,
    stress_biaxial,
    stress_coefficients,
    stress_equibiaxial,
    stress_for_mode,
    stress_pure_shear,
    stress_uniaxial,
)
from polyfit.potential import new_bank

from oracles import FREE_AXES, symbolic_biaxial_stress, symbolic_scalar_stress, tensor_nominal_stress

NH = NeoHookeanOracle(c1=0.5)
MR = MooneyRivlinOracle(c1=0.3, c2=0.1)

SCALAR_STRESS = {"UT": stress_uniaxial, "PS": stress_pure_shear, "ET": stress_equibiaxial}
STATE_OF = {
    "UT": DeformationState.uniaxial,
    "PS": DeformationState.pure_shear,
    "ET": DeformationState.equibiaxial,
}


class FiberOnly:
    """psi_4a = k (I4a - 1); zero-slope at the reference."""

    anisotropic = True

    def __init__(self, k):
        self.k = k

    def invariant_derivatives(self, bundle):
        return {"i1": 0.0, "i2": 0.0, "i4a": self.k * (bundle.i4a - 1.0), "i4s": 0.0}


def random_isotropic_bank(seed, family="cann"):
    return new_bank(family, NormalizationConstants.reference(), np.random.default_rng(seed))


class TestScalarProtocols:
    def test_stress_free_reference(self):
        for fn in SCALAR_STRESS.values():
            assert fn(MR, 1.0) == 0.0

    def test_neo_hookean_hand_values(self):
        assert stress_uniaxial(NH, 2.0) == pytest.approx(1.75, abs=1e-15)
        assert stress_pure_shear(NH, 2.0) == pytest.approx(1.875, abs=1e-15)
        assert stress_equibiaxial(NH, 2.0) == pytest.approx(1.96875, abs=1e-15)

    @pytest.mark.parametrize("mode", ["UT", "PS", "ET"])
    def test_mooney_rivlin_matches_symbolic(self, mode):
        oracle_p = symbolic_scalar_stress(
            mode, lambda i1, i2: MR.c1 * (i1 - 3) + MR.c2 * (i2 - 3)
        )
        for lam in np.linspace(1.05, 2.5, 20):
            assert SCALAR_STRESS[mode](MR, lam) == pytest.approx(
                float(oracle_p(lam)), rel=1e-10
            )

    def test_anisotropic_model_rejected(self):
        fiber = FiberOracle(c1=0.2, k1=1.0, k2=0.5)
        for fn in SCALAR_STRESS.values():
            with pytest.raises(ProtocolMismatchError):
                fn(fiber, 1.5)

    @pytest.mark.parametrize("mode", ["UT", "PS", "ET"])
    @pytest.mark.parametrize("family", ["cann", "icnn"])
    def test_matches_tensor_construction(self, mode, family):
        # independent route: S = 2 dpsi/dC - p C^-1, p from traction-free axes
        bank = random_isotropic_bank(17, family)
        for lam in (1.1, 1.4, 1.9):
            state = STATE_OF[mode](lam)
            P, _ = tensor_nominal_stress(bank, state, free_axis=FREE_AXES[mode][0])
            assert SCALAR_STRESS[mode](bank, lam) == pytest.approx(
                P[0, 0], rel=1e-9
            )

    def test_uniaxial_free_axes_agree(self):
        bank = random_isotropic_bank(3)
        state = DeformationState.uniaxial(1.7)
        P1, _ = tensor_nominal_stress(bank, state, free_axis=1)
        P2, _ = tensor_nominal_stress(bank, state, free_axis=2)
        assert P1[0, 0] == pytest.approx(P2[0, 0], rel=1e-12)


class TestBiaxial:
    def test_stress_free_reference(self):
        response = stress_biaxial(MR, 1.0, 1.0)
        assert response.p_xx == 0.0 and response.p_yy == 0.0

    def test_reduces_to_equibiaxial_for_isotropic_banks(self):
        for seed in range(5):
            bank = random_isotropic_bank(seed)
            for lam in (1.2, 1.6, 2.0):
                response = stress_biaxial(bank, lam, lam)
                expected = stress_equibiaxial(bank, lam)
                assert response.p_xx == pytest.approx(expected, rel=1e-10)
                assert response.p_yy == pytest.approx(expected, rel=1e-10)

    def test_fiber_only_strip_hand_value(self):
        k = 0.37
        response = stress_biaxial(FiberOnly(k), 2.0, 1.0)
        assert response.p_xx == pytest.approx(12.0 * k, rel=1e-14)
        assert response.p_yy == 0.0
        assert response.pressure == 0.0

    def test_incompressibility_of_thickness_stretch(self):
        response = stress_biaxial(MR, 1.3, 1.1)
        assert response.lam_z * 1.3 * 1.1 == pytest.approx(1.0, abs=1e-12)

    def test_plane_stress_residual(self):
        # rebuild S_zz from the returned pressure: must vanish
        rng = np.random.default_rng(5)
        bank = new_bank(
            "cann", NormalizationConstants.reference(), rng, anisotropic=True, ansatz="full"
        )
        for lam_x, lam_y in ((1.2, 1.05), (1.0, 1.3), (1.25, 1.25)):
            response = stress_biaxial(bank, lam_x, lam_y)
            state = DeformationState.incompressible_biaxial(lam_x, lam_y)
            bundle = invariants_from_deformation(state)
            d = bank.invariant_derivatives(bundle)
            lam_z = response.lam_z
            s_zz = (
                2.0 * (d["i1"] + d["i2"] * (bundle.i1 - lam_z ** 2))
                - response.pressure / lam_z ** 2
            )
            sigma_zz = lam_z ** 2 * s_zz
            assert abs(sigma_zz) <= 1e-10

    def test_frame_swap_symmetry(self):
        rng = np.random.default_rng(9)
        bank = new_bank(
            "cann", NormalizationConstants.reference(), rng, anisotropic=True, ansatz="full"
        )
        frame = MaterialFrame()
        for lam_x, lam_y in ((1.3, 1.1), (1.05, 1.25)):
            direct = stress_biaxial(bank, lam_x, lam_y, frame)
            swapped = stress_biaxial(bank, lam_y, lam_x, frame.swapped())
            assert swapped.p_yy == pytest.approx(direct.p_xx, rel=1e-12)
            assert swapped.p_xx == pytest.approx(direct.p_yy, rel=1e-12)

    def test_fiber_oracle_matches_symbolic_biaxial(self):
        import sympy as sp

        fiber = FiberOracle(c1=0.2, k1=1.0, k2=0.5)
        p_xx, p_yy = symbolic_biaxial_stress(
            lambda i1, i2, i4a, i4s: fiber.c1 * (i1 - 3)
            + fiber.k1 / (2 * fiber.k2) * (sp.exp(fiber.k2 * (i4a - 1) ** 2) - 1)
        )
        for lam_x, lam_y in ((1.2, 1.0), (1.0, 1.25), (1.15, 1.15), (1.3, 1.07)):
            response = stress_biaxial(fiber, lam_x, lam_y)
            assert response.p_xx == pytest.approx(float(p_xx(lam_x, lam_y)), rel=1e-10)
            assert response.p_yy == pytest.approx(float(p_yy(lam_x, lam_y)), rel=1e-10)

    def test_off_axis_frame_rejected(self):
        frame = MaterialFrame(
            a0=np.array([np.sqrt(0.5), np.sqrt(0.5), 0.0]), s0=np.array([0.0, 0.0, 1.0])
        )
        with pytest.raises(ProtocolMismatchError):
            stress_biaxial(MR, 1.2, 1.1, frame)

    def test_nonpositive_stretch_rejected(self):
        with pytest.raises(InvalidDeformationError):
            stress_biaxial(MR, -1.0, 1.0)


class TestDispatchAndCoefficients:
    def test_strip_and_equibiaxial_stretch_pairs(self):
        assert biaxial_stretches("SX", 1.3) == (1.3, 1.0)
        assert biaxial_stretches("SY", 1.3) == (1.0, 1.3)
        assert biaxial_stretches("EB", 1.3) == (1.3, 1.3)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ProtocolMismatchError):
            stress_for_mode(MR, "XX", 1.2)

    @pytest.mark.parametrize("mode", ["UT", "PS", "ET", "SX", "SY", "EB"])
    def test_coefficients_reproduce_stress_functions(self, mode):
        # the training design path and the closed forms must agree exactly
        rng = np.random.default_rng(11)
        bank = new_bank(
            "cann",
            NormalizationConstants.reference(),
            rng,
            anisotropic=mode in ("SX", "SY", "EB"),
            ansatz="reduced",
        )
        lams = np.array([1.1, 1.2, 1.35])
        if mode in ("SX", "SY", "EB"):
            pairs = [biaxial_stretches(mode, lam) for lam in lams]
            lam_x = np.array([p[0] for p in pairs])
            lam_y = np.array([p[1] for p in pairs])
        else:
            lam_x, lam_y = lams, None
        rows = stress_coefficients(mode, lam_x, lam_y)
        for i, lam in enumerate(lams):
            state_d = {}
            if mode in ("SX", "SY", "EB"):
                state = DeformationState.incompressible_biaxial(lam_x[i], lam_y[i])
            else:
                state = STATE_OF[mode](lam)
            d = bank.invariant_derivatives(invariants_from_deformation(state))
            predicted = {
                comp: sum(coeffs[k][i] * d[k] for k in coeffs) for comp, coeffs in rows
            }
            expected = stress_for_mode(bank, mode, lam_x[i], None if lam_y is None else lam_y[i])
            if mode in ("SX", "SY", "EB"):
                assert predicted["xx"] == pytest.approx(expected[0], rel=1e-12, abs=1e-13)
                assert predicted["yy"] == pytest.approx(expected[1], rel=1e-12, abs=1e-13)
            else:
                assert predicted["xx"] == pytest.approx(expected, rel=1e-12, abs=1e-13)
