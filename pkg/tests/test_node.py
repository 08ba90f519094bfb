import numpy as np
import pytest

from polyfit.errors import NumericalError
from polyfit.node import (
    NodeParams,
    node_energy,
    node_first_derivative,
    node_first_derivative_param_grad,
    node_second_derivative,
)

from oracles import central_difference

E = np.e


def random_field(rng, widths=(5, 5), low=-1.0, high=1.0) -> NodeParams:
    params = NodeParams.random(rng, hidden_widths=widths)
    params.skip = float(rng.uniform(low, high))
    params.weights = [rng.uniform(low, high, w.shape) for w in params.weights]
    return params


class TestFlowMap:
    def test_zero_field_is_identity(self):
        params = NodeParams(weights=[np.array([[0.0]])])
        x = np.array([0.0, 0.5, 1.0, 3.0])
        np.testing.assert_array_equal(node_first_derivative(params, x), x)

    def test_linear_field_matches_exponential(self):
        # dy/dw = y from y(0) = x gives y(1) = e x; RK4 at 20 steps <= 1e-6 off
        params = NodeParams.linear(1.0)
        for x in (0.3, 1.0, 2.0):
            assert node_first_derivative(params, x) == pytest.approx(E * x, abs=1e-6)

    def test_skip_term_alone_is_linear_field(self):
        params = NodeParams(weights=[np.array([[0.0]])], skip=1.0)
        assert node_first_derivative(params, 1.0) == pytest.approx(E, abs=1e-6)

    def test_origin_is_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert node_first_derivative(random_field(rng), 0.0) == 0.0

    def test_monotonicity_on_sorted_inputs(self):
        rng = np.random.default_rng(1)
        x = np.sort(rng.uniform(0.0, 3.0, 100))
        for _ in range(100):
            y = node_first_derivative(random_field(rng), x)
            assert np.all(np.diff(y) >= 0.0)

    def test_non_negative_outputs_for_non_negative_inputs(self):
        rng = np.random.default_rng(2)
        x = np.linspace(0.0, 4.0, 50)
        for _ in range(50):
            assert np.all(node_first_derivative(random_field(rng), x) >= -1e-10)

    def test_step_halving_converged(self):
        # weight magnitudes <= 1, pure network field (no skip contribution)
        rng = np.random.default_rng(2)
        x = np.linspace(0.0, 3.0, 20)
        shapes = [(5, 1), (5, 5), (1, 5)]
        for _ in range(20):
            weights = [rng.uniform(-1.0, 1.0, s) for s in shapes]
            params = NodeParams(weights=[w.copy() for w in weights], steps=20)
            fine = NodeParams(weights=[w.copy() for w in weights], steps=40)
            delta = np.abs(
                node_first_derivative(params, x) - node_first_derivative(fine, x)
            )
            assert np.max(delta) <= 1e-7

    def test_divergent_field_raises(self):
        params = NodeParams.linear(1e6)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalError):
                node_first_derivative(params, 1.0)


class TestSecondDerivative:
    def test_zero_field_slope_one(self):
        params = NodeParams(weights=[np.array([[0.0]])])
        assert node_second_derivative(params, 0.7) == 1.0

    def test_linear_field_slope_e(self):
        params = NodeParams.linear(1.0)
        assert node_second_derivative(params, 0.4) == pytest.approx(E, abs=1e-6)

    def test_matches_finite_difference_of_flow(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            params = random_field(rng)
            x = rng.uniform(0.1, 3.0)
            fd = central_difference(
                lambda t: node_first_derivative(params, t), x, 1e-5
            )
            assert node_second_derivative(params, x) == pytest.approx(fd, rel=1e-4)


class TestEnergy:
    def test_zero_field_quadratic(self):
        params = NodeParams(weights=[np.array([[0.0]])])
        for x in (0.0, 0.5, 2.0, 3.5):
            assert node_energy(params, x) == pytest.approx(0.5 * x * x, rel=1e-12)

    def test_linear_field_scaled_quadratic(self):
        params = NodeParams.linear(1.0)
        assert node_energy(params, 2.0) == pytest.approx(0.5 * E * 4.0, rel=1e-6)

    def test_energy_derivative_matches_flow(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            params = random_field(rng)
            x = rng.uniform(0.3, 3.0)
            fd = central_difference(lambda t: node_energy(params, t), x, 1e-5)
            assert node_first_derivative(params, x) == pytest.approx(fd, rel=1e-4)


class TestParams:
    def test_serialization_includes_integrator(self):
        rng = np.random.default_rng(6)
        params = random_field(rng, widths=(3,))
        params.steps = 28
        again = NodeParams.from_config(params.to_config())
        assert again.steps == 28
        assert again.skip == params.skip
        x = np.linspace(0.0, 2.0, 9)
        np.testing.assert_array_equal(
            node_first_derivative(again, x), node_first_derivative(params, x)
        )

    def test_param_vector_roundtrip(self):
        rng = np.random.default_rng(7)
        params = random_field(rng)
        vec = params.get_params()
        assert vec.size == params.n_params
        other = NodeParams.random(np.random.default_rng(1))
        other.set_params(vec)
        np.testing.assert_array_equal(other.get_params(), vec)

    def test_no_bias_parameters_exist(self):
        params = NodeParams.random(np.random.default_rng(8))
        # every trainable parameter is a weight; f(0) = 0 structurally
        assert params.n_params == 1 + sum(w.size for w in params.weights)
        assert node_first_derivative(params, 0.0) == 0.0

    @pytest.mark.parametrize("widths", [(), (3,), (5, 5)])
    def test_param_grad_matches_fd(self, widths):
        rng = np.random.default_rng(9)
        params = random_field(rng, widths=widths, low=-0.7, high=0.7)
        x = rng.uniform(0.0, 2.5, 6)
        seeds = rng.standard_normal(6)
        grad = node_first_derivative_param_grad(params, x, seeds)
        theta = params.get_params()
        for idx in range(theta.size):
            h = 1e-6 * (1 + abs(theta[idx]))
            probe = theta.copy()
            probe[idx] += h
            params.set_params(probe)
            up = float(np.dot(seeds, node_first_derivative(params, x)))
            probe[idx] -= 2 * h
            params.set_params(probe)
            down = float(np.dot(seeds, node_first_derivative(params, x)))
            params.set_params(theta)
            assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)
