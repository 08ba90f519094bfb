import numpy as np
import pytest

from polyfit.icnn import (
    IcnnParams,
    icnn_first_derivative,
    icnn_first_derivative_param_grad,
    icnn_second_derivative,
    icnn_value,
)

from oracles import central_difference

LN2_SQ = np.log(2.0) ** 2


class TestValues:
    def test_head_only_passthrough(self):
        # single (last) layer, raw weight 0 -> exp(0) = 1, bias 0: value(x) = x
        params = IcnnParams(hidden_widths=())
        for x in (-1.0, 0.0, 1.7):
            assert icnn_value(params, x) == pytest.approx(x, abs=1e-15)
        assert icnn_first_derivative(params, 1.7) == pytest.approx(1.0, abs=1e-15)
        assert icnn_second_derivative(params, 1.7) == 0.0

    def test_softplus_squared_of_zero(self):
        # one hidden unit, all raw weights and biases zero, x = 0:
        # the head sees softplus(0)^2 = ln(2)^2 through a unit weight
        params = IcnnParams(hidden_widths=(1,))
        assert icnn_value(params, 0.0) == pytest.approx(LN2_SQ, rel=1e-14)

    def test_non_decreasing_on_random_draws(self):
        rng = np.random.default_rng(0)
        grid = np.sort(rng.uniform(-2.0, 4.0, 50))
        for _ in range(1000):
            params = IcnnParams.random(rng, hidden_widths=(3, 2))
            values = icnn_value(params, grid)
            assert np.all(np.diff(values) >= -1e-12)

    def test_midpoint_convexity(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            params = IcnnParams.random(rng)
            x1, x2 = np.sort(rng.uniform(-1.0, 4.0, 2))
            mid = icnn_value(params, 0.5 * (x1 + x2))
            assert mid <= 0.5 * (icnn_value(params, x1) + icnn_value(params, x2)) + 1e-10


class TestDerivatives:
    def test_first_matches_finite_difference(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            params = IcnnParams.random(rng)
            x = rng.uniform(0.0, 3.0)
            fd = central_difference(lambda t: icnn_value(params, t), x, 1e-6)
            assert icnn_first_derivative(params, x) == pytest.approx(fd, rel=1e-6)

    def test_second_matches_finite_difference(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            params = IcnnParams.random(rng)
            x = rng.uniform(0.0, 3.0)
            fd = central_difference(lambda t: icnn_first_derivative(params, t), x, 1e-5)
            assert icnn_second_derivative(params, x) == pytest.approx(
                fd, rel=1e-4, abs=1e-10
            )

    def test_derivatives_non_negative(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1.0, 4.0, 100)
        for _ in range(100):  # 100 x 100 = 1e4 (params, x) draws
            params = IcnnParams.random(rng, hidden_widths=(4,))
            assert np.all(icnn_first_derivative(params, x) >= 0.0)
            assert np.all(icnn_second_derivative(params, x) >= 0.0)

    def test_first_derivative_non_decreasing(self):
        rng = np.random.default_rng(5)
        grid = np.linspace(-1.0, 4.0, 300)
        for _ in range(50):
            params = IcnnParams.random(rng)
            assert np.all(np.diff(icnn_first_derivative(params, grid)) >= -1e-12)


class TestParams:
    def test_serialization_bit_exact(self):
        rng = np.random.default_rng(6)
        params = IcnnParams.random(rng, hidden_widths=(4, 4))
        again = IcnnParams.from_config(params.to_config())
        x = rng.uniform(0.0, 3.0, 20)
        np.testing.assert_array_equal(icnn_value(again, x), icnn_value(params, x))
        np.testing.assert_array_equal(again.get_params(), params.get_params())

    def test_param_vector_roundtrip(self):
        rng = np.random.default_rng(7)
        params = IcnnParams.random(rng, hidden_widths=(3, 2))
        vec = params.get_params()
        assert vec.size == params.n_params
        other = IcnnParams(hidden_widths=(3, 2))
        other.set_params(vec)
        np.testing.assert_array_equal(other.get_params(), vec)

    @pytest.mark.parametrize("widths", [(), (1,), (3,), (4, 4), (2, 3, 2)])
    def test_param_grad_matches_fd(self, widths):
        rng = np.random.default_rng(8)
        params = IcnnParams.random(rng, hidden_widths=widths)
        x = rng.uniform(0.0, 3.0, 7)
        seeds = rng.standard_normal(7)
        grad = icnn_first_derivative_param_grad(params, x, seeds)
        theta = params.get_params()
        for idx in range(theta.size):
            h = 1e-6 * (1 + abs(theta[idx]))
            probe = theta.copy()
            probe[idx] += h
            params.set_params(probe)
            up = float(np.dot(seeds, icnn_first_derivative(params, x)))
            probe[idx] -= 2 * h
            params.set_params(probe)
            down = float(np.dot(seeds, icnn_first_derivative(params, x)))
            params.set_params(theta)
            assert grad[idx] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)
