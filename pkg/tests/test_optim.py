import numpy as np
import pytest

from models import OptimizerConfig, OptimizerState
from optim import adam_direction, adam_limit_direction, adam_sign_deviation, \
    bias_corrected_moments, step


SIGN_ADAM = OptimizerConfig('adam', lr=1.0, beta1=0.0, beta2=0.0,
                            eps_adam=0.0)


class TestStep:
    def test_sgd(self):
        config = OptimizerConfig('sgd', lr=0.1)
        theta, state = step(config, OptimizerState.zeros(2),
                            np.array([1.0, 1.0]), np.array([2.0, -4.0]))
        np.testing.assert_allclose(theta, [0.8, 1.4])
        assert state.t == 1

    def test_sign(self):
        config = OptimizerConfig('sign', lr=0.5)
        theta, _ = step(config, OptimizerState.zeros(3), np.zeros(3),
                        np.array([3.0, -1e-12, 0.0]))
        np.testing.assert_array_equal(theta, [-0.5, 0.5, 0.0])

    def test_adam_first_step_is_near_sign(self):
        config = OptimizerConfig('adam', lr=1.0)
        g = np.array([0.3, -2.0])
        theta, state = step(config, OptimizerState.zeros(2), np.zeros(2), g)
        np.testing.assert_allclose(theta, -np.sign(g), rtol=1e-6)
        np.testing.assert_allclose(state.m, 0.1 * g)
        np.testing.assert_allclose(state.v, 0.001 * g * g)

    def test_adam_reduces_to_sign(self, rng):
        sign = OptimizerConfig('sign', lr=1.0)
        g = rng.standard_normal((2000, 4))
        g[::7, 1] = 0.0
        for row in g:
            a, _ = step(SIGN_ADAM, OptimizerState.zeros(4), np.zeros(4), row)
            s, _ = step(sign, OptimizerState.zeros(4), np.zeros(4), row)
            np.testing.assert_array_equal(a, s)

    def test_state_is_not_mutated(self):
        config = OptimizerConfig('adam', lr=0.1)
        state = OptimizerState.zeros(2)
        theta = np.array([1.0, 2.0])
        new_theta, new_state = step(config, state, theta, np.ones(2))
        np.testing.assert_array_equal(state.m, [0.0, 0.0])
        assert state.t == 0
        np.testing.assert_array_equal(theta, [1.0, 2.0])
        assert new_state.t == 1
        assert new_theta is not theta

    @pytest.mark.parametrize('kind', OptimizerConfig.KINDS)
    def test_step_counter(self, kind):
        config = OptimizerConfig(kind, lr=0.1)
        state = OptimizerState.zeros(1)
        theta = np.zeros(1)
        for _ in range(3):
            theta, state = step(config, state, theta, np.ones(1))
        assert state.t == 3

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            step(SIGN_ADAM, OptimizerState.zeros(2), np.zeros(3), np.zeros(3))


class TestAdamHelpers:
    def test_bias_correction(self):
        config = OptimizerConfig('adam', beta1=0.9, beta2=0.99)
        state = OptimizerState(np.array([0.1]), np.array([0.01]), 1)
        m_hat, v_hat = bias_corrected_moments(config, state)
        np.testing.assert_allclose(m_hat, [1.0])
        np.testing.assert_allclose(v_hat, [1.0])

    def test_needs_a_step(self):
        config = OptimizerConfig('adam')
        with pytest.raises(ValueError):
            bias_corrected_moments(config, OptimizerState.zeros(1))
        with pytest.raises(ValueError):
            adam_direction(config, OptimizerState.zeros(1))

    def test_zero_denominator_gives_zero_update(self):
        state = OptimizerState(np.zeros(2), np.zeros(2), 1)
        np.testing.assert_array_equal(adam_direction(SIGN_ADAM, state),
                                      [0.0, 0.0])

    def test_sign_deviation_is_zero_without_momentum(self, rng):
        stream = rng.standard_normal((100, 3))
        assert adam_sign_deviation(SIGN_ADAM, stream) == 0.0

    def test_sign_deviation_with_momentum(self, rng):
        config = OptimizerConfig('adam', beta1=0.9, beta2=0.999, eps_adam=0.0)
        stream = 1.0 + rng.standard_normal((200, 3))
        deviation = adam_sign_deviation(config, stream)
        assert 0.0 < deviation < 2.0

    def test_sign_deviation_validation(self):
        with pytest.raises(ValueError):
            adam_sign_deviation(OptimizerConfig('sign'), [np.ones(2)])
        with pytest.raises(ValueError):
            adam_sign_deviation(SIGN_ADAM, [])

    def test_limit_direction(self):
        direction = adam_limit_direction([1.0, 0.0, -2.0], [0.0, 5.0, 12.0])
        np.testing.assert_allclose(direction, [1.0, 0.0, -0.5])

    def test_limit_direction_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            adam_limit_direction([1.0], [-1.0])


class TestOptimizerConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig('rmsprop')
        with pytest.raises(ValueError):
            OptimizerConfig('adam', beta1=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig('sgd', lr=0.0)

    def test_with_lr(self):
        config = OptimizerConfig('sign', lr=0.1)
        assert config.with_lr(0.2).lr == 0.2
        assert config.lr == 0.1
