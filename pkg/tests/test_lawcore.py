import logging
import math

import numpy as np
import pytest

from lawcore import LawViolationError, b_noise, critical_batch_size, curve, \
    dl_max, eps_max, eps_max_forms, large_batch_lr, law_params, \
    loss_improvement_general, loss_improvement_law, \
    loss_improvement_sign_exact, optimal_lr_general, optimal_lr_sign_exact, \
    optimal_lr_small_batch, regime_report, sgd_lr, small_batch_approximations, \
    surge_lr, tradeoff_curve, tradeoff_examples
from models import GradientStats, HessianSpec, LawInputs, LawParams


class TestGeneralLaw:
    def test_one_dimensional(self):
        H = HessianSpec.diagonal([2.0])
        assert optimal_lr_general([1.0], [1.0], [0.0], H) == 0.5

    def test_noise_lowers_the_learning_rate(self):
        H = HessianSpec.diagonal([1.0, 1.0])
        quiet = optimal_lr_general([1.0, 1.0], [0.5, 0.5], [0.0, 0.0], H)
        noisy = optimal_lr_general([1.0, 1.0], [0.5, 0.5], [0.75, 0.75], H)
        assert noisy < quiet

    def test_shape_mismatch(self):
        H = HessianSpec.diagonal([1.0, 1.0])
        with pytest.raises(ValueError):
            optimal_lr_general([1.0], [1.0, 1.0], [0.0, 0.0], H)
        with pytest.raises(ValueError):
            loss_improvement_general([1.0], [1.0, 1.0], 0.1)

    def test_zero_denominator(self):
        H = HessianSpec.dense([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(LawViolationError) as info:
            optimal_lr_general([1.0, 1.0], [0.0, 0.0], [0.0, 0.0], H)
        assert info.value.sums['denominator'] == 0.0


class TestSignExactLaw:
    def test_d2_example(self, d2_inputs):
        assert optimal_lr_sign_exact(d2_inputs, 2) == pytest.approx(0.62189,
                                                                    rel=1e-4)

    def test_d2_loss_improvement(self, d2_inputs):
        assert loss_improvement_sign_exact(d2_inputs, 2) == pytest.approx(
            0.5241, rel=1e-3)

    def test_d1_collapse(self):
        inputs = LawInputs(GradientStats([1.0], [1.0]),
                           HessianSpec.diagonal([1.0]))
        # one coordinate: lr = mu*E / (var + E^2) = E
        assert optimal_lr_sign_exact(inputs, 2) == pytest.approx(
            math.erf(1.0), rel=1e-12)

    def test_zero_gradient_gives_zero_improvement(self):
        inputs = LawInputs(GradientStats([0.0, 0.0], [1.0, 1.0]),
                           HessianSpec.diagonal([1.0, 1.0]))
        assert optimal_lr_sign_exact(inputs, 8) == 0.0
        assert loss_improvement_sign_exact(inputs, 8) == 0.0

    def test_approx_variant_is_close(self, d2_inputs):
        exact = optimal_lr_sign_exact(d2_inputs, 2)
        approx = optimal_lr_sign_exact(d2_inputs, 2, approx=True)
        assert approx != exact
        assert approx == pytest.approx(exact, rel=0.2)

    def test_large_batch_plateau(self, d2_inputs):
        assert optimal_lr_sign_exact(d2_inputs, 1e8) == pytest.approx(
            large_batch_lr(d2_inputs), rel=1e-12)

    def test_small_batch_is_the_surge_law(self, d2_inputs):
        bn, peak = b_noise(d2_inputs), eps_max(d2_inputs)
        for B in (0.25, 0.5, 1.0):
            assert optimal_lr_small_batch(d2_inputs, B) == pytest.approx(
                surge_lr(B, bn, peak), rel=1e-12)

    def test_surge_matches_exact_for_small_batches(self, d32_inputs):
        bn, peak = b_noise(d32_inputs), eps_max(d32_inputs)
        assert optimal_lr_sign_exact(d32_inputs, 1) == pytest.approx(
            surge_lr(1, bn, peak), rel=0.01)

    def test_rejects_bad_batch_size(self, d2_inputs):
        with pytest.raises(ValueError):
            optimal_lr_sign_exact(d2_inputs, 0)

    def test_rejects_degenerate_stats(self):
        stats = GradientStats([1.0, 1.0], [0.0, 1.0], degenerate=True)
        inputs = LawInputs(stats, HessianSpec.diagonal([1.0, 1.0]))
        with pytest.raises(ValueError):
            b_noise(inputs)


class TestScalarParameters:
    def test_d2_values(self, d2_inputs):
        assert b_noise(d2_inputs) == pytest.approx(math.pi, rel=1e-12)
        assert eps_max(d2_inputs) == pytest.approx(math.sqrt(0.5), rel=1e-12)
        assert large_batch_lr(d2_inputs) == pytest.approx(2 / 3, rel=1e-12)
        assert dl_max(d2_inputs) == pytest.approx(2.0, rel=1e-12)

    def test_eps_max_forms(self, d2_inputs):
        forms = eps_max_forms(d2_inputs)
        assert forms['peak'] == pytest.approx(forms['direct'], rel=1e-12)
        assert forms['lower'] == pytest.approx(2 / 3, rel=1e-12)
        assert forms['lower'] <= forms['peak']

    def test_d32_uniform(self, d32_inputs):
        assert b_noise(d32_inputs) == pytest.approx(50.67, rel=1e-3)
        assert eps_max(d32_inputs) == pytest.approx(0.0284, rel=1e-2)

    def test_uniform_matches_dense(self, d32_inputs):
        dense = LawInputs(d32_inputs.stats,
                          HessianSpec.dense(d32_inputs.hessian.to_dense()))
        assert b_noise(dense) == pytest.approx(b_noise(d32_inputs), rel=1e-12)
        assert optimal_lr_sign_exact(dense, 16) == pytest.approx(
            optimal_lr_sign_exact(d32_inputs, 16), rel=1e-12)

    def test_law_params(self, d2_inputs):
        params = law_params(d2_inputs)
        assert params.b_noise == pytest.approx(math.pi)
        assert params.large_batch == pytest.approx(2 / 3)

    def test_diagonal_hessian_has_no_surge(self):
        inputs = LawInputs(GradientStats([1.0, 1.0], [1.0, 1.0]),
                           HessianSpec.diagonal([1.0, 1.0]))
        with pytest.raises(LawViolationError) as info:
            b_noise(inputs)
        assert info.value.sums['cross'] == 0.0
        assert 'cross' in str(info.value)

    def test_negative_cross_sum(self):
        inputs = LawInputs(GradientStats([1.0, -1.0], [1.0, 1.0]),
                           HessianSpec.dense([[1.0, 0.5], [0.5, 1.0]]))
        with pytest.raises(LawViolationError):
            eps_max(inputs)


class TestBatchSizeLaws:
    def test_surge_peak_and_symmetry(self):
        bn, peak = 50.67, 0.7
        assert surge_lr(bn, bn, peak) == pytest.approx(peak, rel=1e-15)
        for k in (2, 5, 10, 100):
            assert surge_lr(k * bn, bn, peak) == pytest.approx(
                surge_lr(bn / k, bn, peak), rel=1e-12)

    def test_surge_vectorized(self):
        B = np.array([1.0, 10.0, 100.0])
        values = surge_lr(B, 10.0, 1.0)
        assert values.shape == (3,)
        assert values[1] == pytest.approx(1.0)

    def test_sgd_law(self):
        assert sgd_lr(50.0, 50.0, 1.0, alpha=1.0) == pytest.approx(0.5)
        assert sgd_lr(50.0, 50.0, 1.0, alpha=0.5) == pytest.approx(
            1 / math.sqrt(2))
        assert sgd_lr(1e12, 50.0, 1.0) == pytest.approx(1.0, rel=1e-9)

    def test_small_batch_forms(self):
        linear, sqrt = small_batch_approximations(25.0, 100.0, 0.8)
        assert linear == pytest.approx(0.2)
        assert sqrt == pytest.approx(0.8)

    def test_small_batch_forms_approach_surge(self):
        bn, peak = 1000.0, 1.0
        # surge ~ 2 eps_max sqrt(B/b_noise) for B << b_noise
        linear, sqrt = small_batch_approximations(0.01, bn, peak)
        assert surge_lr(0.01, bn, peak) == pytest.approx(sqrt, rel=1e-4)
        assert linear < sqrt

    def test_loss_improvement_law(self):
        assert loss_improvement_law(10.0, 10.0, 2.0) == pytest.approx(1.0)

    def test_loss_improvement_law_tracks_exact(self, d32_inputs):
        bn, top = b_noise(d32_inputs), dl_max(d32_inputs)

        def gaps(B_grid):
            law = loss_improvement_law(B_grid, bn, top)
            exact = np.array([loss_improvement_sign_exact(d32_inputs, b)
                              for b in B_grid])
            return np.abs(law - exact) / law

        # within 5% while the expected sign is still close to linear in
        # sqrt(B), and within 9% up to b_noise where erf saturation shows
        assert gaps(np.geomspace(1, 16, 40)).max() <= 0.05
        full = gaps(np.geomspace(1, bn, 80))
        assert full.max() <= 0.09
        assert full.argmax() == len(full) - 1
        assert full[-1] == pytest.approx(0.0815, abs=0.002)

    @pytest.mark.parametrize('args', [(0.0, 1.0, 1.0), (1.0, 0.0, 1.0),
                                      (1.0, 1.0, -1.0)])
    def test_rejects_non_positive(self, args):
        with pytest.raises(ValueError):
            surge_lr(*args)


class TestTradeoff:
    def test_hyperbola_identity(self):
        points, b_crit = tradeoff_curve(100.0, 500.0, 50)
        assert b_crit == 5.0
        assert len(points) == 50
        for S, E in points:
            assert (S / 100 - 1) * (E / 500 - 1) == pytest.approx(1.0,
                                                                  abs=1e-12)

    def test_examples_for_steps(self):
        assert tradeoff_examples(200.0, 100.0, 500.0) == pytest.approx(1000.0)
        with pytest.raises(ValueError):
            tradeoff_examples(100.0, 100.0, 500.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            tradeoff_curve(100.0, 500.0, 1)
        with pytest.raises(ValueError):
            critical_batch_size(0.0, 500.0)


class TestRegimeReport:
    def test_d2(self, d2_inputs):
        below = regime_report(d2_inputs.stats, 1)
        assert below['median_bound'] == pytest.approx(math.pi / 2)
        assert below['fraction_below'] == 1.0
        assert below['small_batch']
        above = regime_report(d2_inputs.stats, 2)
        assert above['fraction_below'] == 0.0
        assert not above['small_batch']


class TestCurve:
    def test_surge_peak_at_nearest_grid_point(self, d2_inputs):
        B = np.geomspace(1, 16, 41)
        c = curve(d2_inputs, 'surge', B)
        nearest = B[np.argmin(np.abs(np.log(B / math.pi)))]
        assert c.peak()[0] == pytest.approx(nearest)

    def test_warns_outside_small_batch_regime(self, d2_inputs, caplog):
        with caplog.at_level(logging.WARNING, logger='lawcore'):
            curve(d2_inputs, 'surge', [1.0, 64.0])
        assert 'median batch size bound' in caplog.text

    def test_exact_curve(self, d2_inputs):
        c = curve(d2_inputs, 'exact', [1.0, 2.0, 4.0])
        assert c.label == 'exact'
        assert c.values()[1] == pytest.approx(0.62189, rel=1e-4)

    def test_exact_needs_law_inputs(self):
        with pytest.raises(ValueError):
            curve(LawParams(10.0, 1.0), 'exact', [1.0, 2.0])

    def test_from_fitted_params(self):
        c = curve(LawParams(10.0, 1.0), 'sgd_alpha', [1.0, 10.0], alpha=0.5)
        assert c.label == 'sgd_alpha(0.5)'
        assert c.values()[1] == pytest.approx(1 / math.sqrt(2))

    def test_large_batch_is_flat(self, d2_inputs):
        c = curve(d2_inputs, 'large_batch', [1.0, 2.0, 3.0])
        np.testing.assert_allclose(c.values(), 2 / 3)

    def test_loss_improvement_curve(self, d2_inputs):
        c = curve(d2_inputs, 'loss_improvement', [math.pi])
        assert c.values()[0] == pytest.approx(1.0)

    @pytest.mark.parametrize('grid', [[], [2.0, 1.0], [0.0, 1.0]])
    def test_rejects_bad_grid(self, d2_inputs, grid):
        with pytest.raises(ValueError):
            curve(d2_inputs, 'surge', grid)

    def test_rejects_unknown_variant(self, d2_inputs):
        with pytest.raises(ValueError):
            curve(d2_inputs, 'cubic', [1.0])

    def test_sgd_needs_alpha(self, d2_inputs):
        with pytest.raises(ValueError):
            curve(d2_inputs, 'sgd_alpha', [1.0])
