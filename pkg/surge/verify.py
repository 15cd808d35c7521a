"""
Oracle agreement suite: every closed form is compared against an
independent oracle (series expansion, Monte Carlo, finite differences or
algebraic identity) at reduced trial counts.

The learning rate law under test is injectable, so a deliberately wrong law
can be run through the same suite as a negative control.
"""
import logging
from decimal import Decimal, localcontext

import numpy as np

from fit import estimate_eps_max_adam, fit_bnoise
from helpers import SeedStreamHelper
from lawcore import b_noise, large_batch_lr, optimal_lr_sign_exact, surge_lr, \
    tradeoff_curve
from mcoracle import default_lr_grid, mc_optimal_lr_onestep, mc_sign_moments
from models import CheckResult, GradientStats, HessianSpec, LawInputs, \
    OptimizerConfig, OptimizerState
from optim import step
from signstats import erf, sign_batch_moments
from workloads import BlobDataset, MlpWorkload, QuadraticWorkload, \
    batch_size_bound, gradient_check


log = logging.getLogger(__name__)


def erf_series(x:float, terms:int=200) -> float:
    """
    Maclaurin series of erf in 80-digit decimal arithmetic.
    """
    with localcontext() as ctx:
        ctx.prec = 80
        xd = Decimal(repr(float(x)))
        x2 = xd * xd
        term = xd
        total = Decimal(0)
        for n in range(terms):
            total += term / (2 * n + 1)
            term = -term * x2 / (n + 1)
        pi = Decimal('3.14159265358979323846264338327950288419716939937510'
                     '58209749445923078164062862089986280348253421170679')
        return float(2 * total / pi.sqrt())


def random_law_inputs(rng:np.random.Generator, dim:int) -> LawInputs:
    """
    A random model with a positive cross sum: diagonally dominant Hessian
    with positive off-diagonal entries, positive gradient mean.
    """
    off = rng.uniform(0.05, 0.3, (dim, dim))
    off = np.triu(off, 1)
    off = off + off.T
    H = off + np.diag(off.sum(axis=1) + rng.uniform(0.5, 1.5, dim))
    stats = GradientStats(rng.uniform(0.2, 1.0, dim),
                          rng.uniform(0.5, 2.0, dim))
    return LawInputs(stats, HessianSpec.dense(H))


def uniform_law_inputs(dim:int=32, snr:float=0.1) -> LawInputs:
    """
    The uniform reference model: H_ii = 1, H_ij = 0.1, mu_i/sigma_i = snr.
    """
    return LawInputs(GradientStats(np.full(dim, snr), np.ones(dim)),
                     HessianSpec.uniform(1.0, 0.1, dim))


def probe_workload(inputs:LawInputs) -> tuple:
    """
    Noisy quadratic and a parameter point whose true gradient is the
    model's mu, with per-sample noise sigma.
    """
    workload = QuadraticWorkload(inputs.hessian, np.zeros(inputs.hessian.dim),
                                 inputs.stats.sigma)
    return workload, workload.theta_for_gradient(inputs.stats.mu)


class VerificationSuite:
    ONESTEP_BATCH_SIZES = (1, 4, 16, 64)

    def __init__(self, seed:int=0, trials:int=100_000, n_models:int=3,
                 law=optimal_lr_sign_exact) -> None:
        self.streams = SeedStreamHelper(seed)
        self.trials = trials
        self.n_models = n_models
        self.law = law

    def run(self) -> list:
        checks = [self.check_erf, self.check_sign_moments,
                  self.check_onestep_lr, self.check_large_batch,
                  self.check_adam_sign, self.check_surge_symmetry,
                  self.check_tradeoff, self.check_fit_roundtrip,
                  self.check_mlp_gradients, self.check_bnoise_drift]
        results = []
        for check in checks:
            result = check()
            log.info('%s: %s', result.name, 'pass' if result.passed
                     else 'FAIL')
            results.append(result)
        return results

    def check_erf(self) -> CheckResult:
        xs = np.linspace(-6.0, 6.0, 241)
        worst = max(abs(erf(x) - erf_series(x)) for x in xs)
        return CheckResult('erf_series', worst <= 1e-7, worst, 0.0,
                           'abs 1e-7')

    def check_sign_moments(self) -> CheckResult:
        rng = self.streams.rng('sign_moments')
        stats = GradientStats([1.0, 0.3, 0.0, -0.5], [1.0, 1.0, 2.0, 0.5])
        B = 2
        mean, _, stderr = mc_sign_moments(stats, B, self.trials, rng)
        analytic, _ = sign_batch_moments(stats, B)
        z = float(np.max(np.abs(mean - analytic) / stderr))
        return CheckResult('sign_moments_mc', z <= 5.0, z, 0.0,
                           '5 stderr')

    def check_onestep_lr(self) -> CheckResult:
        rng = self.streams.rng('onestep')
        worst = 0.0
        passed = True
        for _ in range(self.n_models):
            inputs = random_law_inputs(rng, int(rng.integers(2, 9)))
            workload, theta = probe_workload(inputs)
            for B in self.ONESTEP_BATCH_SIZES:
                expected = self.law(inputs, B)
                grid = default_lr_grid(optimal_lr_sign_exact(inputs, B))
                measured, _ = mc_optimal_lr_onestep(workload, theta, B, grid,
                                                    self.trials, rng)
                grid_step = grid[1] / grid[0] - 1
                rel = abs(measured - expected) / expected
                worst = max(worst, rel)
                passed &= rel <= max(0.10, grid_step)
        return CheckResult('onestep_lr_mc', passed, worst, 0.0,
                           'rel max(10%, 1 grid step)')

    def check_large_batch(self) -> CheckResult:
        rng = self.streams.rng('large_batch')
        worst = 0.0
        for _ in range(max(self.n_models, 10)):
            inputs = random_law_inputs(rng, int(rng.integers(2, 9)))
            B = 1e6 * float(np.median(batch_size_bound(inputs.stats)))
            limit = large_batch_lr(inputs)
            worst = max(worst, abs(self.law(inputs, B) - limit) / limit)
        return CheckResult('large_batch_limit', worst <= 0.01, worst, 0.0,
                           'rel 1%')

    def check_adam_sign(self) -> CheckResult:
        rng = self.streams.rng('adam_sign')
        g = rng.standard_normal((self.trials, 4))
        adam = OptimizerConfig('adam', lr=1.0, beta1=0.0, beta2=0.0,
                               eps_adam=0.0)
        sign = OptimizerConfig('sign', lr=1.0)
        # the update rules are elementwise, so all trials step at once
        zeros = np.zeros_like(g)
        start = OptimizerState(zeros, zeros, 0)
        a, _ = step(adam, start, zeros, g)
        s, _ = step(sign, start, zeros, g)
        mismatches = int(np.count_nonzero(a != s))
        return CheckResult('adam_sign_reduction', mismatches == 0,
                           mismatches, 0, 'exact')

    def check_surge_symmetry(self) -> CheckResult:
        bn, peak = 50.67, 0.7
        worst = max(abs(surge_lr(k * bn, bn, peak) - surge_lr(bn / k, bn, peak))
                    / peak for k in (2, 5, 10, 100))
        return CheckResult('surge_symmetry', worst <= 1e-12, worst, 0.0,
                           'rel 1e-12')

    def check_tradeoff(self) -> CheckResult:
        s_min, e_min = 100.0, 500.0
        points, _ = tradeoff_curve(s_min, e_min, 50)
        worst = max(abs((S / s_min - 1) * (E / e_min - 1) - 1)
                    for S, E in points)
        return CheckResult('tradeoff_identity', worst <= 1e-12, worst, 0.0,
                           'abs 1e-12')

    def check_fit_roundtrip(self) -> CheckResult:
        bn, s_min, peak = 500.0, 100.0, 0.7
        Bs = np.geomspace(4, 4096, 12)
        S = s_min * (1 + bn / Bs)
        b_hat, s_hat, _ = fit_bnoise(list(zip(1 / (S * Bs), 1 / S)))
        lrs = surge_lr(Bs, bn, peak)
        peak_hat = estimate_eps_max_adam(list(zip(Bs, lrs)), bn)
        worst = max(abs(b_hat - bn) / bn, abs(s_hat - s_min) / s_min,
                    abs(peak_hat - peak) / peak)
        return CheckResult('fit_roundtrip', worst <= 1e-9, worst, 0.0,
                           'rel 1e-9')

    def check_mlp_gradients(self) -> CheckResult:
        rng = self.streams.rng('mlp')
        workload = MlpWorkload(BlobDataset(n_samples=200), hidden=8)
        worst = 0.0
        for _ in range(20):
            theta = rng.normal(0.0, 0.5, workload.dim)
            sample = int(rng.integers(0, workload.n_samples))
            worst = max(worst, gradient_check(workload, theta, sample))
        return CheckResult('mlp_backprop', worst <= 1e-5, worst, 0.0,
                           'rel 1e-5')

    def check_bnoise_drift(self) -> CheckResult:
        """
        Moving the probe point towards the optimum shrinks mu while sigma
        stays, so b_noise must not decrease as the loss gets smaller.
        """
        inputs = uniform_law_inputs()
        workload, theta = probe_workload(inputs)
        values = []
        for shrink in (1.0, 0.5, 0.25):
            stats = workload.gradient_stats(shrink * theta)
            values.append(b_noise(LawInputs(stats, inputs.hessian)))
        passed = all(b >= a for a, b in zip(values, values[1:]))
        return CheckResult('bnoise_drift', passed, values[-1] / values[0],
                           16.0, 'nondecreasing')


def run_verify(seed:int=0, trials:int=100_000,
               law=optimal_lr_sign_exact) -> list:
    return VerificationSuite(seed, trials, law=law).run()


def all_passed(results:list) -> bool:
    return all(r.passed for r in results)
