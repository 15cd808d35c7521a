"""
Closed-form scaling laws for sign-based optimizers on a quadratic loss with
Gaussian gradient noise.

Notation used throughout: the per-coordinate signal-to-noise ratio is
r_i = mu_i / sigma_i, the trace of the Hessian is tr = sum_i H_ii and the
cross sum is cross = sum_{i != j} r_i r_j H_ij. Both must be positive for
the surge laws to exist; a violation raises LawViolationError carrying the
offending sums instead of silently producing NaN.

Batch sizes are positive reals here; only the training harness restricts
them to integers.
"""
import logging
import math

import numpy as np

from models import GradientStats, HessianSpec, LawCurve, LawInputs, LawParams
from signstats import e_approx, e_exact, small_batch_e
from workloads import batch_size_bound


log = logging.getLogger(__name__)

EPS_MAX_FORMS_RTOL = 1e-9


class LawViolationError(ValueError):
    def __init__(self, message:str, sums:dict) -> None:
        super().__init__(f'{message} ({_format_sums(sums)})')
        self.sums = sums


def _format_sums(sums:dict) -> str:
    return ', '.join(f'{key}={value:.6g}' for key, value in sums.items())


def _positive(name:str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f'{name} must be finite and > 0, got {value}')
    return arr

def _as_result(arr:np.ndarray) -> float|np.ndarray:
    return float(arr) if np.ndim(arr) == 0 else arr


def _snr(stats:GradientStats) -> np.ndarray:
    if stats.degenerate:
        raise ValueError('the sign laws need noisy gradient stats '
                         '(got degenerate stats with zero sigma)')
    return stats.snr


def trace_and_cross(inputs:LawInputs) -> tuple:
    return inputs.hessian.trace(), \
        inputs.hessian.offdiag_form(_snr(inputs.stats))


def _checked_cross(inputs:LawInputs) -> tuple:
    trace, cross = trace_and_cross(inputs)
    if not cross > 0:
        raise LawViolationError('cross sum of signal-to-noise weighted '
                                'off-diagonal curvature must be > 0',
                                {'trace': trace, 'cross': cross})
    return trace, cross


def optimal_lr_general(G:np.ndarray, EV:np.ndarray, covV_diag:np.ndarray,
                       H:HessianSpec) -> float:
    """
    Learning rate maximizing the expected one-step loss decrease of
    theta - lr*V for an update V with mean EV and diagonal covariance
    covV_diag, when the true gradient is G:
        lr = GᵀEV / (sum_i H_ii covV_i + EVᵀ H EV)
    """
    G, EV, covV_diag = (np.asarray(a, dtype=np.float64)
                        for a in (G, EV, covV_diag))
    if not G.shape == EV.shape == covV_diag.shape == (H.dim,):
        raise ValueError(f'G, EV and covV need {H.dim} coordinates, got '
                         f'{G.shape}, {EV.shape}, {covV_diag.shape}')
    noise_term = float(np.dot(H.diagonal_values(), covV_diag))
    mean_term = H.quad_form(EV)
    denominator = noise_term + mean_term
    if not denominator > 0:
        raise LawViolationError('optimal learning rate denominator must be '
                                '> 0', {'noise_term': noise_term,
                                        'mean_term': mean_term,
                                        'denominator': denominator})
    return float(np.dot(G, EV)) / denominator


def loss_improvement_general(G:np.ndarray, EV:np.ndarray,
                             lr_opt:float) -> float:
    G, EV = np.asarray(G, dtype=np.float64), np.asarray(EV, dtype=np.float64)
    if G.shape != EV.shape:
        raise ValueError(f'G and EV disagree in shape: {G.shape} vs '
                         f'{EV.shape}')
    return 0.5 * float(np.dot(G, EV)) * lr_opt


def _sign_moments(inputs:LawInputs, B:float, approx:bool) -> tuple:
    stats = inputs.stats
    e_fn = e_approx if approx else e_exact
    mean = np.atleast_1d(e_fn(stats.mu, stats.sigma, B))
    return mean, 1 - mean * mean


def optimal_lr_sign_exact(inputs:LawInputs, B:float,
                          approx:bool=False) -> float:
    """
    Optimal sign-SGD learning rate at batch size B. Uses erf for the
    expected sign unless approx is set, in which case the sigmoid-like
    closed form is used.
    """
    _positive('B', B)
    mean, var = _sign_moments(inputs, B, approx)
    return optimal_lr_general(inputs.stats.mu, mean, var, inputs.hessian)


def loss_improvement_sign_exact(inputs:LawInputs, B:float,
                                approx:bool=False) -> float:
    mean, _ = _sign_moments(inputs, B, approx)
    if not np.any(mean):
        return 0.0
    lr = optimal_lr_sign_exact(inputs, B, approx)
    return loss_improvement_general(inputs.stats.mu, mean, lr)


def optimal_lr_small_batch(inputs:LawInputs, B:float) -> float:
    """
    The optimal learning rate with the expected sign linearised as
    sqrt(2B/pi)*mu/sigma. Algebraically this is the surge law.
    """
    _positive('B', B)
    stats = inputs.stats
    e = np.atleast_1d(small_batch_e(stats.mu, stats.sigma, B))
    return optimal_lr_general(stats.mu, e, 1 - e * e, inputs.hessian)


def b_noise(inputs:LawInputs) -> float:
    """
    The batch size at which the optimal sign learning rate peaks:
    pi * tr / (2 * cross).
    """
    trace, cross = _checked_cross(inputs)
    return math.pi * trace / (2 * cross)


def _weighted_signal(stats:GradientStats) -> float:
    """
    sum_i mu_i^2 / sigma_i
    """
    _snr(stats)
    return float(np.sum(stats.mu * stats.mu / stats.sigma))


def eps_max_forms(inputs:LawInputs) -> dict:
    """
    Three evaluations of the peak learning rate:
    - 'peak':    sqrt(b_noise/(2 pi)) * sum(mu^2/sigma) / tr
    - 'direct':  sum(mu^2/sigma) / (2 sqrt(cross) sqrt(tr)), free of b_noise
    - 'lower':   sum(mu^2/sigma) / (tr + cross), never above the peak
    """
    trace, cross = _checked_cross(inputs)
    signal = _weighted_signal(inputs.stats)
    peak = math.sqrt(b_noise(inputs) / (2 * math.pi)) * signal / trace
    direct = signal / (2 * math.sqrt(cross) * math.sqrt(trace))
    if not math.isclose(peak, direct, rel_tol=EPS_MAX_FORMS_RTOL, abs_tol=0):
        raise ArithmeticError(f'peak learning rate forms disagree: {peak} '
                              f'vs {direct}')
    return {'peak': peak, 'direct': direct,
            'lower': signal / (trace + cross)}


def eps_max(inputs:LawInputs) -> float:
    return eps_max_forms(inputs)['peak']


def surge_lr(B:float|np.ndarray, b_noise:float,
             eps_max:float) -> float|np.ndarray:
    """
    eps_max / (1/2 (sqrt(b_noise/B) + sqrt(B/b_noise))). Peaks at
    B = b_noise and is symmetric under B/b_noise -> b_noise/B.
    """
    B = _positive('B', B)
    _positive('b_noise', b_noise)
    _positive('eps_max', eps_max)
    ratio = np.sqrt(B / b_noise)
    return _as_result(eps_max / (0.5 * (1 / ratio + ratio)))


def sgd_lr(B:float|np.ndarray, b_noise:float, eps_max:float,
           alpha:float=1.0) -> float|np.ndarray:
    B = _positive('B', B)
    _positive('b_noise', b_noise)
    _positive('eps_max', eps_max)
    _positive('alpha', alpha)
    return _as_result(eps_max / (1 + b_noise / B) ** alpha)


def small_batch_approximations(B:float|np.ndarray, b_noise:float,
                               eps_max:float) -> tuple:
    """
    (linear, sqrt) small-batch forms of the surge law:
    eps_max*B/b_noise and 2*eps_max*sqrt(B/b_noise).
    """
    B = _positive('B', B)
    _positive('b_noise', b_noise)
    _positive('eps_max', eps_max)
    return (_as_result(eps_max * B / b_noise),
            _as_result(2 * eps_max * np.sqrt(B / b_noise)))


def large_batch_lr(inputs:LawInputs) -> float:
    """
    Limit of the optimal sign learning rate for B -> inf:
    sum|mu| / sign(mu)ᵀ H sign(mu).
    """
    mu = inputs.stats.mu
    s = np.sign(mu)
    denominator = inputs.hessian.quad_form(s)
    if not denominator > 0:
        raise LawViolationError('large batch denominator must be > 0',
                                {'sign_quad_form': denominator,
                                 'abs_mu_sum': float(np.sum(np.abs(mu)))})
    return float(np.sum(np.abs(mu))) / denominator


def dl_max(inputs:LawInputs) -> float:
    """
    Loss improvement reached for B -> inf under the loss improvement law:
    (sum mu^2/sigma)^2 / (2 cross).
    """
    _, cross = _checked_cross(inputs)
    return _weighted_signal(inputs.stats) ** 2 / (2 * cross)


def loss_improvement_law(B:float|np.ndarray, b_noise:float,
                         dl_max:float) -> float|np.ndarray:
    B = _positive('B', B)
    _positive('b_noise', b_noise)
    _positive('dl_max', dl_max)
    return _as_result(dl_max / (1 + b_noise / B))


def law_params(inputs:LawInputs) -> LawParams:
    return LawParams(b_noise=b_noise(inputs), eps_max=eps_max(inputs),
                     dl_max=dl_max(inputs), large_batch=large_batch_lr(inputs))


def critical_batch_size(s_min:float, e_min:float) -> float:
    _positive('s_min', s_min)
    _positive('e_min', e_min)
    return e_min / s_min


def tradeoff_curve(s_min:float, e_min:float, n_points:int) -> tuple:
    """
    Samples the steps/examples hyperbola (S/s_min - 1)(E/e_min - 1) = 1.
    S runs log-evenly from 1.1*s_min to 11*s_min.

    Returns (points, b_crit) with points a list of (S, E) and
    b_crit = e_min / s_min.
    """
    b_crit = critical_batch_size(s_min, e_min)
    if int(n_points) != n_points or n_points < 2:
        raise ValueError(f'n_points must be an integer >= 2, got {n_points}')
    k = np.geomspace(0.1, 10.0, int(n_points))
    points = [(float(s_min * (1 + ki)), float(e_min * (1 + 1 / ki)))
              for ki in k]
    return points, b_crit


def tradeoff_examples(S:float|np.ndarray, s_min:float,
                      e_min:float) -> float|np.ndarray:
    """
    Examples E needed to reach the target in S steps: e_min*S/(S - s_min).
    """
    critical_batch_size(s_min, e_min)
    S = np.asarray(S, dtype=np.float64)
    if np.any(S <= s_min):
        raise ValueError(f'S must exceed s_min={s_min}')
    return _as_result(e_min * S / (S - s_min))


def regime_report(stats:GradientStats, B:float) -> dict:
    """
    Where B sits relative to the per-coordinate batch size bounds
    pi*sigma^2/(2*mu^2). The small-batch laws hold while B is well below the
    bounds; the median bound is the aggregate used for warnings.
    """
    _positive('B', B)
    bounds = batch_size_bound(stats)
    median = float(np.median(bounds))
    return {'B': float(B), 'fraction_below': float(np.mean(B < bounds)),
            'median_bound': median, 'small_batch': bool(B <= median)}


SMALL_BATCH_VARIANTS = ('surge', 'linear', 'sqrt')


def _params_for(source:LawInputs|LawParams) -> LawParams:
    if isinstance(source, LawParams):
        return source
    return law_params(source)


def curve(source:LawInputs|LawParams, variant:str, B_grid,
          alpha:float|None=None, approx:bool=False) -> LawCurve:
    """
    Evaluates one law variant over a strictly increasing batch size grid.
    The exact variant needs LawInputs; the others also accept LawParams
    (e.g. from a fit). large_batch is flat at the B -> inf limit.
    """
    B_grid = np.asarray(B_grid, dtype=np.float64)
    if B_grid.ndim != 1 or B_grid.size == 0:
        raise ValueError('B grid must be a non-empty vector')
    _positive('B grid', B_grid)
    if np.any(np.diff(B_grid) <= 0):
        raise ValueError('B grid must be strictly increasing')
    if variant not in LawCurve.VARIANTS:
        raise ValueError(f'Unknown law variant "{variant}"')

    if variant == 'exact':
        if not isinstance(source, LawInputs):
            raise ValueError('the exact variant needs gradient stats and a '
                             'hessian, not fitted parameters')
        values = [optimal_lr_sign_exact(source, b, approx) for b in B_grid]
        return LawCurve(variant, list(zip(B_grid, values)))

    params = _params_for(source)
    if variant in SMALL_BATCH_VARIANTS and isinstance(source, LawInputs):
        report = regime_report(source.stats, B_grid[-1])
        if not report['small_batch']:
            log.warning('%s law evaluated up to B=%g, above the median batch '
                        'size bound %.4g', variant, B_grid[-1],
                        report['median_bound'])

    if variant == 'surge':
        values = surge_lr(B_grid, params.b_noise, params.eps_max)
    elif variant == 'sgd_alpha':
        if alpha is None:
            raise ValueError('sgd_alpha variant needs alpha')
        values = sgd_lr(B_grid, params.b_noise, params.eps_max, alpha)
    elif variant == 'linear':
        values = small_batch_approximations(B_grid, params.b_noise,
                                            params.eps_max)[0]
    elif variant == 'sqrt':
        values = small_batch_approximations(B_grid, params.b_noise,
                                            params.eps_max)[1]
    elif variant == 'large_batch':
        if params.large_batch is None:
            raise ValueError('large_batch variant needs the large batch limit')
        values = np.full(B_grid.size, params.large_batch)
    else:
        if params.dl_max is None:
            raise ValueError('loss_improvement variant needs dl_max')
        values = loss_improvement_law(B_grid, params.b_noise, params.dl_max)
    return LawCurve(variant, list(zip(B_grid, values)),
                    alpha=alpha if variant == 'sgd_alpha' else None)
