"""
Estimating the scaling parameters from grid-search observations.

Stage one fits the steps/examples trade-off
    1/S = 1/s_min - (e_min/s_min) * (1/E)
by ordinary least squares in (1/E, 1/S) space, so b_noise = e_min/s_min
is minus the slope and s_min is one over the intercept. Stage two inverts
the learning rate laws point by point at the fitted b_noise and averages
the resulting peak learning rate estimates (unweighted, so the result does
not depend on the order of the inputs).
"""
import logging
import math

import numpy as np

from harness import optimal_points
from models import ScalingFit


log = logging.getLogger(__name__)

SGD_ALPHAS = (0.5, 1.0)


class FitFailureError(ValueError):
    def __init__(self, message:str, diagnostics:dict) -> None:
        details = ', '.join(f'{key}={value:.6g}'
                            for key, value in diagnostics.items())
        super().__init__(f'{message} ({details})' if details else message)
        self.diagnostics = diagnostics


def fit_bnoise(points:list) -> tuple:
    """
    points: (inv_E, inv_S) pairs. Returns (b_noise, s_min, residual_rms),
    the residuals being measured in 1/S.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2 or np.unique(pts[:, 0]).size < 2:
        raise FitFailureError('need at least 2 points with distinct 1/E',
                              {'n_points': pts.shape[0]})
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError('1/E and 1/S must be finite and > 0')

    x, y = pts[:, 0], pts[:, 1]
    # 1/E is orders of magnitude below 1, standardize it for conditioning
    x_mean, x_std = np.mean(x), np.std(x)
    design = np.column_stack([(x - x_mean) / x_std, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    slope = a / x_std
    intercept = b - slope * x_mean
    residual_rms = float(np.sqrt(np.mean((y - design @ [a, b]) ** 2)))
    diagnostics = {'slope': float(slope), 'intercept': float(intercept),
                   'residual_rms': residual_rms, 'n_points': pts.shape[0]}
    if not intercept > 0:
        raise FitFailureError('fitted intercept (1/s_min) must be > 0',
                              diagnostics)
    if not slope < 0:
        raise FitFailureError('fitted slope must be < 0, the data do not '
                              'follow the steps/examples trade-off',
                              diagnostics)
    log.debug('trade-off fit: %s', diagnostics)
    return float(-slope), float(1 / intercept), residual_rms


def _checked_pairs(pairs:list, b_noise:float) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError('need at least one (B, lr) pair')
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError('batch sizes and learning rates must be > 0')
    if not (math.isfinite(b_noise) and b_noise > 0):
        raise ValueError(f'b_noise must be > 0, got {b_noise}')
    return arr


def estimate_eps_max_adam(pairs:list, b_noise:float) -> float:
    """
    Mean of lr/2 * (sqrt(b_noise/B) + sqrt(B/b_noise)) over (B, lr) pairs,
    the surge law solved for its peak value.
    """
    arr = _checked_pairs(pairs, b_noise)
    B, lr = arr[:, 0], arr[:, 1]
    return float(np.mean(lr / 2 * (np.sqrt(b_noise / B)
                                   + np.sqrt(B / b_noise))))


def estimate_eps_max_sgd(pairs:list, b_noise:float, alpha:float) -> float:
    arr = _checked_pairs(pairs, b_noise)
    if not alpha > 0:
        raise ValueError(f'alpha must be > 0, got {alpha}')
    B, lr = arr[:, 0], arr[:, 1]
    return float(np.mean(lr * (1 + b_noise / B) ** alpha))


def scaling_fit(records:list, target_loss:float|None=None) -> ScalingFit:
    """
    Both stages on a list of run records: trade-off fit on the per-B optima,
    then the peak learning rate estimates from the optimal learning rates.
    """
    optima = optimal_points(records)
    if len(optima) < 2:
        raise FitFailureError('need optimal points at 2 or more batch sizes',
                              {'n_points': len(optima)})
    b_noise, s_min, residual_rms = fit_bnoise([(1 / p.E, 1 / p.S)
                                               for p in optima])
    pairs = [(p.batch_size, p.lr) for p in optima]
    return ScalingFit(
        b_noise=b_noise, s_min=s_min, e_min=b_noise * s_min,
        eps_max_adam=estimate_eps_max_adam(pairs, b_noise),
        eps_max_sgd={alpha: estimate_eps_max_sgd(pairs, b_noise, alpha)
                     for alpha in SGD_ALPHAS},
        residual_rms=residual_rms, n_points=len(optima),
        target_loss=target_loss)
