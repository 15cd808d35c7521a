"""
Brute-force Monte Carlo oracles for the closed forms: sign moments of the
batch-mean gradient and one-step loss improvements of sign descent.

All oracles draw from a caller-owned numpy Generator and work in fixed-size
chunks, so memory stays bounded for 10^6 trials and the result only depends
on (inputs, seed, chunk size).
"""
import math

import numpy as np

from models import GradientStats


MIN_TRIALS = 1000
CHUNK = 20_000


def _check_trials(trials:int) -> None:
    if int(trials) != trials or trials < MIN_TRIALS:
        raise ValueError(f'trials must be an integer >= {MIN_TRIALS}, '
                         f'got {trials}')


def _chunks(trials:int):
    done = 0
    while done < trials:
        n = min(CHUNK, trials - done)
        yield n
        done += n


def mc_sign_moments(stats:GradientStats, B:int, trials:int,
                    rng:np.random.Generator) -> tuple:
    """
    Empirical mean, variance and standard error of the mean of
    sign(batch-mean gradient), per coordinate. The batch mean of B Gaussian
    per-sample gradients is drawn directly as Normal(mu, sigma^2/B).
    """
    _check_trials(trials)
    if not B > 0:
        raise ValueError(f'batch size must be > 0, got {B}')
    total = np.zeros(stats.dim)
    scale = stats.sigma / math.sqrt(B)
    for n in _chunks(trials):
        draws = stats.mu + rng.standard_normal((n, stats.dim)) * scale
        total += np.sum(np.sign(draws), axis=0)
    mean = total / trials
    # sign is +-1 (0 has probability zero), so E[s^2] = 1
    var = np.maximum(1 - mean * mean, 0.0) * trials / (trials - 1)
    return mean, var, np.sqrt(var / trials)


def _loss_drops(workload, theta:np.ndarray, B:int, lrs:np.ndarray,
                trials:int, rng:np.random.Generator) -> tuple:
    """
    Sums and sums of squares of L(theta) - L(theta - lr*sign(G_est)) for
    every lr, with every lr seeing the same sampled batch gradients.
    """
    theta = np.asarray(theta, dtype=np.float64)
    sums = np.zeros(lrs.size)
    squares = np.zeros(lrs.size)
    for n in _chunks(trials):
        # same shape as the stepped batch, so lr = 0 cancels exactly
        base = workload.losses(np.repeat(theta[None, :], n, axis=0))
        signs = np.sign(workload.sample_batch_gradients(theta, B, n, rng))
        for k, lr in enumerate(lrs):
            drop = base - workload.losses(theta - lr * signs)
            sums[k] += np.sum(drop)
            squares[k] += np.sum(drop * drop)
    return sums, squares


def _mean_and_stderr(sums:np.ndarray, squares:np.ndarray,
                     trials:int) -> tuple:
    mean = sums / trials
    var = np.maximum(squares / trials - mean * mean, 0.0) * trials \
        / (trials - 1)
    return mean, np.sqrt(var / trials)


def mc_loss_improvement(workload, theta:np.ndarray, B:int, lr:float,
                        trials:int, rng:np.random.Generator) -> tuple:
    """
    (mean, stderr) of the one-step loss decrease of a sign step with this
    learning rate. lr = 0 gives exactly (0, 0).
    """
    _check_trials(trials)
    if not lr >= 0:
        raise ValueError(f'lr must be >= 0, got {lr}')
    sums, squares = _loss_drops(workload, theta, B, np.array([lr]), trials,
                                rng)
    mean, stderr = _mean_and_stderr(sums, squares, trials)
    return float(mean[0]), float(stderr[0])


def mc_optimal_lr_onestep(workload, theta:np.ndarray, B:int, lr_grid,
                          trials:int, rng:np.random.Generator) -> tuple:
    """
    Estimates the expected one-step loss decrease at every learning rate of
    the grid using common random numbers, and returns
    (lr_star, [(lr, mean_dL, stderr), ...]). Ties go to the smaller lr.
    """
    _check_trials(trials)
    lrs = np.asarray(lr_grid, dtype=np.float64)
    if lrs.ndim != 1 or lrs.size == 0:
        raise ValueError('lr grid must be a non-empty vector')
    if np.any(lrs < 0) or np.any(np.diff(lrs) <= 0):
        raise ValueError('lr grid must be non-negative and strictly '
                         'increasing')
    sums, squares = _loss_drops(workload, theta, B, lrs, trials, rng)
    means, stderrs = _mean_and_stderr(sums, squares, trials)
    curve = [(float(lr), float(m), float(s))
             for lr, m, s in zip(lrs, means, stderrs)]
    # argmax returns the first maximum, which is the smaller lr
    return float(lrs[int(np.argmax(means))]), curve


def default_lr_grid(center:float, n_points:int=60) -> np.ndarray:
    """
    n_points log-spaced learning rates over [center/10, 10*center].
    """
    if not center > 0:
        raise ValueError(f'grid center must be > 0, got {center}')
    return np.geomspace(center / 10, center * 10, n_points)

