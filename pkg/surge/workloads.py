"""
Desk-scale workloads. Each exposes the full-data loss, the exact gradient,
per-sample stochastic gradients and mini-batch gradient sampling:

- QuadraticWorkload: noisy quadratic L = 1/2 (θ-θ*)ᵀH(θ-θ*) with additive
  per-sample Gaussian gradient noise. Its gradient statistics are known in
  closed form: mu = H(θ-θ*), sigma = noise_sigma.
- MlpWorkload: one-hidden-layer tanh network with mean cross-entropy on a
  generated Gaussian-blob classification set, with exact backprop.

All sampling goes through a caller-owned numpy Generator, workloads
themselves are never mutated after construction.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from models import GradientStats, HessianSpec


log = logging.getLogger(__name__)


def _check_batch_size(B:int) -> None:
    if B < 1 or int(B) != B:
        raise ValueError(f'batch size must be a positive integer, got {B}')


class QuadraticWorkload:
    kind = 'quadratic'

    def __init__(self, hessian:HessianSpec, theta_star:np.ndarray,
                 noise_sigma:np.ndarray, rng_seed:int=0,
                 theta_init:np.ndarray|None=None) -> None:
        self.hessian = hessian
        self.theta_star = np.asarray(theta_star, dtype=np.float64)
        self.noise_sigma = np.asarray(noise_sigma, dtype=np.float64)
        self.rng_seed = rng_seed
        d = hessian.dim
        if self.theta_star.shape != (d,) or self.noise_sigma.shape != (d,):
            raise ValueError(f'theta_star and noise_sigma need {d} '
                             f'coordinates')
        if np.any(self.noise_sigma < 0):
            raise ValueError('noise_sigma must be >= 0')
        if hessian.min_eigenvalue() <= 0:
            raise ValueError('quadratic workload needs a positive definite '
                             'hessian')
        self.theta_init = None
        if theta_init is not None:
            self.theta_init = self._check(theta_init)

    @property
    def dim(self) -> int:
        return self.hessian.dim

    def stream_keys(self, purpose:str) -> tuple:
        """
        Keys of the random stream a run uses for purpose ('init' or
        'noise'). rng_seed selects a different family of both streams.
        """
        return (purpose, self.rng_seed)

    @property
    def deterministic(self) -> bool:
        return bool(np.all(self.noise_sigma == 0))

    def _check(self, theta:np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1:] != (self.dim,):
            raise ValueError(f'theta needs {self.dim} coordinates, '
                             f'got shape {theta.shape}')
        return theta

    def loss(self, theta:np.ndarray) -> float:
        delta = self._check(theta) - self.theta_star
        return 0.5 * self.hessian.quad_form(delta)

    def losses(self, thetas:np.ndarray) -> np.ndarray:
        """
        Row-wise loss for a (n, d) stack of parameter vectors.
        """
        delta = self._check(thetas) - self.theta_star
        return 0.5 * np.atleast_1d(self.hessian.quad_form(delta))

    def true_gradient(self, theta:np.ndarray) -> np.ndarray:
        return self.hessian.matvec(self._check(theta) - self.theta_star)

    def gradient_stats(self, theta:np.ndarray) -> GradientStats:
        return GradientStats(self.true_gradient(theta), self.noise_sigma,
                             degenerate=self.deterministic)

    def per_sample_gradients(self, theta:np.ndarray, n:int,
                             rng:np.random.Generator) -> np.ndarray:
        g = self.true_gradient(theta)
        return g + rng.standard_normal((n, self.dim)) * self.noise_sigma

    def sample_batch_gradient(self, theta:np.ndarray, B:int,
                              rng:np.random.Generator) -> np.ndarray:
        """
        Mean of B per-sample gradients, drawn from its exact distribution
        Normal(H(θ-θ*), diag(sigma^2)/B).
        """
        _check_batch_size(B)
        g = self.true_gradient(theta)
        return g + rng.standard_normal(self.dim) * self.noise_sigma \
            / math.sqrt(B)

    def sample_batch_gradients(self, theta:np.ndarray, B:int, n:int,
                               rng:np.random.Generator) -> np.ndarray:
        _check_batch_size(B)
        g = self.true_gradient(theta)
        return g + rng.standard_normal((n, self.dim)) * self.noise_sigma \
            / math.sqrt(B)

    def theta_for_gradient(self, mu:np.ndarray) -> np.ndarray:
        """
        The parameter point whose true gradient equals mu.
        """
        return self.theta_star + self.hessian.solve(mu)

    def initial_theta(self, rng:np.random.Generator,
                      target_loss:float) -> np.ndarray:
        """
        theta_init when given, otherwise a seeded Gaussian direction scaled
        so the initial loss is 10x the target loss.
        """
        if self.theta_init is not None:
            return self.theta_init.copy()
        if not target_loss > 0:
            raise ValueError('random initialization needs target_loss > 0')
        z = rng.standard_normal(self.dim)
        scale = math.sqrt(20 * target_loss / self.hessian.quad_form(z))
        return self.theta_star + scale * z


@dataclass
class BlobDataset:
    """
    Gaussian blobs, one per class. Without explicit centers the class
    centers sit on a circle of radius 2 (2-d input) or are drawn from the
    generation seed. Generation is a pure function of the fields.
    """
    n_samples: int = 2000
    n_classes: int = 4
    input_dim: int = 2
    std: float = 0.5
    seed: int = 0
    centers: list|None = None

    def __post_init__(self) -> None:
        if self.n_samples < self.n_classes or self.n_classes < 2:
            raise ValueError('need at least 2 classes and one sample each')
        if not self.std > 0:
            raise ValueError('blob std must be > 0')

    def generate(self) -> tuple:
        rng = np.random.default_rng(self.seed)
        if self.centers is not None:
            centers = np.asarray(self.centers, dtype=np.float64)
            if centers.shape != (self.n_classes, self.input_dim):
                raise ValueError(f'centers must have shape '
                                 f'({self.n_classes}, {self.input_dim})')
        elif self.input_dim == 2:
            angles = 2 * math.pi * np.arange(self.n_classes) / self.n_classes
            centers = 2.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        else:
            centers = rng.normal(0.0, 2.0, (self.n_classes, self.input_dim))
        labels = np.arange(self.n_samples) % self.n_classes
        X = centers[labels] + self.std * rng.standard_normal(
            (self.n_samples, self.input_dim))
        return X, labels


class MlpWorkload:
    """
    input -> tanh hidden layer -> softmax output, mean cross-entropy.

    The parameter vector is flattened as W1 (input x hidden), b1, W2
    (hidden x classes), b2. Per-sample gradients are exact backprop for
    every sample, no batch-level shortcuts.
    """
    kind = 'mlp'
    MAX_PARAMS = 10_000
    CHUNK = 4096

    def __init__(self, dataset:BlobDataset|None=None, hidden:int=16,
                 init_seed:int=0, init_scale:float=1.0,
                 theta_init:np.ndarray|None=None) -> None:
        self.dataset = dataset or BlobDataset()
        self.hidden = hidden
        self.init_seed = init_seed
        self.init_scale = init_scale
        self.X, self.y = self.dataset.generate()
        self.widths = (self.dataset.input_dim, hidden, self.dataset.n_classes)
        if self.dim > self.MAX_PARAMS:
            raise ValueError(f'MLP has {self.dim} parameters, limit is '
                             f'{self.MAX_PARAMS}')
        self.theta_init = None
        if theta_init is not None:
            self.theta_init = self._check(theta_init)

    def stream_keys(self, purpose:str) -> tuple:
        # init_seed only moves the initial weights, batches stay put
        if purpose == 'init':
            return (purpose, self.init_seed)
        return (purpose,)

    @property
    def dim(self) -> int:
        n_in, n_hidden, n_out = self.widths
        return n_in * n_hidden + n_hidden + n_hidden * n_out + n_out

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def _check(self, theta:np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ValueError(f'theta needs {self.dim} coordinates, '
                             f'got shape {theta.shape}')
        return theta

    def _unpack(self, theta:np.ndarray) -> tuple:
        n_in, n_hidden, n_out = self.widths
        i = 0
        W1 = theta[i:i + n_in * n_hidden].reshape(n_in, n_hidden)
        i += n_in * n_hidden
        b1 = theta[i:i + n_hidden]
        i += n_hidden
        W2 = theta[i:i + n_hidden * n_out].reshape(n_hidden, n_out)
        i += n_hidden * n_out
        b2 = theta[i:i + n_out]
        return W1, b1, W2, b2

    def _forward(self, theta:np.ndarray, X:np.ndarray) -> tuple:
        W1, b1, W2, b2 = self._unpack(theta)
        a1 = np.tanh(X @ W1 + b1)
        logits = a1 @ W2 + b2
        return a1, logits

    def losses_at(self, theta:np.ndarray, idx:np.ndarray) -> np.ndarray:
        """
        Per-sample cross-entropy for the samples in idx.
        """
        theta = self._check(theta)
        _, logits = self._forward(theta, self.X[idx])
        top = np.max(logits, axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.sum(np.exp(logits - top), axis=1))
        return lse - logits[np.arange(len(idx)), self.y[idx]]

    def gradients_at(self, theta:np.ndarray, idx:np.ndarray) -> np.ndarray:
        """
        (len(idx), dim) matrix of per-sample gradients.
        """
        theta = self._check(theta)
        W1, b1, W2, b2 = self._unpack(theta)
        X, y = self.X[idx], self.y[idx]
        a1, logits = self._forward(theta, X)
        probs = np.exp(logits - np.max(logits, axis=1, keepdims=True))
        probs /= np.sum(probs, axis=1, keepdims=True)
        dz2 = probs
        dz2[np.arange(len(idx)), y] -= 1.0
        dz1 = (dz2 @ W2.T) * (1 - a1 * a1)
        n = len(idx)
        gW1 = (X[:, :, None] * dz1[:, None, :]).reshape(n, -1)
        gW2 = (a1[:, :, None] * dz2[:, None, :]).reshape(n, -1)
        return np.concatenate([gW1, dz1, gW2, dz2], axis=1)

    def loss(self, theta:np.ndarray) -> float:
        return float(np.mean(self.losses_at(theta, np.arange(self.n_samples))))

    def losses(self, thetas:np.ndarray) -> np.ndarray:
        return np.array([self.loss(theta) for theta in np.atleast_2d(thetas)])

    def true_gradient(self, theta:np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        for start in range(0, self.n_samples, self.CHUNK):
            idx = np.arange(start, min(start + self.CHUNK, self.n_samples))
            total += np.sum(self.gradients_at(theta, idx), axis=0)
        return total / self.n_samples

    def per_sample_gradients(self, theta:np.ndarray, n:int,
                             rng:np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.n_samples, n)
        return self.gradients_at(theta, idx)

    def sample_batch_gradient(self, theta:np.ndarray, B:int,
                              rng:np.random.Generator) -> np.ndarray:
        _check_batch_size(B)
        return np.mean(self.per_sample_gradients(theta, B, rng), axis=0)

    def sample_batch_gradients(self, theta:np.ndarray, B:int, n:int,
                               rng:np.random.Generator) -> np.ndarray:
        _check_batch_size(B)
        return np.stack([self.sample_batch_gradient(theta, B, rng)
                         for _ in range(n)])

    def initial_theta(self, rng:np.random.Generator,
                      target_loss:float) -> np.ndarray:
        """
        theta_init when given, otherwise scaled Gaussian weights
        (std init_scale/sqrt(fan_in)) and zero biases.
        """
        if self.theta_init is not None:
            return self.theta_init.copy()
        n_in, n_hidden, n_out = self.widths
        W1 = rng.standard_normal((n_in, n_hidden)) * self.init_scale \
            / math.sqrt(n_in)
        W2 = rng.standard_normal((n_hidden, n_out)) * self.init_scale \
            / math.sqrt(n_hidden)
        return np.concatenate([W1.ravel(), np.zeros(n_hidden), W2.ravel(),
                               np.zeros(n_out)])


def estimate_gradient_stats(workload, theta:np.ndarray, n_samples:int,
                            rng:np.random.Generator) -> GradientStats:
    """
    Empirical per-coordinate mean and (unbiased) standard deviation of
    n_samples per-sample gradients. Coordinates with zero spread make the
    result degenerate.
    """
    if n_samples < 2:
        raise ValueError(f'n_samples must be >= 2, got {n_samples}')
    grads = workload.per_sample_gradients(theta, n_samples, rng)
    mu = np.mean(grads, axis=0)
    sigma = np.std(grads, axis=0, ddof=1)
    degenerate = bool(np.any(sigma == 0))
    if degenerate:
        log.info('gradient stats degenerate: %d coordinates without noise',
                 int(np.sum(sigma == 0)))
    return GradientStats(mu, sigma, degenerate=degenerate)


def batch_size_bound(stats:GradientStats) -> np.ndarray:
    """
    Per-coordinate pi*sigma^2/(2*mu^2), the batch size separating the
    small-batch (surge) regime from saturation. +inf where mu = 0.
    """
    mu2 = stats.mu * stats.mu
    with np.errstate(divide='ignore'):
        return np.where(mu2 > 0, math.pi * stats.sigma ** 2 / (2 * mu2),
                        np.inf)


def bound_summary(bounds:np.ndarray) -> dict:
    return {f'p{q}': float(np.percentile(bounds, q))
            for q in (10, 25, 50, 75, 90)}


def finite_difference_gradient(fn, theta:np.ndarray,
                               step:float=1e-5) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (fn(plus) - fn(minus)) / (2 * step)
    return grad


def gradient_check(workload:MlpWorkload, theta:np.ndarray, sample:int,
                   step:float=1e-5) -> float:
    """
    Relative error between the backprop gradient of one sample's loss and
    its central finite-difference estimate.
    """
    idx = np.array([sample])
    analytic = workload.gradients_at(theta, idx)[0]
    numeric = finite_difference_gradient(
        lambda t: float(workload.losses_at(t, idx)[0]), theta, step)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric),
                np.finfo(float).tiny)
    return float(np.linalg.norm(analytic - numeric) / scale)
