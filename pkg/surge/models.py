"""
Data classes shared by the simulator modules: gradient statistics, Hessian
specifications, law inputs and curves, optimizer state, grid configurations,
run records and fitted scaling parameters.
"""
from dataclasses import dataclass, field, replace

import numpy as np


def _vector(values, name:str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f'{name} must be a non-empty vector')
    if not np.all(np.isfinite(arr)):
        raise ValueError(f'{name} must be finite')
    return arr


@dataclass
class GradientStats:
    """
    Per-coordinate mean and per-sample standard deviation of the gradient
    (the Gaussian gradient model). A zero sigma is only accepted when the
    stats are explicitly flagged degenerate, which happens for noiseless
    workloads. Analytic sign moments reject degenerate stats.
    """
    mu: np.ndarray
    sigma: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        self.mu = _vector(self.mu, 'mu')
        self.sigma = _vector(self.sigma, 'sigma')
        if self.mu.shape != self.sigma.shape:
            raise ValueError(f'mu has {self.mu.size} coordinates, '
                             f'sigma has {self.sigma.size}')
        if np.any(self.sigma < 0):
            raise ValueError('sigma must be non-negative')
        if np.any(self.sigma == 0) and not self.degenerate:
            raise ValueError('sigma must be > 0 (zero noise is only allowed '
                             'for degenerate stats)')

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def snr(self) -> np.ndarray:
        return self.mu / self.sigma


class HessianSpec:
    """
    Symmetric Hessian in dense, diagonal or uniform form.

    The uniform form (constant diagonal a, constant off-diagonal c) never
    materializes a matrix: every sum the laws need is evaluated in closed
    form, so it works for any dimension. The dense form is the reference
    implementation.

    Use the constructors HessianSpec.dense(), HessianSpec.diagonal() and
    HessianSpec.uniform() instead of calling __init__ directly.
    """
    KINDS = ('dense', 'diagonal', 'uniform')
    MAX_DENSE_DIM = 4096
    SYMMETRY_RTOL = 1e-12

    def __init__(self, kind:str, matrix:np.ndarray|None=None,
                 values:np.ndarray|None=None, diag_value:float|None=None,
                 offdiag_value:float|None=None, dim:int|None=None) -> None:
        if kind not in self.KINDS:
            raise ValueError(f'Unknown hessian kind "{kind}"')
        self.kind = kind
        self.matrix = matrix
        self.values = values
        self.diag_value = diag_value
        self.offdiag_value = offdiag_value
        self._dim = dim
        if self.trace() <= 0:
            raise ValueError(f'hessian trace must be > 0, got {self.trace()}')

    @classmethod
    def dense(cls, matrix) -> 'HessianSpec':
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValueError('dense hessian must be a non-empty square matrix')
        if m.shape[0] > cls.MAX_DENSE_DIM:
            raise ValueError(f'dense hessian limited to dimension '
                             f'{cls.MAX_DENSE_DIM}')
        if not np.all(np.isfinite(m)):
            raise ValueError('dense hessian must be finite')
        scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
        if np.max(np.abs(m - m.T)) > cls.SYMMETRY_RTOL * scale:
            raise ValueError('dense hessian is not symmetric')
        return cls('dense', matrix=0.5 * (m + m.T), dim=m.shape[0])

    @classmethod
    def diagonal(cls, values) -> 'HessianSpec':
        v = _vector(values, 'hessian diagonal')
        return cls('diagonal', values=v, dim=v.size)

    @classmethod
    def uniform(cls, diag_value:float, offdiag_value:float,
                dim:int) -> 'HessianSpec':
        if int(dim) != dim or dim < 1:
            raise ValueError(f'uniform hessian dim must be a positive '
                             f'integer, got {dim}')
        a, c = float(diag_value), float(offdiag_value)
        if not (np.isfinite(a) and np.isfinite(c)):
            raise ValueError('uniform hessian values must be finite')
        return cls('uniform', diag_value=a, offdiag_value=c, dim=int(dim))

    @property
    def dim(self) -> int:
        return self._dim

    def trace(self) -> float:
        if self.kind == 'dense':
            return float(np.trace(self.matrix))
        if self.kind == 'diagonal':
            return float(np.sum(self.values))
        return self._dim * self.diag_value

    def diagonal_values(self) -> np.ndarray:
        if self.kind == 'dense':
            return np.diag(self.matrix).copy()
        if self.kind == 'diagonal':
            return self.values.copy()
        return np.full(self._dim, self.diag_value)

    def to_dense(self) -> np.ndarray:
        if self._dim > self.MAX_DENSE_DIM:
            raise ValueError(f'cannot materialize a {self._dim}-dimensional '
                             f'hessian (limit {self.MAX_DENSE_DIM})')
        if self.kind == 'dense':
            return self.matrix.copy()
        if self.kind == 'diagonal':
            return np.diag(self.values)
        m = np.full((self._dim, self._dim), self.offdiag_value)
        np.fill_diagonal(m, self.diag_value)
        return m

    def min_eigenvalue(self) -> float:
        if self.kind == 'dense':
            return float(np.linalg.eigvalsh(self.matrix)[0])
        if self.kind == 'diagonal':
            return float(np.min(self.values))
        a, c, d = self.diag_value, self.offdiag_value, self._dim
        if d == 1:
            return a
        return min(a - c, a + (d - 1) * c)

    def matvec(self, x:np.ndarray) -> np.ndarray:
        """
        H·x for a vector, or row-wise for a (n, d) stack of vectors.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self._dim:
            raise ValueError(f'expected {self._dim} coordinates, '
                             f'got {x.shape[-1]}')
        if self.kind == 'dense':
            return x @ self.matrix
        if self.kind == 'diagonal':
            return x * self.values
        a, c = self.diag_value, self.offdiag_value
        return (a - c) * x + c * np.sum(x, axis=-1, keepdims=True)

    def quad_form(self, x:np.ndarray) -> float|np.ndarray:
        """
        xᵀHx, row-wise for a (n, d) stack.
        """
        x = np.asarray(x, dtype=np.float64)
        result = np.sum(x * self.matvec(x), axis=-1)
        return float(result) if np.ndim(result) == 0 else result

    def offdiag_form(self, w:np.ndarray) -> float:
        """
        Σ_{i≠j} w_i w_j H_ij.
        """
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self._dim,):
            raise ValueError(f'expected {self._dim} coordinates, got {w.shape}')
        if self.kind == 'diagonal':
            return 0.0
        if self.kind == 'uniform':
            return float(self.offdiag_value * (np.sum(w) ** 2 - np.sum(w * w)))
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(w @ off @ w)

    def solve(self, y:np.ndarray) -> np.ndarray:
        """
        Returns x with H·x = y.
        """
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self._dim,):
            raise ValueError(f'expected {self._dim} coordinates, got {y.shape}')
        if self.kind == 'dense':
            return np.linalg.solve(self.matrix, y)
        if self.kind == 'diagonal':
            if np.any(self.values == 0):
                raise ValueError('singular diagonal hessian')
            return y / self.values
        # Sherman-Morrison on (a - c)·I + c·11ᵀ
        a, c, d = self.diag_value, self.offdiag_value, self._dim
        if a == c or a - c + d * c == 0:
            raise ValueError('singular uniform hessian')
        return (y - c * np.sum(y) / (a - c + d * c)) / (a - c)

    def __repr__(self) -> str:
        if self.kind == 'uniform':
            return (f'HessianSpec.uniform(a={self.diag_value}, '
                    f'c={self.offdiag_value}, d={self._dim})')
        return f'HessianSpec.{self.kind}(d={self._dim})'


@dataclass
class LawInputs:
    stats: GradientStats
    hessian: HessianSpec

    def __post_init__(self) -> None:
        if self.stats.dim != self.hessian.dim:
            raise ValueError(f'stats have {self.stats.dim} coordinates, '
                             f'hessian has {self.hessian.dim}')


@dataclass
class LawParams:
    """
    Scalar parameters of the closed-form laws, either computed from
    LawInputs or taken from a ScalingFit.
    """
    b_noise: float
    eps_max: float
    dl_max: float|None = None
    large_batch: float|None = None


@dataclass
class LawCurve:
    """
    A tagged sequence of (B, value) points for one law variant. alpha is
    only set for the sgd_alpha variant.
    """
    VARIANTS = ('exact', 'surge', 'sgd_alpha', 'linear', 'sqrt',
                'large_batch', 'loss_improvement')

    variant: str
    points: list
    alpha: float|None = None

    def __post_init__(self) -> None:
        if self.variant not in self.VARIANTS:
            raise ValueError(f'Unknown law variant "{self.variant}"')
        if self.variant == 'sgd_alpha' and self.alpha is None:
            raise ValueError('sgd_alpha variant needs alpha')
        self.points = [(float(b), float(v)) for b, v in self.points]
        bs = [b for b, _ in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
            raise ValueError('curve batch sizes must be strictly increasing')

    @property
    def label(self) -> str:
        if self.variant == 'sgd_alpha':
            return f'sgd_alpha({self.alpha:g})'
        return self.variant

    def batch_sizes(self) -> np.ndarray:
        return np.array([b for b, _ in self.points])

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    def peak(self) -> tuple:
        idx = int(np.argmax(self.values()))
        return self.points[idx]


@dataclass
class OptimizerConfig:
    KINDS = ('sgd', 'sign', 'adam')

    kind: str = 'adam'
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f'Unknown optimizer kind "{self.kind}"')
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ValueError(f'lr must be > 0, got {self.lr}')
        if self.kind == 'adam':
            for name in ('beta1', 'beta2'):
                value = getattr(self, name)
                if not 0.0 <= value < 1.0:
                    raise ValueError(f'{name} must be in [0, 1), got {value}')
        if not self.eps_adam >= 0:
            raise ValueError(f'eps_adam must be >= 0, got {self.eps_adam}')

    def with_lr(self, lr:float) -> 'OptimizerConfig':
        return replace(self, lr=lr)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim:int) -> 'OptimizerState':
        return cls(np.zeros(dim), np.zeros(dim), 0)


def _strictly_increasing(values:list) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


@dataclass
class GridConfig:
    """
    A (batch size x learning rate x round) grid. Each round reruns every
    cell with a different seed. extra_steps is the number of steps every
    run keeps training after it first reaches target_loss.
    """
    optimizer: OptimizerConfig
    batch_sizes: list
    lrs: list
    rounds: int
    target_loss: float
    extra_steps: int = 50
    max_steps: int = 10000
    seed: int = 0
    target_rtol: float = 1e-9
    workload: str|None = None

    def __post_init__(self) -> None:
        if not self.batch_sizes or not self.lrs:
            raise ValueError('batch_sizes and lrs must be non-empty')
        if any(int(b) != b or b < 1 for b in self.batch_sizes):
            raise ValueError('batch_sizes must be positive integers')
        self.batch_sizes = [int(b) for b in self.batch_sizes]
        self.lrs = [float(lr) for lr in self.lrs]
        if any(not lr > 0 for lr in self.lrs):
            raise ValueError('lrs must be > 0')
        if not _strictly_increasing(self.batch_sizes):
            raise ValueError('batch_sizes must be strictly increasing')
        if not _strictly_increasing(self.lrs):
            raise ValueError('lrs must be strictly increasing')
        if self.rounds < 1:
            raise ValueError('rounds must be >= 1')
        if self.max_steps < 1:
            raise ValueError('max_steps must be >= 1')
        if self.extra_steps < 0:
            raise ValueError('extra_steps must be >= 0')
        if not np.isfinite(self.target_loss):
            raise ValueError('target_loss must be finite')

    def cells(self) -> list:
        """
        (batch_size, lr, round) triples in their fixed output order.
        """
        return [(b, lr, r) for b in self.batch_sizes for lr in self.lrs
                for r in range(self.rounds)]


@dataclass
class RunRecord:
    """
    One grid cell. S is the first step whose full-data loss reached the
    target, E = S * batch_size. final_loss is the loss after extra_steps
    further steps; it is +inf for diverged runs and None when the run
    never reached the target.
    """
    batch_size: int
    lr: float
    seed: int
    converged: bool
    S: int|None = None
    E: int|None = None
    final_loss: float|None = None

    def __post_init__(self) -> None:
        if self.converged:
            if self.S is None:
                raise ValueError('converged runs need S')
            if self.E is None:
                self.E = self.S * self.batch_size
            if self.E != self.S * self.batch_size:
                raise ValueError(f'E ({self.E}) != S * batch_size '
                                 f'({self.S * self.batch_size})')

    @property
    def diverged(self) -> bool:
        return (not self.converged and self.final_loss is not None
                and np.isinf(self.final_loss))


@dataclass
class ScalingFit:
    b_noise: float
    s_min: float
    e_min: float
    eps_max_adam: float
    eps_max_sgd: dict = field(default_factory=dict)
    residual_rms: float = 0.0
    n_points: int = 0
    target_loss: float|None = None

    def to_law_params(self) -> LawParams:
        return LawParams(b_noise=self.b_noise, eps_max=self.eps_max_adam)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    expected: float
    tolerance: str


@dataclass
class OptimalPoint:
    """
    The empirical optimum at one batch size: best lr, its seed-averaged
    final loss and the seed-median steps S (E = S * batch_size).
    """
    batch_size: int
    lr: float
    mean_final_loss: float
    S: float
    E: float
    n_converged: int
