"""
Training runs and the (batch size x learning rate x round) grid search.

A run starts from a seeded initial point, steps the optimizer on sampled
mini-batch gradients until the full-data loss first reaches the target
(S steps), then trains extra_steps more steps and records the final loss.
Every random number a run draws comes from streams derived from its seed,
so a cell gives the same record whether it runs alone, in a serial grid or
in a process pool. The streams depend on the seed and the workload only:
all cells of a round see the same initial point and the same standard
normal noise draws.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from tqdm import tqdm

from helpers import SeedStreamHelper
from indexing import RunRecordIndexer
from models import GridConfig, OptimalPoint, OptimizerConfig, OptimizerState, \
    RunRecord
from optim import step


log = logging.getLogger(__name__)


class NoConvergedRunsError(LookupError):
    pass


def _threshold(target_loss:float, target_rtol:float) -> float:
    return target_loss + target_rtol * abs(target_loss)


def _step_loss(workload, config:OptimizerConfig, state:OptimizerState,
               theta:np.ndarray, batch_size:int,
               rng:np.random.Generator) -> tuple:
    g = workload.sample_batch_gradient(theta, batch_size, rng)
    theta, state = step(config, state, theta, g)
    if not np.all(np.isfinite(theta)):
        return theta, state, math.inf
    loss = workload.loss(theta)
    return theta, state, loss if math.isfinite(loss) else math.inf


def run_training(workload, config:OptimizerConfig, batch_size:int, lr:float,
                 seed:int, target_loss:float, extra_steps:int=50,
                 max_steps:int=10000, target_rtol:float=1e-9) -> RunRecord:
    """
    S is the first step count t >= 1 after which the full-data loss is at
    most target_loss (up to a relative target_rtol). Runs that hit
    max_steps first are not converged and carry no final loss. A
    non-finite loss at any point marks the run diverged with final_loss
    +inf.
    """
    if int(batch_size) != batch_size or batch_size < 1:
        raise ValueError(f'batch_size must be a positive integer, '
                         f'got {batch_size}')
    if max_steps < 1 or extra_steps < 0:
        raise ValueError('max_steps must be >= 1 and extra_steps >= 0')
    config = config.with_lr(lr)
    streams = SeedStreamHelper(seed)
    theta = workload.initial_theta(streams.rng(*workload.stream_keys('init')),
                                   target_loss)
    rng = streams.rng(*workload.stream_keys('noise'))
    state = OptimizerState.zeros(workload.dim)
    threshold = _threshold(target_loss, target_rtol)

    diverged = RunRecord(batch_size, lr, seed, False, final_loss=math.inf)
    with np.errstate(over='ignore', invalid='ignore'):
        S = None
        for t in range(1, max_steps + 1):
            theta, state, loss = _step_loss(workload, config, state, theta,
                                            batch_size, rng)
            if math.isinf(loss):
                log.debug('run B=%d lr=%g seed=%d diverged at step %d',
                          batch_size, lr, seed, t)
                return diverged
            if loss <= threshold:
                S = t
                break
        if S is None:
            return RunRecord(batch_size, lr, seed, False)

        for _ in range(extra_steps):
            theta, state, loss = _step_loss(workload, config, state, theta,
                                            batch_size, rng)
            if math.isinf(loss):
                log.debug('run B=%d lr=%g seed=%d diverged after reaching '
                          'the target', batch_size, lr, seed)
                return diverged
    return RunRecord(batch_size, lr, seed, True, S, S * batch_size,
                     workload.loss(theta))


def _run_cell(task:tuple) -> RunRecord:
    workload, grid, batch_size, lr, seed = task
    try:
        return run_training(workload, grid.optimizer, batch_size, lr, seed,
                            grid.target_loss, grid.extra_steps,
                            grid.max_steps, grid.target_rtol)
    except Exception as e:
        log.warning('grid cell B=%d lr=%g seed=%d failed: %s', batch_size,
                    lr, seed, e)
        return RunRecord(batch_size, lr, seed, False)


def grid_search(workload, grid:GridConfig, jobs:int=1,
                progress:bool=False) -> list:
    """
    One RunRecord per (B, lr, round) cell, in GridConfig.cells() order.
    With jobs > 1 the cells run in a process pool; executor.map keeps the
    output in cell order regardless of completion order.
    """
    if jobs < 1:
        raise ValueError(f'jobs must be >= 1, got {jobs}')
    streams = SeedStreamHelper(grid.seed)
    tasks = [(workload, grid, b, lr, streams.round_seed(r))
             for b, lr, r in grid.cells()]
    log.info('grid search: %d batch sizes x %d lrs x %d rounds on %d '
             'workers', len(grid.batch_sizes), len(grid.lrs), grid.rounds,
             jobs)

    if jobs == 1:
        results = map(_run_cell, tasks)
        return list(tqdm(results, total=len(tasks), disable=not progress,
                         desc='grid'))
    chunksize = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        results = executor.map(_run_cell, tasks, chunksize=chunksize)
        return list(tqdm(results, total=len(tasks), disable=not progress,
                         desc='grid'))


def empirical_optimal_lr(records:list, batch_size:int) -> tuple:
    """
    (lr, mean_final_loss) of the learning rate with the lowest seed-averaged
    final loss at this batch size, among the learning rates that converged
    in at least half of their rounds. Ties go to the smaller lr.
    """
    indexer = records if isinstance(records, RunRecordIndexer) \
        else RunRecordIndexer(records)
    best = None
    for summary in indexer.lr_summaries(batch_size):
        if not summary.mostly_converged:
            continue
        if best is None or summary.mean_final_loss < best.mean_final_loss:
            best = summary
    if best is None:
        raise NoConvergedRunsError(f'no converged runs at batch size '
                                   f'{batch_size}')
    return best.lr, best.mean_final_loss


def optimal_points(records:list) -> list:
    """
    The empirical optimum for every batch size that has one, ordered by
    batch size. Batch sizes without converged runs are skipped.
    """
    indexer = RunRecordIndexer(records)
    points = []
    for batch_size in indexer.get_batch_sizes():
        try:
            lr, mean_loss = empirical_optimal_lr(indexer, batch_size)
        except NoConvergedRunsError:
            log.warning('batch size %d has no converged learning rate, '
                        'skipped', batch_size)
            continue
        summary = indexer.summarize(batch_size, lr)
        points.append(OptimalPoint(batch_size, lr, mean_loss,
                                   summary.median_S,
                                   summary.median_S * batch_size,
                                   summary.n_converged))
    if not points:
        raise NoConvergedRunsError('no batch size has converged runs')
    return points


def extract_se_points(records:list) -> list:
    """
    (1/E, 1/S) at the empirical optimal lr of every batch size, using the
    seed-median S.
    """
    return [(1 / p.E, 1 / p.S) for p in optimal_points(records)]
