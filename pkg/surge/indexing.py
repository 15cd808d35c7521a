from dataclasses import dataclass

import numpy as np

from models import RunRecord


@dataclass
class LrSummary:
    lr: float
    n_rounds: int
    n_converged: int
    mean_final_loss: float|None
    median_S: float|None

    @property
    def mostly_converged(self) -> bool:
        return self.n_converged > 0 and 2 * self.n_converged >= self.n_rounds


class RunRecordIndexer:
    """
    Reverse index over grid-search run records, grouping them by batch size
    and then learning rate. Records can be indexed incrementally, e.g. as
    grid cells finish, and the index does not care about arrival order:
    every getter returns its results sorted.

    The following dictionaries are populated:
    - self._cells: (batch_size, lr) -> list of records of every round
    - self._lrs: batch_size -> set of learning rates seen at that size

    A learning rate counts as converged at a batch size when at least half
    of its rounds reached the target loss. Its mean final loss only
    averages those converged rounds; diverged rounds are left out rather
    than penalized.
    """
    def __init__(self, records:list|None=None) -> None:
        self.initialize_indices()
        if records is not None:
            self.index(records)

    def initialize_indices(self) -> None:
        self._cells = {}
        self._lrs = {}

    def index(self, records:list) -> None:
        for record in records:
            self._index_record(record)

    def _index_record(self, record:RunRecord) -> None:
        key = (record.batch_size, record.lr)
        if key not in self._cells:
            self._cells[key] = []
        self._cells[key].append(record)
        if record.batch_size not in self._lrs:
            self._lrs[record.batch_size] = set()
        self._lrs[record.batch_size].add(record.lr)

    def __len__(self) -> int:
        return sum(len(records) for records in self._cells.values())

    def get_batch_sizes(self) -> list:
        return sorted(self._lrs)

    def get_lrs(self, batch_size:int) -> list:
        return sorted(self._lrs.get(batch_size, ()))

    def get_records(self, batch_size:int, lr:float|None=None) -> list:
        if lr is not None:
            records = self._cells.get((batch_size, lr), [])
        else:
            records = [r for lr in self.get_lrs(batch_size)
                       for r in self._cells[(batch_size, lr)]]
        return sorted(records, key=lambda r: (r.lr, r.seed))

    def get_converged(self, batch_size:int, lr:float) -> list:
        return [r for r in self.get_records(batch_size, lr) if r.converged]

    def summarize(self, batch_size:int, lr:float) -> LrSummary:
        records = self.get_records(batch_size, lr)
        converged = [r for r in records if r.converged]
        if not converged:
            return LrSummary(lr, len(records), 0, None, None)
        return LrSummary(
            lr, len(records), len(converged),
            float(np.mean([r.final_loss for r in converged])),
            float(np.median([r.S for r in converged])))

    def lr_summaries(self, batch_size:int) -> list:
        return [self.summarize(batch_size, lr)
                for lr in self.get_lrs(batch_size)]
