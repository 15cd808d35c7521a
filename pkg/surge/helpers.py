"""
Seed derivation for reproducible grids. Every random stream a run uses is
named by a tuple of keys below one master seed, e.g. (seed, 'noise', 0),
so any cell can be rerun on its own and produces the same numbers no
matter how the grid was scheduled.
"""
import hashlib
import numbers

import numpy as np


def _key_bytes(key) -> bytes:
    # numbers are keyed by value, not by type: 8, 8.0 and np.int64(8) agree,
    # and so do 0.1 and np.float64(0.1)
    if isinstance(key, (bool, np.bool_)):
        return repr(bool(key)).encode()
    if isinstance(key, numbers.Integral):
        return str(int(key)).encode()
    if isinstance(key, numbers.Real):
        value = float(key)
        if value.is_integer():
            return str(int(value)).encode()
        return value.hex().encode()
    return repr(key).encode()


class SeedStreamHelper:
    def __init__(self, master_seed:int=0) -> None:
        if int(master_seed) != master_seed or master_seed < 0:
            raise ValueError(f'master seed must be a non-negative integer, '
                             f'got {master_seed}')
        self.master_seed = int(master_seed)

    def derive_seed(self, *keys) -> int:
        """
        64 bit seed from the master seed and the given keys. Real keys are
        hashed by their exact binary value, so 0.1 and 0.1000000001 give
        different streams while 0.1 and np.float64(0.1) give the same.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update(str(self.master_seed).encode())
        for key in keys:
            h.update(b'\x1f')
            h.update(_key_bytes(key))
        return int.from_bytes(h.digest(), 'little')

    def rng(self, *keys) -> np.random.Generator:
        return np.random.default_rng(self.derive_seed(*keys))

    def round_seed(self, round_index:int) -> int:
        """
        Seed of one grid round, shared by every (B, lr) cell of that round.
        """
        return self.derive_seed('round', round_index) % (2**31)
