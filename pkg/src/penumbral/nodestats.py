"""Visit statistics for (infostate, action) pairs.

The tree over approximate infostates is a direct-mapped hash table: each
key owns one slot, and a key that maps to an occupied slot with a different
full key simply overwrites it.  Entries hold the visit count n, the value
total q, and the minimum observed value m (which backs the paranoia term).
"""

from __future__ import annotations

import numpy as np


class NodeStats:
    """Fixed-capacity direct-mapped table of per-action search statistics."""

    def __init__(self, capacity_bits: int = 22):
        cap = 1 << capacity_bits
        self._mask = np.uint64(cap - 1)
        self.keys = np.zeros(cap, dtype=np.uint64)
        self.used = np.zeros(cap, dtype=bool)
        self.n = np.zeros(cap, dtype=np.float32)
        self.q = np.zeros(cap, dtype=np.float32)
        self.m = np.zeros(cap, dtype=np.float32)

    def __len__(self):
        return int(self.used.sum())

    @property
    def capacity(self) -> int:
        return len(self.keys)

    def _slot(self, key):
        return int(np.uint64(key) & self._mask)

    def read(self, keys: np.ndarray):
        """(n, q, m) for a batch of keys; misses read as fresh entries.

        Pure lookup: mismatched slots are left untouched, so scanning the
        sibling actions of a node never evicts anything.
        """
        slots = (np.asarray(keys, dtype=np.uint64) & self._mask).astype(np.int64)
        hit = self.used[slots] & (self.keys[slots] == keys)
        n = np.where(hit, self.n[slots], np.float32(0.0))
        q = np.where(hit, self.q[slots], np.float32(0.0))
        m = np.where(hit, self.m[slots], np.float32(np.inf))
        return n, q, m

    def _claim(self, key) -> int:
        s = self._slot(key)
        if not (self.used[s] and self.keys[s] == np.uint64(key)):
            self.keys[s] = key
            self.used[s] = True
            self.n[s] = 0.0
            self.q[s] = 0.0
            self.m[s] = np.inf
        return s

    def visit(self, key, n_vl: float) -> None:
        """Apply a virtual loss when an action is selected in a playout."""
        s = self._claim(key)
        self.n[s] += n_vl
        self.q[s] -= n_vl

    def backup(self, key, value: float, n_vl: float) -> None:
        """Fold a playout value into an entry, reverting its virtual loss."""
        s = self._claim(key)
        self.n[s] += 1.0 - n_vl
        self.q[s] += value + n_vl
        self.m[s] = min(self.m[s], np.float32(value))
