"""Zobrist hashing for world states and permutation-invariant set hashes.

State identity covered by the hash: piece placement, side to move, phase,
castling rights and the en passant square.  Move metadata and the previous
placement snapshots are deliberately excluded so that transposed histories
reaching the same position collapse together.
"""

from __future__ import annotations

import numpy as np

from .bits import MASK64, NUM_BOARDS

_rng = np.random.Generator(np.random.PCG64(0x5EED0FDA))

PIECE_KEYS = _rng.integers(0, 1 << 64, size=(NUM_BOARDS, 64), dtype=np.uint64)
SIDE_KEY = np.uint64(_rng.integers(0, 1 << 64, dtype=np.uint64))
PHASE_KEY = np.uint64(_rng.integers(0, 1 << 64, dtype=np.uint64))
_CASTLE_BASE = _rng.integers(0, 1 << 64, size=4, dtype=np.uint64)
EP_KEYS = _rng.integers(0, 1 << 64, size=64, dtype=np.uint64)

# One key per rights bitmask, the XOR of the held rights' base keys.
CASTLE_KEYS = np.zeros(16, dtype=np.uint64)
for _m in range(16):
    k = np.uint64(0)
    for _b in range(4):
        if _m >> _b & 1:
            k ^= _CASTLE_BASE[_b]
    CASTLE_KEYS[_m] = k

PIECE_KEYS_INT = [[int(x) for x in row] for row in PIECE_KEYS]
SIDE_KEY_INT = int(SIDE_KEY)
PHASE_KEY_INT = int(PHASE_KEY)
CASTLE_KEYS_INT = [int(x) for x in CASTLE_KEYS]
EP_KEYS_INT = [int(x) for x in EP_KEYS]


def zobrist_full(boards, side: int, phase: int, castling: int, ep: int) -> int:
    """Recompute the hash from scratch; the reference for incremental updates."""
    h = 0
    for b in range(NUM_BOARDS):
        bb = boards[b]
        while bb:
            low = bb & -bb
            h ^= PIECE_KEYS_INT[b][low.bit_length() - 1]
            bb ^= low
    if side:
        h ^= SIDE_KEY_INT
    if phase:
        h ^= PHASE_KEY_INT
    h ^= CASTLE_KEYS_INT[castling]
    if ep >= 0:
        h ^= EP_KEYS_INT[ep]
    return h


def mix64(z: int) -> int:
    """splitmix64 finalizer; the mixing step of the set hash fold."""
    if not isinstance(z, np.ndarray):
        z = int(z)
    z &= MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def set_hash(hashes) -> int:
    """Order-independent hash of a collection of state hashes.

    Members are sorted and folded through mix64, then the member count is
    mixed in, so any permutation of the same multiset gives the same value.
    """
    if isinstance(hashes, np.ndarray):
        ordered = np.sort(hashes).tolist()
    else:
        ordered = sorted(int(h) for h in hashes)
    h = 0x9E3779B97F4A7C15
    for z in ordered:
        h = mix64(h ^ z)
    return mix64(h ^ len(ordered))


def stats_key(set_h: int, action_index: int) -> int:
    """Key for one (infostate, action) statistics entry."""
    return mix64(set_h ^ (action_index * 0x9E3779B97F4A7C15 & MASK64))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def stats_keys(set_h, actions: np.ndarray) -> np.ndarray:
    """Vectorized stats_key for a batch of action indices."""
    return mix64(np.uint64(set_h) ^ (actions.astype(np.uint64) * _GOLDEN))
