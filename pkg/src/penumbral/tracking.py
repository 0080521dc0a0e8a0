"""Exhaustive possible-state tracking for one player across a game.

The tracker keeps a snapshot of the possible-state set after every move
event (own and opposing), filters the newest snapshot by private sense
results, expands over all consistent opposing moves, and propagates any
new information backward: a state is deleted from an older snapshot when
none of its successors survived in the next one.  Backward passes compare
successor hashes only, which is exact here because every snapshot was
already observation-filtered when it was built.

Snapshots always sit at a sense phase (the position right after a move
event); phase bookkeeping for the in-between steps lives in the kernels.
"""

from __future__ import annotations

import numpy as np

from . import stateset
from .rules import Action, PHASE_SENSE, WorldState, initial_state
from .stateset import StateArray

# Snapshots larger than this are left alone by backward re-filtering; the
# opposing-move re-expansion it needs grows too costly past desk scale.
_RETRO_MEMBER_LIMIT = 32_768


class TrackedSet:
    """One snapshot: a StateArray plus its sorted-hash view (lazy)."""

    __slots__ = ("sa", "_sorted_z")

    def __init__(self, sa: StateArray):
        self.sa = sa
        self._sorted_z = None

    def __len__(self) -> int:
        return len(self.sa)

    @property
    def sorted_z(self) -> np.ndarray:
        if self._sorted_z is None:
            self._sorted_z = np.sort(self.sa.z)
        return self._sorted_z

    def contains_state(self, state: WorldState) -> bool:
        z = np.uint64(state.zobrist())
        table = self.sorted_z
        if table.size == 0:
            return False
        return bool(stateset.member_in(np.array([z], dtype=np.uint64), table)[0])


class Transition:
    """How snapshot i becomes snapshot i+1 (for backward re-filtering)."""

    __slots__ = ("kind", "requested", "executed", "capture_square")

    def __init__(self, kind, requested=None, executed=None, capture_square=None):
        self.kind = kind  # "own" | "opp"
        self.requested = requested
        self.executed = executed
        self.capture_square = capture_square


class Tracker:
    """Maintains X_0 .. X_t for one player.

    cap bounds the number of enumerated states.  Exceeding it sets the
    sticky overflow flag and freezes the tracker: the last exact snapshot
    is kept as-is and all later events are ignored.  While overflow is
    False the exactness invariant holds (the true state is a member of
    every snapshot); afterwards the snapshots describe only the prefix of
    the game up to the freeze.  max_sizes records |X_i| as first built,
    before later backward pruning.
    """

    def __init__(self, color: int, cap: int = 9_000_000,
                 start: WorldState | None = None, keep_history: bool = True):
        self.color = color
        self.cap = cap
        self.keep_history = keep_history
        self.overflow = False
        root = start if start is not None else initial_state()
        self.history = [TrackedSet(stateset.singleton(root))]
        self.transitions: list[Transition] = []
        self.max_sizes = [1]

    @property
    def current(self) -> TrackedSet:
        return self.history[-1]

    def size(self) -> int:
        return len(self.current)

    # -- event handlers -----------------------------------------------------

    def on_own_sense(self, sense_sq: int, result) -> None:
        if self.overflow:
            return
        sa = self.current.sa
        mask = stateset.sense_mask(sa, sense_sq, result)
        self._replace_newest(sa.take(mask))
        self._retro()

    def on_own_move(self, requested: Action, executed: Action,
                    capture_square: int | None) -> None:
        if self.overflow:
            return
        sa = self.current.sa
        if sa.phase == PHASE_SENSE:
            sa = stateset.advance_phase(sa)
        nxt = stateset.filter_apply_own_move(sa, requested, executed, capture_square)
        self._append(nxt, Transition("own", requested, executed, capture_square))
        self._retro()

    def on_opponent_move(self, capture_square: int | None) -> None:
        if self.overflow:
            return
        sa = self.current.sa
        nxt, overflowed = stateset.expand_opponent_move(sa, capture_square, self.cap)
        if overflowed or nxt is None:
            # Too many successors to enumerate (or none at all, which exact
            # tracking rules out): freeze rather than carry an approximation.
            self.overflow = True
            return
        self._append(nxt, Transition("opp", capture_square=capture_square))
        self._retro()

    # -- internals ----------------------------------------------------------

    def _replace_newest(self, sa: StateArray) -> None:
        self._check_nonempty(sa)
        self.history[-1] = TrackedSet(sa)

    def _append(self, sa: StateArray, transition: Transition) -> None:
        self._check_nonempty(sa)
        if self.keep_history:
            self.history.append(TrackedSet(sa))
            self.transitions.append(transition)
        else:
            self.history = [TrackedSet(sa)]
            self.transitions = []
        self.max_sizes.append(len(sa))

    def _check_nonempty(self, sa: StateArray) -> None:
        if len(sa) == 0 and not self.overflow:
            raise AssertionError("possible-state set emptied without overflow")

    def _retro(self) -> None:
        """Backward pass: drop states whose successors all died.

        Stops at the first snapshot left unchanged (nothing older can then
        change either), and likewise at any snapshot too large to re-expand
        affordably; stopping early just leaves supersets behind, which
        keeps the membership invariant intact.  Skipped entirely after a
        freeze: the frozen history no longer receives new information.
        """
        if self.overflow or not self.keep_history:
            return
        for i in range(len(self.history) - 2, -1, -1):
            cur = self.history[i]
            nxt_z = self.history[i + 1].sorted_z
            tr = self.transitions[i]
            n = len(cur)
            if tr.kind == "opp" and n > _RETRO_MEMBER_LIMIT:
                break
            if tr.kind == "own":
                sa = cur.sa
                if sa.phase == PHASE_SENSE:
                    sa = stateset.advance_phase(sa)
                mask, succ_z = stateset.own_move_successor_hashes(
                    sa, tr.requested, tr.executed, tr.capture_square)
                keep = np.zeros(n, dtype=bool)
                kept_rows = np.nonzero(mask)[0]
                alive = stateset.member_in(succ_z, nxt_z)
                keep[kept_rows[alive]] = True
            else:
                midx, succ_z = stateset.successor_hash_pairs(cur.sa, tr.capture_square)
                keep = np.zeros(n, dtype=bool)
                if midx is not None:
                    alive = stateset.member_in(succ_z, nxt_z)
                    keep[midx[alive]] = True
            if keep.all():
                break
            kept = cur.sa.take(keep)
            self._check_nonempty(kept)
            self.history[i] = TrackedSet(kept)
