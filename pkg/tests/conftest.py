"""Shared helpers: random valid states and random rule-driven walks."""

from __future__ import annotations

import numpy as np
import pytest

from penumbral import bits, rules
from penumbral.bits import BLACK, KING, PAWN, ROOK, WHITE, board_index
from penumbral.rules import PHASE_MOVE, PHASE_SENSE, Action, WorldState


def random_state(rng: np.random.Generator, max_extra: int = 12) -> WorldState:
    """A random plausible mid-game state: both kings, pawns off back ranks,
    castling rights only where king and rook still sit at home."""
    cells = [None] * 64
    spots = rng.permutation(64)
    it = iter(int(s) for s in spots)
    cells[next(it)] = (WHITE, KING)
    cells[next(it)] = (BLACK, KING)
    n_extra = int(rng.integers(0, max_extra + 1))
    kinds = [PAWN, PAWN, PAWN, bits.KNIGHT, bits.BISHOP, ROOK, bits.QUEEN]
    placed = 0
    for sq in it:
        if placed >= n_extra:
            break
        color = int(rng.integers(0, 2))
        kind = kinds[int(rng.integers(0, len(kinds)))]
        if kind == PAWN and sq // 8 in (0, 7):
            continue
        cells[sq] = (color, kind)
        placed += 1
    boards = [0] * 12
    for sq, piece in enumerate(cells):
        if piece is not None:
            boards[board_index(*piece)] |= 1 << sq
    castling = 0
    for (color, side_char), (kf, _, _, _, _) in bits.CASTLE_GEOMETRY.items():
        rook_sq = {("k"): kf + 3, ("q"): kf - 4}[side_char]
        if cells[kf] == (color, KING) and cells[rook_sq] == (color, ROOK):
            if rng.random() < 0.5:
                castling |= bits.CASTLE_RIGHT[(color, side_char)]
    side = int(rng.integers(0, 2))
    # A plausible en passant square occasionally: behind an enemy pawn that
    # could have just double-stepped.
    ep = -1
    if rng.random() < 0.2:
        mover = 1 - side
        pawn_rank = 3 if mover == WHITE else 4
        pawns = [s for s in range(8 * pawn_rank, 8 * pawn_rank + 8)
                 if cells[s] == (mover, PAWN)]
        if pawns:
            sq = pawns[int(rng.integers(0, len(pawns)))]
            behind = sq - 8 if mover == WHITE else sq + 8
            skipped = sq - 16 if mover == WHITE else sq + 16
            if cells[behind] is None and cells[skipped] is None:
                ep = behind
    phase = PHASE_MOVE if rng.random() < 0.5 else PHASE_SENSE
    t = tuple(boards)
    return WorldState(boards=t, side=side, phase=phase, castling=castling,
                      ep=ep, prev1=t, prev2=t)


def walk_states(rng: np.random.Generator, plies: int, start=None):
    """Random game trajectory via requestable actions; yields each move-phase
    state with the request made from it."""
    state = start if start is not None else rules.initial_state()
    for _ in range(plies):
        if state.winner() is not None:
            return
        if state.phase == PHASE_SENSE:
            state, _ = rules.apply_sense(state, int(rng.integers(0, 64)))
        reqs = rules.requestable_actions(state)
        action = reqs[int(rng.integers(0, len(reqs)))]
        yield state, action
        state, _, _ = rules.apply_move(state, action)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240817))
