"""Synopsis planes: frozen examples plus fold-semantics properties."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from penumbral import stateset, synopsis
from penumbral.bits import (
    BLACK, KING, PAWN, QUEEN, WHITE, board_index, flip_ranks, parse_square,
)
from penumbral.rules import (
    PHASE_SENSE, WorldState, apply_move, apply_sense, initial_state,
    Action,
)
from penumbral.stateset import StateArray
from penumbral.synopsis import NUM_PLANES, PLANE_NAMES, planes_to_array
from test_stateset import SCRIPT, collect_tracked_sets

# (AND plane, OR plane) pairs over the same predicate, including the
# cross-strength relations among the attackability triples.
SUBSET_PAIRS = [
    (18, 25), (19, 26), (20, 27), (21, 28), (22, 29), (23, 30), (24, 31),
    (36, 37), (37, 38), (36, 38), (39, 40), (40, 41), (39, 41),
    (39, 36), (40, 37), (41, 38),
    (42, 43), (42, 37), (43, 38), (44, 37),
    (45, 46), (45, 37), (46, 38), (47, 48), (47, 37), (48, 38),
    (49, 38), (50, 38),
    (51, 52), (53, 54), (53, 51), (54, 52),
    (55, 56), (55, 51), (56, 52), (57, 58), (57, 51), (58, 52),
    (59, 60), (59, 51), (60, 52), (61, 62), (61, 51), (62, 52),
    (63, 52), (64, 52),
    (71, 72), (74, 75), (77, 78), (83, 82),
    (86, 93), (87, 94), (88, 95), (89, 96), (90, 97), (91, 98), (92, 99),
]

AND_PLANES = [18, 19, 20, 21, 22, 23, 24, 36, 37, 39, 40, 42, 44, 45, 47,
              51, 53, 55, 57, 59, 61, 68, 71, 74, 77, 80, 83,
              86, 87, 88, 89, 90, 91, 92]
OR_PLANES = [25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 38, 41, 43, 46, 48,
             49, 50, 52, 54, 56, 58, 60, 62, 63, 64, 65, 66, 67, 72, 75, 78,
             82, 93, 94, 95, 96, 97, 98, 99, 100, 101, 102, 103]


def initial_singleton():
    return stateset.singleton(initial_state())


def perturbed_set(rng, n_members=8):
    """A coherent set: shared White placement, scrambled Black pieces."""
    base = initial_state()
    states = []
    occ_white = base.occupancy(WHITE)
    for _ in range(n_members):
        boards = list(base.boards)
        black_squares = [s for s in range(64) if base.occupancy(BLACK) >> s & 1]
        free = [s for s in range(64)
                if not (occ_white >> s & 1) and 8 <= s]
        rng.shuffle(black_squares)
        moved = {}
        for sq in black_squares:
            if rng.random() < 0.4:
                dest = int(free[int(rng.integers(0, len(free)))])
                if dest in moved.values() or dest >= 56 and _kind_at(base, sq) == PAWN:
                    moved[sq] = sq
                else:
                    moved[sq] = dest
            else:
                moved[sq] = sq
        if len(set(moved.values())) != len(moved):
            continue
        for c in range(6, 12):
            bb = 0
            for sq, dest in moved.items():
                if base.boards[c] >> sq & 1:
                    bb |= 1 << dest
            boards[c] = bb
        s = dataclasses.replace(
            base, boards=tuple(boards),
            prev1=tuple(boards), prev2=tuple(boards))
        if s.occupancy(BLACK) & occ_white:
            continue
        states.append(s)
    if not states:
        states = [base]
    return StateArray.from_states(states)


def _kind_at(state, sq):
    got = state.piece_at(sq)
    return None if got is None else got[1]


def test_initial_position_frozen_planes():
    p = synopsis.synopsis(initial_singleton(), WHITE)
    assert int(p[19]) == 0x00FF000000000000
    assert int(p[12]) == 0x000000000000FF00
    assert int(p[24]) == 1 << parse_square("e8")
    assert int(p[17]) == 1 << parse_square("e1")
    assert int(p[10]) == 0xFFFFFFFFFFFFFFFF
    assert int(p[80]) == 0x0000FFFFFFFF0000
    assert int(p[68]) == 0xFFFFFFFFFFFFFFFF
    assert int(p[38]) == 0x0000000000FFFF7E
    assert int(p[36]) == int(p[37]) == int(p[38])
    assert int(p[44]) == 0x0000000000A51800
    assert int(p[76]) == 0x10101010101010EF
    assert int(p[81]) == (1 << parse_square("g1")) | (1 << parse_square("c1"))
    assert int(p[67]) == (1 << parse_square("g8")) | (1 << parse_square("c8"))
    assert int(p[82]) == 0 and int(p[83]) == 0
    assert int(p[66]) == 0x0000FFFF00000000
    assert int(p[32]) == int(p[33]) == int(p[34]) == int(p[35]) == 0


def test_queen_maybe_missing_frozen_planes():
    base = initial_state()
    boards = list(base.boards)
    qcol = board_index(BLACK, QUEEN)
    boards[qcol] = 0
    without = dataclasses.replace(base, boards=tuple(boards),
                                  prev1=tuple(boards), prev2=tuple(boards))
    sa = StateArray.from_states([base, without])
    p = synopsis.synopsis(sa, WHITE)
    assert int(p[23]) == 0
    assert int(p[30]) == 1 << parse_square("d8")


def test_scripted_game_subsample_sees_knight_on_c6(rng):
    _, trackers, _ = collect_tracked_sets(SCRIPT)
    full = trackers[WHITE].current.sa
    sub = stateset.subsample(full, 128, rng)
    p = synopsis.synopsis(sub, WHITE)
    assert int(p[27]) >> parse_square("c6") & 1


def test_black_perspective_flips_board_frame():
    world = initial_state()
    world, _ = apply_sense(world, parse_square("b2"))
    world, _, _ = apply_move(world, Action.from_text("move:e2e4"))
    sa = stateset.singleton(world)
    p = synopsis.synopsis(sa, BLACK)
    np.testing.assert_array_equal(p[0:10], synopsis._CONSTANTS)
    # Black's own pawns sit on the second rank of the flipped frame.
    assert int(p[12]) == 0x000000000000FF00
    white_pawns_absolute = (0xFF00 ^ (1 << parse_square("e2"))) \
        | (1 << parse_square("e4"))
    assert int(p[19]) == flip_ranks(white_pawns_absolute)
    assert int(p[17]) == 1 << parse_square("e1")  # e8 flips onto e1
    # The move event e2e4 appears flipped in the last-from/last-to planes.
    assert int(p[32]) == flip_ranks(1 << parse_square("e2"))
    assert int(p[33]) == flip_ranks(1 << parse_square("e4"))


def test_stage_plane_tracks_phase():
    world = initial_state()
    sa = stateset.singleton(world)
    assert int(synopsis.synopsis(sa, WHITE)[10]) == 0xFFFFFFFFFFFFFFFF
    moved = stateset.advance_phase(sa)
    assert int(synopsis.synopsis(moved, WHITE)[10]) == 0


def test_subset_pairs_on_tracked_and_perturbed_sets(rng):
    _, trackers, _ = collect_tracked_sets(SCRIPT)
    sets = [trackers[WHITE].current.sa,
            stateset.subsample(trackers[WHITE].current.sa, 32, rng)]
    for _ in range(30):
        sets.append(perturbed_set(rng))
    for sa in sets:
        p = synopsis.synopsis(sa, sa.side)
        for a, o in SUBSET_PAIRS:
            assert int(p[a]) & ~int(p[o]) == 0, (PLANE_NAMES[a], PLANE_NAMES[o])


def test_permutation_invariance(rng):
    for _ in range(10):
        sa = perturbed_set(rng)
        if len(sa) < 2:
            continue
        perm = rng.permutation(len(sa))
        p1 = synopsis.synopsis(sa, sa.side)
        p2 = synopsis.synopsis(sa.take(perm), sa.side)
        np.testing.assert_array_equal(p1, p2)


def test_monotone_under_member_addition(rng):
    for _ in range(10):
        sa = perturbed_set(rng, n_members=10)
        if len(sa) < 3:
            continue
        smaller = sa.take(np.arange(len(sa) - 1))
        p_small = synopsis.synopsis(smaller, sa.side)
        p_full = synopsis.synopsis(sa, sa.side)
        for i in AND_PLANES:
            assert int(p_full[i]) & ~int(p_small[i]) == 0, PLANE_NAMES[i]
        for i in OR_PLANES:
            assert int(p_small[i]) & ~int(p_full[i]) == 0, PLANE_NAMES[i]


def test_constants_everywhere(rng):
    from test_stateset import owner_decision_sets
    inputs = [initial_singleton(), perturbed_set(rng),
              owner_decision_sets(SCRIPT)[3]]
    for sa in inputs:
        p = synopsis.synopsis(sa, sa.side)
        np.testing.assert_array_equal(p[0:10], synopsis._CONSTANTS)


def test_uniform_own_assertion_fires_on_varied_own():
    base = initial_state()
    boards = list(base.boards)
    pcol = board_index(WHITE, PAWN)
    boards[pcol] ^= (1 << parse_square("a2")) | (1 << parse_square("a3"))
    variant = dataclasses.replace(base, boards=tuple(boards),
                                  prev1=tuple(boards), prev2=tuple(boards))
    sa = StateArray.from_states([base, variant])
    with pytest.raises(AssertionError):
        synopsis.synopsis(sa, WHITE)
    p = synopsis.synopsis(sa, WHITE, assume_uniform_own=False)
    # OR-fold own pawns include both the home and advanced square.
    assert int(p[12]) >> parse_square("a2") & 1
    assert int(p[12]) >> parse_square("a3") & 1


def test_planes_to_array_shapes_and_values():
    p = synopsis.synopsis(initial_singleton(), WHITE)
    arr = planes_to_array(p)
    assert arr.shape == (NUM_PLANES, 8, 8)
    assert arr.dtype == np.float32
    # Own pawns occupy the second rank row.
    assert arr[12].sum() == 8
    np.testing.assert_array_equal(arr[12][1], np.ones(8))
    assert len(PLANE_NAMES) == NUM_PLANES
