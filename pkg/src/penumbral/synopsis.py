"""The 104-plane synopsis: a fixed-size bitboard summary of a state set.

Each plane is a 64-bit mask produced by folding a per-state predicate over
the members of a possible-state set with AND ("definitely") or OR
("possibly"/"somehow").  Constant planes ignore the members, and planes
describing the perspective player's own pieces read a single member because
own placement is shared across a correctly built set.

Planes are oriented so the perspective player's first rank is rank 1; for
Black that is a rank flip of every plane except the ten constants, which
keep their absolute definitions.
"""

from __future__ import annotations

import numpy as np

from .bits import (
    BISHOP, CASTLE_GEOMETRY, CASTLE_RIGHT, DARK_SQUARES, DIAG_DIRS, FILE_A,
    FILE_H, FILES, KING, KING_ATTACKS, KNIGHT, KNIGHT_ATTACKS, LIGHT_SQUARES,
    MASK64, ORTHO_DIRS, PAWN, PAWN_ATTACKS, POSITIVE_DIRS, QUEEN, RANK_1,
    RANK_8, RANKS, RAYS, ROOK, U0, U1, WHITE, bit_index, board_index,
    fill_attacks, flip_ranks, lsb_isolate, msb_isolate, other, pack_squares,
    pawn_attack_set, shift_dir, unpack_squares,
)
from .rules import PHASE_SENSE
from .stateset import StateArray

NUM_PLANES = 104

_EAST = np.uint64(sum(FILES[4:]))
_WEST = np.uint64(sum(FILES[:4]))
_SOUTH = np.uint64(sum(RANKS[:4]))
_NORTH = np.uint64(sum(RANKS[4:]))
_CONSTANTS = np.array(
    [_EAST, _WEST, _SOUTH, _NORTH, RANK_1, RANK_8, FILE_A, FILE_H,
     DARK_SQUARES, LIGHT_SQUARES], dtype=np.uint64)

_FULL = np.uint64(MASK64)
_NOT_H = np.uint64(~FILE_H & MASK64)
_NOT_A = np.uint64(~FILE_A & MASK64)
_NOT_GH = np.uint64(~(FILE_H | FILE_H >> 1) & MASK64)
_NOT_AB = np.uint64(~(FILE_A | FILE_A << 1) & MASK64)

PLANE_NAMES = [
    "east_side", "west_side", "south_side", "north_side",
    "rank_1", "rank_8", "a_file", "h_file", "dark_squares", "light_squares",
    "stage",
    "not_own_piece",
    "own_pawns", "own_knights", "own_bishops", "own_rooks",
    "own_queens", "own_king",
    "definitely_not_opposing_pieces",
    "definitely_opposing_pawns", "definitely_opposing_knights",
    "definitely_opposing_bishops", "definitely_opposing_rooks",
    "definitely_opposing_queens", "definitely_opposing_king",
    "possibly_not_opposing_pieces",
    "possibly_opposing_pawns", "possibly_opposing_knights",
    "possibly_opposing_bishops", "possibly_opposing_rooks",
    "possibly_opposing_queens", "possibly_opposing_kings",
    "last_from", "last_to", "last_own_capture", "last_opposing_capture",
    "definitely_attackable", "definitely_attackable_somehow",
    "possibly_attackable",
    "definitely_doubly_attackable", "definitely_doubly_attackable_somehow",
    "possibly_doubly_attackable",
    "definitely_attackable_by_pawns", "possibly_attackable_by_pawns",
    "definitely_attackable_by_knights",
    "definitely_attackable_by_bishops", "possibly_attackable_by_bishops",
    "definitely_attackable_by_rooks", "possibly_attackable_by_rooks",
    "possibly_attackable_without_king", "possibly_attackable_without_pawns",
    "definitely_attackable_by_opponent", "possibly_attackable_by_opponent",
    "definitely_doubly_attackable_by_opponent",
    "possibly_doubly_attackable_by_opponent",
    "definitely_attackable_by_opposing_pawns",
    "possibly_attackable_by_opposing_pawns",
    "definitely_attackable_by_opposing_knights",
    "possibly_attackable_by_opposing_knights",
    "definitely_attackable_by_opposing_bishops",
    "possibly_attackable_by_opposing_bishops",
    "definitely_attackable_by_opposing_rooks",
    "possibly_attackable_by_opposing_rooks",
    "possibly_attackable_by_opponent_without_king",
    "possibly_attackable_by_opponent_without_pawns",
    "possibly_safe_opposing_king",
    "opponent_move_targets",
    "possible_castle_state_for_opponent",
    "known_squares",
    "own_king_king_neighbors", "own_king_knight_neighbors",
    "definitely_opposing_knights_near_king",
    "possibly_opposing_knights_near_king",
    "own_king_bishop_neighbors",
    "definitely_opposing_bishops_near_king",
    "possibly_opposing_bishops_near_king",
    "own_king_rook_neighbors",
    "definitely_opposing_rooks_near_king",
    "possibly_opposing_rooks_near_king",
    "all_own_pieces",
    "definitely_empty_squares",
    "may_castle_eventually", "possibly_may_castle", "definitely_may_castle",
    "own_queens_rook_neighbors", "own_queens_bishop_neighbors",
    "previous_definitely_not_opposing_pieces",
    "previous_definitely_opposing_pawns",
    "previous_definitely_opposing_knights",
    "previous_definitely_opposing_bishops",
    "previous_definitely_opposing_rooks",
    "previous_definitely_opposing_queens",
    "previous_definitely_opposing_king",
    "previous_possibly_not_opposing_pieces",
    "previous_possibly_opposing_pawns",
    "previous_possibly_opposing_knights",
    "previous_possibly_opposing_bishops",
    "previous_possibly_opposing_rooks",
    "previous_possibly_opposing_queens",
    "previous_possibly_opposing_king",
    "previous_last_from", "previous_last_to",
    "previous_own_capture", "previous_opposing_capture",
]
assert len(PLANE_NAMES) == NUM_PLANES

_KNIGHT_STEPS = ((1, 2), (2, 1), (2, -1), (1, -2),
                 (-1, -2), (-2, -1), (-2, 1), (-1, 2))


def _and_fold(arr: np.ndarray) -> np.uint64:
    return np.bitwise_and.reduce(arr)


def _or_fold(arr: np.ndarray) -> np.uint64:
    return np.bitwise_or.reduce(arr)


def _square_fold(idx: np.ndarray) -> np.uint64:
    """OR of single-square bits over the valid (>= 0) entries of idx."""
    valid = idx >= 0
    if not valid.any():
        return U0
    return _or_fold(U1 << idx[valid].astype(np.uint64))


def _knight_steps(knights: np.ndarray):
    """The eight single-jump planes of a knight board, edge-clipped."""
    for df, dr in _KNIGHT_STEPS:
        masked = knights
        if df == 1:
            masked = masked & _NOT_H
        elif df == 2:
            masked = masked & _NOT_GH
        elif df == -1:
            masked = masked & _NOT_A
        elif df == -2:
            masked = masked & _NOT_AB
        delta = dr * 8 + df
        yield (masked << np.uint64(delta)) if delta > 0 \
            else (masked >> np.uint64(-delta))


def _direction_planes(boards: np.ndarray, color: int, occ: np.ndarray):
    """Attack planes split by (kind, direction), keyed by piece kind.

    Attack rays stop at the first occupied square, so each plane carries at
    most one attacker per target square; summing their unpacked forms yields
    per-square attacker counts.
    """
    empty = ~occ

    def bb(kind):
        return boards[:, board_index(color, kind)]

    pawn_dirs = (4, 5) if color == WHITE else (6, 7)
    out = {PAWN: [shift_dir(bb(PAWN), d) for d in pawn_dirs],
           KNIGHT: list(_knight_steps(bb(KNIGHT))),
           KING: [shift_dir(bb(KING), d) for d in range(8)],
           BISHOP: [fill_attacks(bb(BISHOP), empty, [d]) for d in DIAG_DIRS],
           ROOK: [fill_attacks(bb(ROOK), empty, [d]) for d in ORTHO_DIRS],
           QUEEN: [fill_attacks(bb(QUEEN), empty, [d]) for d in range(8)]}
    return out


def _union(dirplanes, kinds) -> np.ndarray:
    acc = None
    for k in kinds:
        for p in dirplanes[k]:
            acc = p.copy() if acc is None else acc | p
    return acc


def _counts(dirplanes, kinds) -> np.ndarray:
    total = None
    for k in kinds:
        for p in dirplanes[k]:
            u = unpack_squares(p)
            total = u.astype(np.uint8) if total is None else total + u
    return total


def _pack_counts_at_least(counts: np.ndarray, threshold: int) -> np.ndarray:
    return pack_squares(counts >= threshold)


def _slider_attacks_from(sq: int, dirs, occ: np.ndarray) -> np.ndarray:
    """Per-member attack set of a slider sitting on `sq`."""
    att = np.zeros_like(occ)
    for d in dirs:
        ray = RAYS[d, sq]
        blk = occ & ray
        iso = lsb_isolate(blk) if d in POSITIVE_DIRS else msb_isolate(blk)
        beyond = np.where(blk != U0, RAYS[d][bit_index(iso)], U0)
        att |= ray ^ beyond
    return att


_SLIDER_DIRS = {BISHOP: DIAG_DIRS, ROOK: ORTHO_DIRS, QUEEN: tuple(range(8))}


def _per_piece_definite(boards: np.ndarray, color: int,
                        occ: np.ndarray) -> tuple[np.uint64, np.uint64]:
    """("definitely attackable", "definitely doubly attackable").

    For each square that may host one of `color`'s pieces, AND the attack set
    of that specific piece across members (absent means an empty attack set).
    A square is doubly covered when two distinct pieces both definitely
    attack it.
    """
    coverage = np.zeros(64, dtype=np.uint8)
    for kind in range(6):
        col = board_index(color, kind)
        piece_bb = boards[:, col]
        u = int(_or_fold(piece_bb))
        while u:
            low = u & -u
            sq = low.bit_length() - 1
            present = (piece_bb >> np.uint64(sq)) & U1
            if kind == PAWN:
                att = np.where(present != 0,
                               PAWN_ATTACKS[color, sq], U0)
            elif kind == KNIGHT:
                att = np.where(present != 0, KNIGHT_ATTACKS[sq], U0)
            elif kind == KING:
                att = np.where(present != 0, KING_ATTACKS[sq], U0)
            else:
                att = np.where(present != 0,
                               _slider_attacks_from(sq, _SLIDER_DIRS[kind], occ),
                               U0)
            definite = _and_fold(att)
            coverage += unpack_squares(np.array([definite]))[0]
            u ^= low
    single = pack_squares(coverage >= 1)
    double = pack_squares(coverage >= 2)
    return np.uint64(single), np.uint64(double)


def _castle_dest_bits(held: dict, color: int) -> np.ndarray:
    """Castling availability as king-destination square bits, per member."""
    out = None
    for side in ("k", "q"):
        dest = CASTLE_GEOMETRY[(color, side)][1]
        bits = np.where(held[side], U1 << np.uint64(dest), U0)
        out = bits if out is None else out | bits
    return out


def _opponent_move_targets(boards: np.ndarray, you: int, occ: np.ndarray,
                           own_occ, opp_occ: np.ndarray,
                           castling: np.ndarray) -> np.ndarray:
    """Per member, every square the opponent could move to were it their
    turn: piece attacks that do not land on their own pieces, pawn pushes,
    pawn captures of our pieces, and presently clear castle destinations."""
    empty = ~occ

    def bb(kind):
        return boards[:, board_index(you, kind)]

    targets = np.zeros_like(occ)
    for p in _knight_steps(bb(KNIGHT)):
        targets |= p
    for d in range(8):
        targets |= shift_dir(bb(KING), d)
    targets |= fill_attacks(bb(BISHOP) | bb(QUEEN), empty, DIAG_DIRS)
    targets |= fill_attacks(bb(ROOK) | bb(QUEEN), empty, ORTHO_DIRS)
    targets &= ~opp_occ

    fwd = 0 if you == WHITE else 1
    single = shift_dir(bb(PAWN), fwd) & empty
    third = np.uint64(RANKS[2] if you == WHITE else RANKS[5])
    double = shift_dir(single & third, fwd) & empty
    caps = pawn_attack_set(bb(PAWN), you) & own_occ
    targets |= single | double | caps

    for side in ("k", "q"):
        right = CASTLE_RIGHT[(you, side)]
        path = np.uint64(CASTLE_GEOMETRY[(you, side)][4])
        dest = np.uint64(CASTLE_GEOMETRY[(you, side)][1])
        ok = ((castling & right) != 0) & ((occ & path) == U0)
        targets |= np.where(ok, U1 << dest, U0)
    return targets


def synopsis(sa: StateArray, perspective: int,
             assume_uniform_own: bool = True) -> np.ndarray:
    """Fold a possible-state set into the 104 feature planes.

    `perspective` must be the side to move in the set's members.  With
    `assume_uniform_own` unset, planes describing the perspective player's
    pieces use OR folds instead of member-0 reads, which keeps them sound
    for sets whose own placement varies (hidden-move branches inside belief
    sampling).
    """
    n = len(sa)
    assert n >= 1, "synopsis of an empty set"
    assert perspective == sa.side, "synopsis perspective must be side to move"
    me, you = perspective, other(perspective)
    boards = sa.boards
    planes = np.zeros(NUM_PLANES, dtype=np.uint64)
    planes[0:10] = _CONSTANTS

    own_cols = [board_index(me, k) for k in range(6)]
    opp_cols = [board_index(you, k) for k in range(6)]
    assert not assume_uniform_own \
        or bool((boards[:, own_cols] == boards[0, own_cols]).all()), \
        "own placement varies across members; pass assume_uniform_own=False"
    read = (lambda c: boards[0, c]) if assume_uniform_own \
        else (lambda c: _or_fold(boards[:, c]))
    own_kind = [read(c) for c in own_cols]
    own_occ = own_kind[0] | own_kind[1] | own_kind[2] \
        | own_kind[3] | own_kind[4] | own_kind[5]
    opp_occ_m = np.bitwise_or.reduce(boards[:, opp_cols], axis=1)
    occ_m = np.bitwise_or.reduce(boards, axis=1)

    if sa.phase == PHASE_SENSE:
        planes[10] = _FULL
    planes[11] = ~own_occ
    planes[12:18] = own_kind
    planes[79] = own_occ

    planes[18] = ~_or_fold(opp_occ_m)
    planes[19:25] = [_and_fold(boards[:, c]) for c in opp_cols]
    planes[25] = ~_and_fold(opp_occ_m)
    planes[26:32] = [_or_fold(boards[:, c]) for c in opp_cols]

    ev = sa.events
    planes[32] = _square_fold(ev[:, 0])
    planes[33] = _square_fold(ev[:, 1])
    planes[34] = _square_fold(ev[:, 5])
    planes[35] = _square_fold(ev[:, 2])
    planes[100] = _square_fold(ev[:, 6])
    planes[101] = _square_fold(ev[:, 7])
    planes[102] = _square_fold(ev[:, 11])
    planes[103] = _square_fold(ev[:, 8])

    # Own attack coverage.
    own_dir = _direction_planes(boards, me, occ_m)
    all_kinds = (PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING)
    own_union = _union(own_dir, all_kinds)
    own_counts = _counts(own_dir, all_kinds)
    planes[36], planes[39] = _per_piece_definite(boards, me, occ_m)
    planes[37] = _and_fold(own_union)
    planes[38] = _or_fold(own_union)
    planes[40] = _and_fold(_pack_counts_at_least(own_counts, 2))
    planes[41] = _or_fold(_pack_counts_at_least(own_counts, 2))
    pawn_att = _union(own_dir, (PAWN,))
    planes[42] = _and_fold(pawn_att)
    planes[43] = _or_fold(pawn_att)
    planes[44] = _and_fold(_union(own_dir, (KNIGHT,)))
    bishop_att = _union(own_dir, (BISHOP,))
    planes[45] = _and_fold(bishop_att)
    planes[46] = _or_fold(bishop_att)
    rook_att = _union(own_dir, (ROOK,))
    planes[47] = _and_fold(rook_att)
    planes[48] = _or_fold(rook_att)
    planes[49] = _or_fold(_union(own_dir, (PAWN, KNIGHT, BISHOP, ROOK, QUEEN)))
    planes[50] = _or_fold(_union(own_dir, (KNIGHT, BISHOP, ROOK, QUEEN, KING)))

    # Opposing attack coverage; "same piece across members" is ill-defined
    # here because the attacker's placement varies, so only union folds.
    opp_dir = _direction_planes(boards, you, occ_m)
    opp_union = _union(opp_dir, all_kinds)
    opp_counts = _counts(opp_dir, all_kinds)
    planes[51] = _and_fold(opp_union)
    planes[52] = _or_fold(opp_union)
    planes[53] = _and_fold(_pack_counts_at_least(opp_counts, 2))
    planes[54] = _or_fold(_pack_counts_at_least(opp_counts, 2))
    for base, kind in ((55, PAWN), (57, KNIGHT), (59, BISHOP), (61, ROOK)):
        att = _union(opp_dir, (kind,))
        planes[base] = _and_fold(att)
        planes[base + 1] = _or_fold(att)
    planes[63] = _or_fold(_union(opp_dir, (PAWN, KNIGHT, BISHOP, ROOK, QUEEN)))
    planes[64] = _or_fold(_union(opp_dir, (KNIGHT, BISHOP, ROOK, QUEEN, KING)))

    opp_king_m = boards[:, board_index(you, KING)]
    planes[65] = _or_fold(opp_king_m & ~own_union)
    planes[66] = _or_fold(_opponent_move_targets(
        boards, you, occ_m, own_occ, opp_occ_m, sa.castling))
    planes[67] = _or_fold(_castle_dest_bits(
        {side: (sa.castling & CASTLE_RIGHT[(you, side)]) != 0
         for side in ("k", "q")}, you))

    varied = U0
    for c in range(12):
        varied |= _or_fold(boards[:, c]) ^ _and_fold(boards[:, c])
    planes[68] = ~varied

    # Own-king neighborhood, per member so a varying king still works.
    own_king_m = boards[:, board_index(me, KING)]
    ones = np.full_like(occ_m, _FULL)
    king_near = np.zeros_like(occ_m)
    for d in range(8):
        king_near |= shift_dir(own_king_m, d)
    knight_near = np.zeros_like(occ_m)
    for p in _knight_steps(own_king_m):
        knight_near |= p
    bishop_near = fill_attacks(own_king_m, ones, DIAG_DIRS)
    rook_near = fill_attacks(own_king_m, ones, ORTHO_DIRS)
    planes[69] = _or_fold(king_near)
    planes[70] = _or_fold(knight_near)
    opp_knights_m = boards[:, board_index(you, KNIGHT)]
    opp_bishops_m = boards[:, board_index(you, BISHOP)]
    opp_rooks_m = boards[:, board_index(you, ROOK)]
    planes[71] = _and_fold(opp_knights_m & knight_near)
    planes[72] = _or_fold(opp_knights_m & knight_near)
    planes[73] = _or_fold(bishop_near)
    planes[74] = _and_fold(opp_bishops_m & bishop_near)
    planes[75] = _or_fold(opp_bishops_m & bishop_near)
    planes[76] = _or_fold(rook_near)
    planes[77] = _and_fold(opp_rooks_m & rook_near)
    planes[78] = _or_fold(opp_rooks_m & rook_near)

    planes[80] = ~_or_fold(occ_m)

    own_rights = sa.castling[0] if assume_uniform_own else sa.castling
    held_ever = {side: np.asarray(
        (own_rights & CASTLE_RIGHT[(me, side)]) != 0).reshape(-1)
        for side in ("k", "q")}
    planes[81] = _or_fold(_castle_dest_bits(held_ever, me))
    held_now = {}
    for side in ("k", "q"):
        path = np.uint64(CASTLE_GEOMETRY[(me, side)][4])
        clear = (occ_m & path) == U0
        held_now[side] = ((sa.castling & CASTLE_RIGHT[(me, side)]) != 0) & clear
    now_bits = _castle_dest_bits(held_now, me)
    planes[82] = _or_fold(now_bits)
    planes[83] = _and_fold(now_bits)

    own_queens_m = boards[:, board_index(me, QUEEN)]
    planes[84] = _or_fold(fill_attacks(own_queens_m, ones, ORTHO_DIRS))
    planes[85] = _or_fold(fill_attacks(own_queens_m, ones, DIAG_DIRS))

    prev = sa.prev2
    prev_opp_occ = np.bitwise_or.reduce(prev[:, opp_cols], axis=1)
    planes[86] = ~_or_fold(prev_opp_occ)
    planes[87:93] = [_and_fold(prev[:, c]) for c in opp_cols]
    planes[93] = ~_and_fold(prev_opp_occ)
    planes[94:100] = [_or_fold(prev[:, c]) for c in opp_cols]

    if me != WHITE:
        planes[10:] = flip_ranks(planes[10:])
    return planes


def planes_to_array(planes: np.ndarray) -> np.ndarray:
    """Unpack plane masks to a float32 [104, 8, 8] tensor, rank-major with
    the perspective player's first rank as row 0."""
    return unpack_squares(planes).reshape(NUM_PLANES, 8, 8).astype(np.float32)
