"""Bitboard primitives shared by the scalar rules and the vectorized kernels.

Squares are numbered a1=0 .. h8=63, rank-major (square = rank*8 + file).
A bitboard is a 64-bit integer with bit i set when square i is occupied.
Scalar code uses plain Python ints; the batch kernels use numpy uint64
arrays with the same bit layout, so every mask defined here is exposed
both as an int constant and through the U64 helper.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

WHITE, BLACK = 0, 1
PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING = 0, 1, 2, 3, 4, 5
PIECE_CHARS = "PNBRQK"
COLOR_CHARS = "wb"

NUM_BOARDS = 12


def other(color: int) -> int:
    return color ^ 1


def board_index(color: int, kind: int) -> int:
    """Index into the 12-board piece array: white P..K then black P..K."""
    return color * 6 + kind


def square(file: int, rank: int) -> int:
    return rank * 8 + file


def file_of(sq: int) -> int:
    return sq & 7


def rank_of(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return "abcdefgh"[sq & 7] + "12345678"[sq >> 3]


def parse_square(name: str) -> int:
    f = "abcdefgh".index(name[0])
    r = "12345678".index(name[1])
    return r * 8 + f


FILE_A = 0x0101010101010101
FILE_H = FILE_A << 7
RANK_1 = 0xFF
RANK_2 = RANK_1 << 8
RANK_7 = RANK_1 << 48
RANK_8 = RANK_1 << 56
NOT_FILE_A = MASK64 ^ FILE_A
NOT_FILE_H = MASK64 ^ FILE_H

FILES = [FILE_A << f for f in range(8)]
RANKS = [RANK_1 << (8 * r) for r in range(8)]

DARK_SQUARES = sum(1 << s for s in range(64) if (file_of(s) + rank_of(s)) % 2 == 0)
LIGHT_SQUARES = MASK64 ^ DARK_SQUARES

# Direction order used by the ray tables: N, S, E, W, NE, NW, SE, SW.
DIR_DELTAS = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, 1), (1, -1), (-1, -1)]
POSITIVE_DIRS = (0, 2, 4, 5)  # scans toward higher square numbers
DIAG_DIRS = (4, 5, 6, 7)
ORTHO_DIRS = (0, 1, 2, 3)


def _build_rays():
    rays = np.zeros((8, 64), dtype=np.uint64)
    for d, (df, dr) in enumerate(DIR_DELTAS):
        for s in range(64):
            f, r = file_of(s) + df, rank_of(s) + dr
            bb = 0
            while 0 <= f < 8 and 0 <= r < 8:
                bb |= 1 << square(f, r)
                f += df
                r += dr
            rays[d, s] = bb
    return rays


RAYS = _build_rays()
RAYS_INT = [[int(RAYS[d, s]) for s in range(64)] for d in range(8)]


def _build_leaper(deltas):
    table = np.zeros(64, dtype=np.uint64)
    for s in range(64):
        bb = 0
        for df, dr in deltas:
            f, r = file_of(s) + df, rank_of(s) + dr
            if 0 <= f < 8 and 0 <= r < 8:
                bb |= 1 << square(f, r)
        table[s] = bb
    return table


KNIGHT_ATTACKS = _build_leaper(
    [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]
)
KING_ATTACKS = _build_leaper(DIR_DELTAS)
# PAWN_ATTACKS[color][sq]: squares a pawn of that color on sq attacks.
PAWN_ATTACKS = np.stack(
    [_build_leaper([(1, 1), (-1, 1)]), _build_leaper([(1, -1), (-1, -1)])]
)

KNIGHT_ATTACKS_INT = [int(x) for x in KNIGHT_ATTACKS]
KING_ATTACKS_INT = [int(x) for x in KING_ATTACKS]
PAWN_ATTACKS_INT = [[int(x) for x in PAWN_ATTACKS[c]] for c in (WHITE, BLACK)]


def _build_between():
    between = np.zeros((64, 64), dtype=np.uint64)
    for d in range(8):
        for s in range(64):
            ray = RAYS_INT[d][s]
            t_bits = ray
            while t_bits:
                t = (t_bits & -t_bits).bit_length() - 1
                t_bits &= t_bits - 1
                between[s, t] = ray & ~RAYS[d, t] & ~np.uint64(1 << t)
    return between


BETWEEN = _build_between()
BETWEEN_INT = [[int(BETWEEN[s, t]) for t in range(64)] for s in range(64)]


def _build_sense_windows():
    table = np.zeros(64, dtype=np.uint64)
    for s in range(64):
        bb = 0
        for df in (-1, 0, 1):
            for dr in (-1, 0, 1):
                f, r = file_of(s) + df, rank_of(s) + dr
                if 0 <= f < 8 and 0 <= r < 8:
                    bb |= 1 << square(f, r)
        table[s] = bb
    return table


SENSE_WINDOWS = _build_sense_windows()
SENSE_WINDOWS_INT = [int(x) for x in SENSE_WINDOWS]
# The 36 interior sense squares; every rim window is a subset of one of these.
INTERIOR_SENSES = [s for s in range(64) if 1 <= file_of(s) <= 6 and 1 <= rank_of(s) <= 6]

# Castling: rights bits, per (color, side) king/rook travel and clearance masks.
CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8
CASTLE_RIGHT = {(WHITE, "k"): CASTLE_WK, (WHITE, "q"): CASTLE_WQ,
                (BLACK, "k"): CASTLE_BK, (BLACK, "q"): CASTLE_BQ}
# (king_from, king_to, rook_from, rook_to, must_be_empty)
CASTLE_GEOMETRY = {
    (WHITE, "k"): (4, 6, 7, 5, (1 << 5) | (1 << 6)),
    (WHITE, "q"): (4, 2, 0, 3, (1 << 1) | (1 << 2) | (1 << 3)),
    (BLACK, "k"): (60, 62, 63, 61, (1 << 61) | (1 << 62)),
    (BLACK, "q"): (60, 58, 56, 59, (1 << 57) | (1 << 58) | (1 << 59)),
}
ROOK_HOME = {0: CASTLE_WQ, 7: CASTLE_WK, 56: CASTLE_BQ, 63: CASTLE_BK}


def popcount(x: int) -> int:
    return bin(x).count("1")


def bits_of(bb: int):
    """Iterate set square indices of an int bitboard, lowest first."""
    while bb:
        low = bb & -bb
        yield low.bit_length() - 1
        bb ^= low


def slider_attacks_int(sq: int, occ: int, dirs) -> int:
    """Scalar ray attacks from sq over occupancy occ along the given dirs."""
    attacks = 0
    for d in dirs:
        ray = RAYS_INT[d][sq]
        blockers = ray & occ
        if blockers:
            if d in POSITIVE_DIRS:
                first = (blockers & -blockers).bit_length() - 1
            else:
                first = blockers.bit_length() - 1
            ray ^= RAYS_INT[d][first]
        attacks |= ray
    return attacks


# ---------------------------------------------------------------------------
# numpy helpers for uint64 bitboard arrays


U1 = np.uint64(1)
U0 = np.uint64(0)
_SHIFTS = [np.uint64(k) for k in range(64)]


def u64(x) -> np.uint64:
    return np.uint64(x)


_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_TABLE = np.zeros(64, dtype=np.int8)
for _i in range(64):
    _DEBRUIJN_TABLE[((1 << _i) * 0x03F79D71B4CB0A89 & MASK64) >> 58] = _i


def lsb_isolate(bb: np.ndarray) -> np.ndarray:
    return bb & (~bb + U1)


def msb_isolate(bb: np.ndarray) -> np.ndarray:
    s = bb.copy()
    for k in (1, 2, 4, 8, 16, 32):
        s |= s >> _SHIFTS[k]
    return s ^ (s >> U1)


def bit_index(isolated: np.ndarray) -> np.ndarray:
    """Square index of a single-bit board; undefined where the board is 0."""
    return _DEBRUIJN_TABLE[((isolated * _DEBRUIJN) >> np.uint64(58)).astype(np.int64)]


def unpack_squares(bb: np.ndarray) -> np.ndarray:
    """uint64 array [...,] -> uint8 array [..., 64] of 0/1 per square."""
    view = np.ascontiguousarray(bb).view(np.uint8).reshape(bb.shape + (8,))
    return np.unpackbits(view, axis=-1, bitorder="little")


def pack_squares(bits: np.ndarray) -> np.ndarray:
    """Inverse of unpack_squares."""
    packed = np.packbits(bits.astype(np.uint8), axis=-1, bitorder="little")
    return packed.reshape(packed.shape[:-1] + (8,)).view(np.uint64).reshape(bits.shape[:-1])


def flip_ranks(bb):
    """Mirror a bitboard (or array of them) top-to-bottom; files unchanged."""
    if isinstance(bb, np.ndarray):
        return bb.byteswap()
    return int(np.uint64(bb).byteswap())


_NOTA = np.uint64(NOT_FILE_A)
_NOTH = np.uint64(NOT_FILE_H)


def shift_dir(bb: np.ndarray, d: int) -> np.ndarray:
    """One-step shift of a uint64 array in ray direction d with edge clipping."""
    if d == 0:
        return bb << _SHIFTS[8]
    if d == 1:
        return bb >> _SHIFTS[8]
    if d == 2:
        return (bb & _NOTH) << _SHIFTS[1]
    if d == 3:
        return (bb & _NOTA) >> _SHIFTS[1]
    if d == 4:
        return (bb & _NOTH) << _SHIFTS[9]
    if d == 5:
        return (bb & _NOTA) << _SHIFTS[7]
    if d == 6:
        return (bb & _NOTH) >> _SHIFTS[7]
    if d == 7:
        return (bb & _NOTA) >> _SHIFTS[9]
    raise ValueError(d)


def fill_attacks(sliders: np.ndarray, empty: np.ndarray, dirs) -> np.ndarray:
    """Union of slider attacks in the given directions over uint64 arrays.

    Occluded flood fill: six propagation steps cover the longest possible
    run of empty squares, and the final shift lands on the first occupied
    square of each ray, so the result matches normal slider attack sets.
    """
    out = np.zeros_like(sliders)
    for d in dirs:
        flood = sliders.copy()
        for _ in range(6):
            flood |= empty & shift_dir(flood, d)
        out |= shift_dir(flood, d)
    return out


def knight_attack_set(knights: np.ndarray) -> np.ndarray:
    out = np.zeros_like(knights)
    for df, dr in ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)):
        masked = knights
        if df == 1:
            masked = masked & _NOTH
        elif df == -1:
            masked = masked & _NOTA
        elif df == 2:
            masked = masked & _NOTH & (_NOTH >> U1)
        elif df == -2:
            masked = masked & _NOTA & (_NOTA << U1)
        delta = dr * 8 + df
        out |= (masked << _SHIFTS[delta]) if delta > 0 else (masked >> _SHIFTS[-delta])
    return out


def king_attack_set(kings: np.ndarray) -> np.ndarray:
    out = np.zeros_like(kings)
    for d in range(8):
        out |= shift_dir(kings, d)
    return out


def pawn_attack_set(pawns: np.ndarray, color: int) -> np.ndarray:
    if color == WHITE:
        return shift_dir(pawns, 4) | shift_dir(pawns, 5)
    return shift_dir(pawns, 6) | shift_dir(pawns, 7)
