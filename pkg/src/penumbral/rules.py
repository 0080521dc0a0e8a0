"""Reconnaissance blind chess world states and rules, scalar reference path.

This module favors clarity over speed: states are immutable dataclasses over
Python ints and every rule (move substitution, application, observations) is
written directly.  The batch kernels in stateset.py implement the same rules
over numpy arrays and are cross-checked against this module by the tests.

Rules summary: each turn is a private 3x3 sense followed by a move request.
There is no check or checkmate; capturing the king wins.  Illegal requests
are substituted with the closest legal move (sliders stop at the first
blocker, capturing it when it is an opposing piece; a blocked pawn double
step becomes a single step or nothing; anything else becomes a pass).
Captures are announced to both players by square only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bits
from .bits import (
    BETWEEN_INT,
    BISHOP,
    BLACK,
    CASTLE_GEOMETRY,
    CASTLE_RIGHT,
    DIAG_DIRS,
    KING,
    KING_ATTACKS_INT,
    KNIGHT,
    KNIGHT_ATTACKS_INT,
    ORTHO_DIRS,
    PAWN,
    PAWN_ATTACKS_INT,
    QUEEN,
    ROOK,
    ROOK_HOME,
    SENSE_WINDOWS_INT,
    WHITE,
    bits_of,
    board_index,
    file_of,
    other,
    parse_square,
    rank_of,
    slider_attacks_int,
    square_name,
)
from .zobrist import zobrist_full

PHASE_SENSE = 0
PHASE_MOVE = 1

NO_SQUARE = -1
EMPTY_EVENTS = (NO_SQUARE,) * 12


@dataclass(frozen=True)
class Action:
    """A sense, a move request (or executed move), or an explicit pass."""

    kind: str  # "sense" | "move" | "pass"
    from_sq: int = NO_SQUARE
    to_sq: int = NO_SQUARE
    promotion: int | None = None
    sense_sq: int = NO_SQUARE

    @staticmethod
    def sense(sq: int) -> "Action":
        return Action("sense", sense_sq=sq)

    @staticmethod
    def move(from_sq: int, to_sq: int, promotion: int | None = None) -> "Action":
        return Action("move", from_sq=from_sq, to_sq=to_sq, promotion=promotion)

    @staticmethod
    def passing() -> "Action":
        return Action("pass")

    def is_pass(self) -> bool:
        return self.kind == "pass"

    def text(self) -> str:
        if self.kind == "pass":
            return "pass"
        if self.kind == "sense":
            return "sense:" + square_name(self.sense_sq)
        suffix = "" if self.promotion is None else bits.PIECE_CHARS[self.promotion].lower()
        return "move:" + square_name(self.from_sq) + square_name(self.to_sq) + suffix

    @staticmethod
    def from_text(text: str) -> "Action":
        if text == "pass":
            return Action.passing()
        kind, _, rest = text.partition(":")
        if kind == "sense":
            return Action.sense(parse_square(rest))
        if kind == "move":
            from_sq = parse_square(rest[0:2])
            to_sq = parse_square(rest[2:4])
            promo = None
            if len(rest) == 5:
                promo = bits.PIECE_CHARS.index(rest[4].upper())
            return Action.move(from_sq, to_sq, promo)
        raise ValueError(f"bad action text: {text!r}")


@dataclass(frozen=True)
class WorldState:
    """One fully-specified game state.

    Equality and hashing cover placement, side to move, phase, castling and
    en passant only; the move-event ring, previous-placement snapshots and
    the halfturn counter ride along as non-identity metadata.
    """

    boards: tuple  # 12 int bitboards, white P..K then black P..K
    side: int
    phase: int
    castling: int
    ep: int
    halfturn: int = field(default=0, compare=False)
    # Last four move events, newest first: (from, to, capture) x 4, -1 = none.
    events: tuple = field(default=EMPTY_EVENTS, compare=False)
    # Placement snapshots one and two move events ago (12 boards each).
    prev1: tuple = field(default=None, compare=False)
    prev2: tuple = field(default=None, compare=False)

    def occupancy(self, color: int | None = None) -> int:
        if color is None:
            return self.occupancy(WHITE) | self.occupancy(BLACK)
        base = color * 6
        occ = 0
        for k in range(6):
            occ |= self.boards[base + k]
        return occ

    def piece_at(self, sq: int):
        """(color, kind) at sq, or None."""
        bit = 1 << sq
        for b in range(12):
            if self.boards[b] & bit:
                return b // 6, b % 6
        return None

    def zobrist(self) -> int:
        return zobrist_full(self.boards, self.side, self.phase, self.castling, self.ep)

    def kings_alive(self):
        return bool(self.boards[board_index(WHITE, KING)]), bool(
            self.boards[board_index(BLACK, KING)]
        )

    def winner(self) -> int | None:
        """Color that captured the opposing king, or None if both stand."""
        white_alive, black_alive = self.kings_alive()
        if not black_alive:
            return WHITE
        if not white_alive:
            return BLACK
        return None


def initial_state() -> WorldState:
    boards = [0] * 12
    boards[board_index(WHITE, PAWN)] = bits.RANK_2
    boards[board_index(BLACK, PAWN)] = bits.RANK_7
    for color, home in ((WHITE, 0), (BLACK, 56)):
        boards[board_index(color, ROOK)] = (1 << home) | (1 << (home + 7))
        boards[board_index(color, KNIGHT)] = (1 << (home + 1)) | (1 << (home + 6))
        boards[board_index(color, BISHOP)] = (1 << (home + 2)) | (1 << (home + 5))
        boards[board_index(color, QUEEN)] = 1 << (home + 3)
        boards[board_index(color, KING)] = 1 << (home + 4)
    t = tuple(boards)
    return WorldState(
        boards=t, side=WHITE, phase=PHASE_SENSE, castling=0xF, ep=NO_SQUARE,
        prev1=t, prev2=t,
    )


# ---------------------------------------------------------------------------
# Move generation


def _pawn_moves(state: WorldState, color: int, out: list) -> None:
    occ = state.occupancy()
    opp_occ = state.occupancy(other(color))
    pawns = state.boards[board_index(color, PAWN)]
    step = 8 if color == WHITE else -8
    start_rank = 1 if color == WHITE else 6
    last_rank = 7 if color == WHITE else 0
    for f in bits_of(pawns):
        one = f + step
        if not occ >> one & 1:
            _emit_pawn(f, one, last_rank, out)
            if rank_of(f) == start_rank and not occ >> (one + step) & 1:
                out.append(Action.move(f, one + step))
        for t in bits_of(PAWN_ATTACKS_INT[color][f]):
            if opp_occ >> t & 1 or t == state.ep:
                _emit_pawn(f, t, last_rank, out)


def _emit_pawn(f: int, t: int, last_rank: int, out: list) -> None:
    if rank_of(t) == last_rank:
        for promo in (QUEEN, ROOK, BISHOP, KNIGHT):
            out.append(Action.move(f, t, promo))
    else:
        out.append(Action.move(f, t))


def _castle_moves(state: WorldState, color: int, require_full_path: bool, out: list) -> None:
    occ = state.occupancy() if require_full_path else state.occupancy(color)
    for side_char in ("k", "q"):
        if not state.castling & CASTLE_RIGHT[(color, side_char)]:
            continue
        kf, kt, _, _, empty_mask = CASTLE_GEOMETRY[(color, side_char)]
        if not occ & empty_mask:
            out.append(Action.move(kf, kt))


def legal_actions(state: WorldState) -> list:
    """Actions available in the true state: senses, or pseudo-legal moves + pass.

    Move legality ignores check entirely; there is no such concept here.
    """
    if state.phase == PHASE_SENSE:
        return [Action.sense(s) for s in range(64)]
    color = state.side
    own = state.occupancy(color)
    occ = state.occupancy()
    out: list = []
    _pawn_moves(state, color, out)
    for f in bits_of(state.boards[board_index(color, KNIGHT)]):
        for t in bits_of(KNIGHT_ATTACKS_INT[f] & ~own):
            out.append(Action.move(f, t))
    for f in bits_of(state.boards[board_index(color, KING)]):
        for t in bits_of(KING_ATTACKS_INT[f] & ~own):
            out.append(Action.move(f, t))
    for kind, dirs in ((BISHOP, DIAG_DIRS), (ROOK, ORTHO_DIRS), (QUEEN, range(8))):
        for f in bits_of(state.boards[board_index(color, kind)]):
            for t in bits_of(slider_attacks_int(f, occ, dirs) & ~own):
                out.append(Action.move(f, t))
    _castle_moves(state, color, require_full_path=True, out=out)
    out.append(Action.passing())
    return out


def requestable_actions(state: WorldState) -> list:
    """Moves the player to act may request, knowing only their own pieces.

    Opposing pieces are treated as unknown: sliders may target anything along
    a ray up to their first own blocker, every diagonally-forward pawn square
    not holding an own piece is a speculative capture, and castling only needs
    the path clear of own pieces.  Promotion requests are emitted as queen
    promotions; substitute_move accepts under-promotion requests too.
    """
    if state.phase == PHASE_SENSE:
        return [Action.sense(s) for s in range(64)]
    color = state.side
    own = state.occupancy(color)
    out: list = []
    pawns = state.boards[board_index(color, PAWN)]
    step = 8 if color == WHITE else -8
    start_rank = 1 if color == WHITE else 6
    last_rank = 7 if color == WHITE else 0
    for f in bits_of(pawns):
        one = f + step
        if not own >> one & 1:
            _emit_pawn_request(f, one, last_rank, out)
            if rank_of(f) == start_rank and not own >> (one + step) & 1:
                out.append(Action.move(f, one + step))
        for t in bits_of(PAWN_ATTACKS_INT[color][f] & ~own):
            _emit_pawn_request(f, t, last_rank, out)
    for f in bits_of(state.boards[board_index(color, KNIGHT)]):
        for t in bits_of(KNIGHT_ATTACKS_INT[f] & ~own):
            out.append(Action.move(f, t))
    for f in bits_of(state.boards[board_index(color, KING)]):
        for t in bits_of(KING_ATTACKS_INT[f] & ~own):
            out.append(Action.move(f, t))
    for kind, dirs in ((BISHOP, DIAG_DIRS), (ROOK, ORTHO_DIRS), (QUEEN, range(8))):
        for f in bits_of(state.boards[board_index(color, kind)]):
            for t in bits_of(slider_attacks_int(f, own, dirs) & ~own):
                out.append(Action.move(f, t))
    _castle_moves(state, color, require_full_path=False, out=out)
    out.append(Action.passing())
    return out


def _emit_pawn_request(f: int, t: int, last_rank: int, out: list) -> None:
    if rank_of(t) == last_rank:
        out.append(Action.move(f, t, QUEEN))
    else:
        out.append(Action.move(f, t))


# ---------------------------------------------------------------------------
# Substitution and application


def _castle_request(state: WorldState, action: Action):
    """The (color, side) castle this request names, or None."""
    piece = state.piece_at(action.from_sq)
    if piece is None or piece != (state.side, KING):
        return None
    for key, (kf, kt, _, _, _) in CASTLE_GEOMETRY.items():
        if key[0] == state.side and (kf, kt) == (action.from_sq, action.to_sq):
            return key
    return None


def substitute_move(state: WorldState, action: Action):
    """Map a move request to (executed_action, capture_square).

    Total over all requests; anything with no closest legal interpretation
    executes as a pass with no capture.
    """
    if action.kind != "move":
        return Action.passing(), None
    color = state.side
    piece = state.piece_at(action.from_sq)
    if piece is None or piece[0] != color or action.from_sq == action.to_sq:
        return Action.passing(), None
    kind = piece[1]
    own = state.occupancy(color)
    opp = state.occupancy(other(color))
    occ = own | opp
    to_bit = 1 << action.to_sq

    castle = _castle_request(state, action)
    if castle is not None:
        if state.castling & CASTLE_RIGHT[castle] and not occ & CASTLE_GEOMETRY[castle][4]:
            return action, None
        return Action.passing(), None

    if kind == PAWN:
        return _substitute_pawn(state, action, occ, opp)

    if kind in (KNIGHT, KING):
        table = KNIGHT_ATTACKS_INT if kind == KNIGHT else KING_ATTACKS_INT
        if not table[action.from_sq] & to_bit or own & to_bit:
            return Action.passing(), None
        cap = action.to_sq if opp & to_bit else None
        return Action.move(action.from_sq, action.to_sq), cap

    dirs = {BISHOP: DIAG_DIRS, ROOK: ORTHO_DIRS, QUEEN: tuple(range(8))}[kind]
    direction = _ray_direction(action.from_sq, action.to_sq, dirs)
    if direction is None:
        return Action.passing(), None
    path = BETWEEN_INT[action.from_sq][action.to_sq]
    blockers = (path | to_bit) & occ
    if not blockers:
        return Action.move(action.from_sq, action.to_sq), None
    if direction in bits.POSITIVE_DIRS:
        first = (blockers & -blockers).bit_length() - 1
    else:
        first = blockers.bit_length() - 1
    if opp >> first & 1:
        return Action.move(action.from_sq, first), first
    # Own blocker: stop on the last empty square in front of it.
    stop = _step_back(first, direction)
    if stop == action.from_sq:
        return Action.passing(), None
    return Action.move(action.from_sq, stop), None


def _substitute_pawn(state: WorldState, action: Action, occ: int, opp: int):
    color = state.side
    f, t = action.from_sq, action.to_sq
    step = 8 if color == WHITE else -8
    last_rank = 7 if color == WHITE else 0
    promo = action.promotion
    if promo is None and rank_of(t) == last_rank:
        promo = QUEEN
    if rank_of(t) != last_rank:
        promo = None
    if t == f + step:
        if occ >> t & 1:
            return Action.passing(), None
        return Action.move(f, t, promo), None
    if t == f + 2 * step and rank_of(f) == (1 if color == WHITE else 6):
        if occ >> (f + step) & 1:
            return Action.passing(), None
        if occ >> t & 1:
            return Action.move(f, f + step), None
        return Action.move(f, t), None
    if PAWN_ATTACKS_INT[color][f] >> t & 1:
        if opp >> t & 1:
            return Action.move(f, t, promo), t
        if t == state.ep:
            return Action.move(f, t, None), t - step
        return Action.passing(), None
    return Action.passing(), None


def _ray_direction(f: int, t: int, dirs):
    for d in dirs:
        if bits.RAYS_INT[d][f] >> t & 1:
            return d
    return None


def _step_back(sq: int, direction: int) -> int:
    df, dr = bits.DIR_DELTAS[direction]
    return sq - (dr * 8 + df)


def apply_executed(state: WorldState, executed: Action, capture_square: int | None) -> WorldState:
    """Advance a move-phase state by an already-substituted move (or pass)."""
    boards = list(state.boards)
    color = state.side
    castling = state.castling
    ep = NO_SQUARE
    if executed.kind == "move":
        f, t = executed.from_sq, executed.to_sq
        kind = None
        for k in range(6):
            if boards[board_index(color, k)] >> f & 1:
                kind = k
                break
        if capture_square is not None:
            cap_bit = 1 << capture_square
            for b in range(6 * other(color), 6 * other(color) + 6):
                boards[b] &= ~cap_bit
            if capture_square in ROOK_HOME:
                castling &= ~_home_right(capture_square, other(color))
        boards[board_index(color, kind)] &= ~(1 << f)
        target_kind = executed.promotion if executed.promotion is not None else kind
        boards[board_index(color, target_kind)] |= 1 << t
        if kind == KING:
            castling &= ~(CASTLE_RIGHT[(color, "k")] | CASTLE_RIGHT[(color, "q")])
            if abs(file_of(t) - file_of(f)) == 2:
                for key, (kf, kt, rf, rt, _) in CASTLE_GEOMETRY.items():
                    if key[0] == color and kt == t:
                        boards[board_index(color, ROOK)] &= ~(1 << rf)
                        boards[board_index(color, ROOK)] |= 1 << rt
        if kind == ROOK and f in ROOK_HOME:
            castling &= ~_home_right(f, color)
        if kind == PAWN and abs(t - f) == 16:
            ep = (f + t) // 2
        event = (f, t, capture_square if capture_square is not None else NO_SQUARE)
    else:
        event = (NO_SQUARE, NO_SQUARE, NO_SQUARE)
    return WorldState(
        boards=tuple(boards),
        side=other(color),
        phase=PHASE_SENSE,
        castling=castling,
        ep=ep,
        halfturn=state.halfturn + 1,
        events=event + state.events[:9],
        prev1=state.boards,
        prev2=state.prev1,
    )


def _home_right(sq: int, color: int) -> int:
    right = ROOK_HOME[sq]
    owns = right in (CASTLE_RIGHT[(color, "k")], CASTLE_RIGHT[(color, "q")])
    return right if owns else 0


def apply_move(state: WorldState, requested: Action):
    """Substitute and apply a move request.

    Returns (new_state, executed_action, capture_square); the last is also
    exactly what the opposing player is told about this move.
    """
    assert state.phase == PHASE_MOVE
    executed, capture_square = substitute_move(state, requested)
    return apply_executed(state, executed, capture_square), executed, capture_square


def sense_result(state: WorldState, sense_sq: int):
    """Ground-truth 3x3 window contents: tuple of (square, occupant) pairs.

    Occupants are (color, kind) or None; squares appear in index order and
    rim windows are clipped to the board.
    """
    out = []
    for sq in bits_of(SENSE_WINDOWS_INT[sense_sq]):
        out.append((sq, state.piece_at(sq)))
    return tuple(out)


def apply_sense(state: WorldState, sense_sq: int):
    """Advance a sense-phase state; the world does not change."""
    assert state.phase == PHASE_SENSE
    result = sense_result(state, sense_sq)
    new_state = WorldState(
        boards=state.boards,
        side=state.side,
        phase=PHASE_MOVE,
        castling=state.castling,
        ep=state.ep,
        halfturn=state.halfturn,
        events=state.events,
        prev1=state.prev1,
        prev2=state.prev2,
    )
    return new_state, result


def apply_any(state: WorldState, action: Action) -> WorldState:
    """Advance by any action, discarding observations (playout helper)."""
    if state.phase == PHASE_SENSE:
        return apply_sense(state, action.sense_sq)[0]
    return apply_move(state, action)[0]


# ---------------------------------------------------------------------------
# Text formats


def board_to_fen(boards) -> str:
    rows = []
    for r in range(7, -1, -1):
        row = ""
        empties = 0
        for f in range(8):
            piece = None
            bit = 1 << (r * 8 + f)
            for b in range(12):
                if boards[b] & bit:
                    piece = b
                    break
            if piece is None:
                empties += 1
            else:
                if empties:
                    row += str(empties)
                    empties = 0
                ch = bits.PIECE_CHARS[piece % 6]
                row += ch if piece < 6 else ch.lower()
        if empties:
            row += str(empties)
        rows.append(row)
    return "/".join(rows)


def fen_to_board(fen: str):
    boards = [0] * 12
    rows = fen.split("/")
    if len(rows) != 8:
        raise ValueError(f"bad board fen: {fen!r}")
    for i, row in enumerate(rows):
        r = 7 - i
        f = 0
        for ch in row:
            if ch.isdigit():
                f += int(ch)
            else:
                color = WHITE if ch.isupper() else BLACK
                kind = bits.PIECE_CHARS.index(ch.upper())
                boards[board_index(color, kind)] |= 1 << (r * 8 + f)
                f += 1
        if f != 8:
            raise ValueError(f"bad board fen row: {row!r}")
    return tuple(boards)


def _sq_token(sq: int) -> str:
    return "-" if sq is None or sq < 0 else square_name(sq)


def _parse_sq_token(tok: str) -> int:
    return NO_SQUARE if tok == "-" else parse_square(tok)


def state_to_text(state: WorldState) -> str:
    """Single-line text form: board/side, phase, castling, ep, last-move info.

    The four trailing mandatory fields are the latest move's from and to
    squares and the last capture square of each player (side to move first).
    Older event-ring entries are appended as extra fields when present so a
    round trip preserves the whole ring.
    """
    castle_str = ""
    for ch, bit in (("K", 1), ("Q", 2), ("k", 4), ("q", 8)):
        if state.castling & bit:
            castle_str += ch
    e = state.events
    fields = [
        board_to_fen(state.boards) + "/" + bits.COLOR_CHARS[state.side],
        "sm"[state.phase],
        castle_str or "-",
        _sq_token(state.ep),
        _sq_token(e[0]),
        _sq_token(e[1]),
        _sq_token(e[5]),  # capture by the side to move: previous event's capture
        _sq_token(e[2]),  # capture by the opponent: latest event's capture
    ]
    tail = [e[3], e[4], e[6], e[7], e[8], e[9], e[10], e[11]]
    if any(x != NO_SQUARE for x in tail):
        fields.extend(_sq_token(x) for x in tail)
    return " ".join(fields)


def state_from_text(text: str) -> WorldState:
    parts = text.split()
    if len(parts) not in (8, 16):
        raise ValueError(f"bad state text: {text!r}")
    board_part, _, side_ch = parts[0].rpartition("/")
    boards = fen_to_board(board_part)
    side = bits.COLOR_CHARS.index(side_ch)
    phase = "sm".index(parts[1])
    castling = 0
    if parts[2] != "-":
        for ch, bit in (("K", 1), ("Q", 2), ("k", 4), ("q", 8)):
            if ch in parts[2]:
                castling |= bit
    ep = _parse_sq_token(parts[3])
    e0f, e0t = _parse_sq_token(parts[4]), _parse_sq_token(parts[5])
    e1c, e0c = _parse_sq_token(parts[6]), _parse_sq_token(parts[7])
    ring = [e0f, e0t, e0c, NO_SQUARE, NO_SQUARE, e1c] + [NO_SQUARE] * 6
    if len(parts) == 16:
        ring[3] = _parse_sq_token(parts[8])
        ring[4] = _parse_sq_token(parts[9])
        ring[6] = _parse_sq_token(parts[10])
        ring[7] = _parse_sq_token(parts[11])
        ring[8] = _parse_sq_token(parts[12])
        ring[9] = _parse_sq_token(parts[13])
        ring[10] = _parse_sq_token(parts[14])
        ring[11] = _parse_sq_token(parts[15])
    return WorldState(
        boards=boards, side=side, phase=phase, castling=castling, ep=ep,
        events=tuple(ring), prev1=boards, prev2=boards,
    )
