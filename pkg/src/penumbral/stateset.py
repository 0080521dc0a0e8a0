"""Vectorized multi-state kernels: one numpy row per possible world state.

A StateArray holds N states that share side to move, phase and halfturn
(these advance in lockstep as a tracked set progresses) while placement,
castling rights, en passant, hashes, move events and previous-placement
snapshots are per-row arrays.  The three heavy operations are:

* filtering by a private sense result,
* filtering + advancing by the owner's own substituted move, and
* branching over every opposing move consistent with the public capture
  observation (the expansion step), with hash-level dedup before any
  successor row is materialized.

All rules here mirror rules.py exactly; the tests cross-check them.
"""

from __future__ import annotations

import numpy as np

from . import bits, rules, zobrist
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
    WHITE,
    bits_of,
    board_index,
    other,
    rank_of,
    slider_attacks_int,
)
from .rules import Action, PHASE_MOVE, PHASE_SENSE, NO_SQUARE, WorldState

BIT = (np.uint64(1) << np.arange(64, dtype=np.uint64))
_U1 = np.uint64(1)

_EP_KEYS_EXT = np.zeros(65, dtype=np.uint64)
_EP_KEYS_EXT[1:] = zobrist.EP_KEYS

# Candidate action flags.
_F_NORMAL, _F_PAWN1, _F_PAWN2, _F_DIAG, _F_EP, _F_CASTLE, _F_PASS = range(7)


class StateArray:
    """A batch of world states sharing side, phase and halfturn."""

    __slots__ = ("boards", "castling", "ep", "z", "events", "prev1", "prev2",
                 "side", "phase", "halfturn")

    def __init__(self, boards, castling, ep, z, events, prev1, prev2,
                 side, phase, halfturn):
        self.boards = boards
        self.castling = castling
        self.ep = ep
        self.z = z
        self.events = events
        self.prev1 = prev1
        self.prev2 = prev2
        self.side = side
        self.phase = phase
        self.halfturn = halfturn

    def __len__(self) -> int:
        return self.boards.shape[0]

    @staticmethod
    def from_states(states) -> "StateArray":
        states = list(states)
        n = len(states)
        if n == 0:
            raise ValueError("empty state list")
        side, phase, halfturn = states[0].side, states[0].phase, states[0].halfturn
        boards = np.zeros((n, 12), dtype=np.uint64)
        prev1 = np.zeros((n, 12), dtype=np.uint64)
        prev2 = np.zeros((n, 12), dtype=np.uint64)
        castling = np.zeros(n, dtype=np.uint8)
        ep = np.zeros(n, dtype=np.int8)
        z = np.zeros(n, dtype=np.uint64)
        events = np.zeros((n, 12), dtype=np.int8)
        for i, s in enumerate(states):
            assert (s.side, s.phase) == (side, phase)
            boards[i] = [np.uint64(b) for b in s.boards]
            prev1[i] = [np.uint64(b) for b in (s.prev1 or s.boards)]
            prev2[i] = [np.uint64(b) for b in (s.prev2 or s.boards)]
            castling[i] = s.castling
            ep[i] = s.ep
            z[i] = np.uint64(s.zobrist())
            events[i] = s.events
        return StateArray(boards, castling, ep, z, events, prev1, prev2,
                          side, phase, halfturn)

    def state_at(self, i: int) -> WorldState:
        return WorldState(
            boards=tuple(int(b) for b in self.boards[i]),
            side=self.side, phase=self.phase,
            castling=int(self.castling[i]), ep=int(self.ep[i]),
            halfturn=self.halfturn,
            events=tuple(int(e) for e in self.events[i]),
            prev1=tuple(int(b) for b in self.prev1[i]),
            prev2=tuple(int(b) for b in self.prev2[i]),
        )

    def take(self, idx) -> "StateArray":
        return StateArray(
            self.boards[idx], self.castling[idx], self.ep[idx], self.z[idx],
            self.events[idx], self.prev1[idx], self.prev2[idx],
            self.side, self.phase, self.halfturn,
        )

    def occupancy(self, color: int | None = None) -> np.ndarray:
        if color is None:
            return self.occupancy(WHITE) | self.occupancy(BLACK)
        out = self.boards[:, color * 6].copy()
        for k in range(1, 6):
            out |= self.boards[:, color * 6 + k]
        return out

    def union_board(self, color: int, kind: int) -> int:
        return int(np.bitwise_or.reduce(self.boards[:, board_index(color, kind)]))

    def has_king(self, color: int) -> np.ndarray:
        return self.boards[:, board_index(color, KING)] != 0

    def copy(self) -> "StateArray":
        return self.take(slice(None))


def concat(a: StateArray, b: StateArray) -> StateArray:
    assert (a.side, a.phase, a.halfturn) == (b.side, b.phase, b.halfturn)
    return StateArray(
        np.concatenate([a.boards, b.boards]),
        np.concatenate([a.castling, b.castling]),
        np.concatenate([a.ep, b.ep]),
        np.concatenate([a.z, b.z]),
        np.concatenate([a.events, b.events]),
        np.concatenate([a.prev1, b.prev1]),
        np.concatenate([a.prev2, b.prev2]),
        a.side, a.phase, a.halfturn,
    )


def singleton(state: WorldState) -> StateArray:
    return StateArray.from_states([state])


def subsample(sa: StateArray, limit: int, rng: np.random.Generator,
              must_include: int | None = None) -> StateArray:
    """Uniform sample without replacement of min(limit, N) rows.

    When must_include names a row it is always retained.
    """
    n = len(sa)
    if n <= limit:
        return sa
    if must_include is None:
        idx = rng.choice(n, size=limit, replace=False)
    else:
        pool = np.delete(np.arange(n), must_include)
        idx = np.concatenate([[must_include], rng.choice(pool, size=limit - 1, replace=False)])
    return sa.take(np.sort(idx))


# ---------------------------------------------------------------------------
# Sense filtering


def sense_mask(sa: StateArray, sense_sq: int, result) -> np.ndarray:
    """Boolean mask of members whose window contents equal the sense result."""
    window = np.uint64(bits.SENSE_WINDOWS_INT[sense_sq])
    required = np.zeros(12, dtype=np.uint64)
    for sq, occupant in result:
        if occupant is not None:
            color, kind = occupant
            required[board_index(color, kind)] |= BIT[sq]
    mask = np.ones(len(sa), dtype=bool)
    for b in range(12):
        mask &= (sa.boards[:, b] & window) == required[b]
    return mask


def advance_phase(sa: StateArray) -> StateArray:
    """Sense phase -> move phase; the world does not change."""
    assert sa.phase == PHASE_SENSE
    out = sa.copy()
    out.z = out.z ^ zobrist.PHASE_KEY
    out.phase = PHASE_MOVE
    return out


def filter_sense(sa: StateArray, sense_sq: int, result) -> StateArray:
    """Apply the owner's sense: filter by the private result and advance."""
    kept = sa.take(sense_mask(sa, sense_sq, result))
    return advance_phase(kept)


# ---------------------------------------------------------------------------
# Applying the owner's own substituted move


def substitution_mask(sa: StateArray, requested: Action, executed: Action,
                      capture_square: int | None) -> np.ndarray:
    """Members for which substituting `requested` yields exactly (executed, capture).

    The set owner's own pieces are identical across members, so only the
    opposing placement (and per-member en passant) can disagree with the
    observed result.
    """
    mover = sa.side
    victim_color = other(mover)
    n = len(sa)
    ones = np.ones(n, dtype=bool)
    if n == 0 or requested.kind != "move":
        return ones
    f, t_req = requested.from_sq, requested.to_sq
    opp_occ = sa.occupancy(victim_color)

    def opp_at(sq):
        return (opp_occ >> np.uint64(sq) & _U1).astype(bool)

    own_kind = None
    for k in range(6):
        if sa.boards[0, board_index(mover, k)] >> np.uint64(f) & _U1:
            own_kind = k
            break
    if own_kind is None:
        return ones  # request was a guaranteed pass; nothing to learn

    executed_pass = executed.is_pass()
    castle = _castle_key(mover, f, t_req) if own_kind == KING else None
    if castle is not None:
        path = np.uint64(CASTLE_GEOMETRY[castle][4])
        blocked = (sa.occupancy() & path) != 0
        return ~blocked if not executed_pass else blocked

    if own_kind == PAWN:
        step = 8 if mover == WHITE else -8
        if t_req == f + step:
            return opp_at(t_req) if executed_pass else ~opp_at(t_req)
        if t_req == f + 2 * step:
            mid = f + step
            if executed_pass:
                return opp_at(mid)
            if executed.to_sq == mid:
                return ~opp_at(mid) & opp_at(t_req)
            return ~opp_at(mid) & ~opp_at(t_req)
        # Diagonal request.
        if executed_pass:
            return ~opp_at(t_req) & (sa.ep != t_req)
        if capture_square == t_req:
            return opp_at(t_req)
        # En passant: the victim sits behind the target square.
        pawn_bb = sa.boards[:, board_index(victim_color, PAWN)]
        victim = (pawn_bb >> np.uint64(capture_square) & _U1).astype(bool)
        return (sa.ep == t_req) & victim

    if own_kind in (KNIGHT, KING):
        if executed_pass:
            return ones  # bad geometry; uniform across members
        return opp_at(t_req) if capture_square is not None else ~opp_at(t_req)

    # Slider: executed stops at t_exec; no opposing piece may sit on the way.
    if executed_pass:
        return ones
    t_exec = executed.to_sq
    path = np.uint64(BETWEEN_INT[f][t_exec])
    clear = (opp_occ & path) == 0
    if capture_square is not None:
        return clear & opp_at(t_exec)
    return clear & ~opp_at(t_exec)


def _castle_key(color: int, f: int, t: int):
    for key, (kf, kt, _, _, _) in CASTLE_GEOMETRY.items():
        if key[0] == color and (kf, kt) == (f, t):
            return key
    return None


def apply_executed_uniform(sa: StateArray, executed: Action,
                           capture_square: int | None) -> StateArray:
    """Advance every member by the same already-substituted move (or pass).

    Caller is responsible for having filtered members to those consistent
    with this execution (see substitution_mask).
    """
    assert sa.phase == PHASE_MOVE
    mover = sa.side
    victim_color = other(mover)
    n = len(sa)
    if n == 0:
        return StateArray(sa.boards.copy(), sa.castling.copy(), sa.ep.copy(),
                          sa.z.copy(), sa.events.copy(), sa.boards.copy(),
                          sa.prev1.copy(), other(mover), PHASE_SENSE,
                          sa.halfturn + 1)
    boards = sa.boards.copy()
    prev1 = sa.boards.copy()
    prev2 = sa.prev1.copy()
    z = sa.z.copy()
    castling = sa.castling.copy()
    event = np.full(3, NO_SQUARE, dtype=np.int8)

    if executed.kind == "move":
        f, t = executed.from_sq, executed.to_sq
        own_kind = None
        for k in range(6):
            if boards[0, board_index(mover, k)] >> np.uint64(f) & _U1:
                own_kind = k
                break
        assert own_kind is not None
        if capture_square is not None:
            cbit = BIT[capture_square]
            for k in range(6):
                col = board_index(victim_color, k)
                has = (boards[:, col] & cbit) != 0
                z[has] ^= zobrist.PIECE_KEYS[col, capture_square]
                boards[:, col] &= ~cbit
            if capture_square in ROOK_HOME:
                right = ROOK_HOME[capture_square]
                if right in (CASTLE_RIGHT[(victim_color, "k")], CASTLE_RIGHT[(victim_color, "q")]):
                    castling &= np.uint8(0xF ^ right)
        src = board_index(mover, own_kind)
        dst = board_index(mover, executed.promotion if executed.promotion is not None else own_kind)
        boards[:, src] &= ~BIT[f]
        boards[:, dst] |= BIT[t]
        z ^= zobrist.PIECE_KEYS[src, f] ^ zobrist.PIECE_KEYS[dst, t]
        if own_kind == KING:
            castling &= np.uint8(
                0xF ^ (CASTLE_RIGHT[(mover, "k")] | CASTLE_RIGHT[(mover, "q")]))
            if abs(bits.file_of(t) - bits.file_of(f)) == 2:
                for key, (kf, kt, rf, rt, _) in CASTLE_GEOMETRY.items():
                    if key[0] == mover and kt == t:
                        rcol = board_index(mover, ROOK)
                        boards[:, rcol] &= ~BIT[rf]
                        boards[:, rcol] |= BIT[rt]
                        z ^= zobrist.PIECE_KEYS[rcol, rf] ^ zobrist.PIECE_KEYS[rcol, rt]
        if own_kind == ROOK and f in ROOK_HOME:
            right = ROOK_HOME[f]
            if right in (CASTLE_RIGHT[(mover, "k")], CASTLE_RIGHT[(mover, "q")]):
                castling &= np.uint8(0xF ^ right)
        new_ep = (f + t) // 2 if own_kind == PAWN and abs(t - f) == 16 else NO_SQUARE
        event = np.array([f, t, capture_square if capture_square is not None else NO_SQUARE],
                         dtype=np.int8)
    else:
        new_ep = NO_SQUARE

    z ^= zobrist.CASTLE_KEYS[sa.castling] ^ zobrist.CASTLE_KEYS[castling]
    z ^= _EP_KEYS_EXT[sa.ep.astype(np.int64) + 1]
    if new_ep != NO_SQUARE:
        z ^= zobrist.EP_KEYS[new_ep]
    z ^= zobrist.SIDE_KEY ^ zobrist.PHASE_KEY  # move phase out, side flips

    events = np.empty_like(sa.events)
    events[:, :3] = event
    events[:, 3:] = sa.events[:, :9]
    ep_col = np.full(n, new_ep, dtype=np.int8)
    return StateArray(boards, castling, ep_col, z, events, prev1, prev2,
                      other(mover), PHASE_SENSE, sa.halfturn + 1)


def filter_apply_own_move(sa: StateArray, requested: Action, executed: Action,
                          capture_square: int | None) -> StateArray:
    kept = sa.take(substitution_mask(sa, requested, executed, capture_square))
    return apply_executed_uniform(kept, executed, capture_square)


def apply_requested(sa: StateArray, requested: Action) -> StateArray:
    """Advance every member by its own substitution of one requested action.

    Unlike filter_apply_own_move nothing is filtered: each member executes
    whatever the request substitutes to in that member (possibly a pass),
    and the mover's pieces are allowed to differ across members.  Used to
    progress belief particles by a sampled opposing move; duplicate
    successors are merged.
    """
    work = advance_phase(sa) if sa.phase == PHASE_SENSE else sa
    exec_t, cap, kind_at = requested_outcomes(work, requested)

    mover = work.side
    f = requested.from_sq
    last_rank = 7 if mover == WHITE else 0
    # Group by (moving kind, target, capture): apply_executed_uniform reads
    # the moving kind from its first member, so kinds may not mix.
    group_key = (kind_at * 64 + exec_t) * 64 + cap
    group_key[exec_t == NO_SQUARE] = -1  # every pass is the same pass
    groups: list[StateArray] = []
    for key in np.unique(group_key):
        rows = np.nonzero(group_key == key)[0]
        t_e, c_e = int(exec_t[rows[0]]), int(cap[rows[0]])
        subset = work.take(rows)
        if t_e == NO_SQUARE:
            executed = Action.passing()
        else:
            promo = None
            if kind_at[rows[0]] == PAWN and rank_of(t_e) == last_rank:
                promo = requested.promotion if requested.promotion is not None else QUEEN
            executed = Action.move(f, t_e, promo)
        groups.append(apply_executed_uniform(subset, executed,
                                             c_e if c_e != NO_SQUARE else None))
    out = groups[0]
    for extra in groups[1:]:
        out = concat(out, extra)
    _, first = np.unique(out.z, return_index=True)
    return out.take(first) if first.size < len(out) else out


def requested_outcomes(sa: StateArray, requested: Action):
    """Per-member substitution outcome of one request, as parallel arrays.

    Returns (exec_t, cap, kind_at): executed target square (NO_SQUARE when
    the request degrades to a pass), capture square (NO_SQUARE for none) and
    the moving piece kind (-1 when nothing moves).  sa must be at move phase.
    """
    assert sa.phase == PHASE_MOVE
    n = len(sa)
    exec_t = np.full(n, NO_SQUARE, dtype=np.int64)  # NO_SQUARE = pass
    cap = np.full(n, NO_SQUARE, dtype=np.int64)
    kind_at = np.full(n, -1, dtype=np.int64)
    if requested.kind == "move" and requested.from_sq != requested.to_sq:
        _substitute_rows(sa, requested, exec_t, cap, kind_at)
    return exec_t, cap, kind_at


def filter_apply_requested(sa: StateArray, requested: Action, executed: Action,
                           capture_square: int | None) -> StateArray:
    """Keep members whose substitution matches what was observed, advance them.

    The acting player knows their request and observes the executed move and
    capture square, so members that would have substituted differently are
    impossible.  Unlike filter_apply_own_move the mover's pieces may differ
    across members (the set may be a particle of another player's belief),
    so members executing the same target with different piece kinds survive
    together.
    """
    work = advance_phase(sa) if sa.phase == PHASE_SENSE else sa
    exec_t, cap, _ = requested_outcomes(work, requested)
    t_obs = executed.to_sq if executed.kind == "move" else NO_SQUARE
    c_obs = NO_SQUARE if capture_square is None else capture_square
    kept = work.take((exec_t == t_obs) & (cap == c_obs))
    if len(kept) == 0:
        raise ValueError("no member consistent with the observed execution")
    return apply_requested(kept, requested)


def _substitute_rows(work: StateArray, requested: Action, exec_t: np.ndarray,
                     cap: np.ndarray, kind_at: np.ndarray) -> None:
    """Fill per-member executed target and capture square for one request."""
    mover = work.side
    f, t = requested.from_sq, requested.to_sq
    own_occ = work.occupancy(mover)
    opp_occ = work.occupancy(other(mover))
    occ = own_occ | opp_occ

    def at(bb, sq):
        return (bb >> np.uint64(sq) & _U1).astype(bool)

    castle = _castle_key(mover, f, t)
    step = 8 if mover == WHITE else -8
    for kind in range(6):
        members = at(work.boards[:, board_index(mover, kind)], f)
        if not members.any():
            continue
        kind_at[members] = kind
        if kind == KING and castle is not None:
            path = np.uint64(CASTLE_GEOMETRY[castle][4])
            right = np.uint8(CASTLE_RIGHT[castle])
            ok = members & ((work.castling & right) != 0) & ((occ & path) == 0)
            exec_t[ok] = t
        elif kind in (KNIGHT, KING):
            table = KNIGHT_ATTACKS_INT if kind == KNIGHT else KING_ATTACKS_INT
            if table[f] >> t & 1:
                landed = members & ~at(own_occ, t)
                exec_t[landed] = t
                cap[landed & at(opp_occ, t)] = t
        elif kind == PAWN:
            if t == f + step:
                pushed = members & ~at(occ, t)
                exec_t[pushed] = t
            elif t == f + 2 * step and rank_of(f) == (1 if mover == WHITE else 6):
                mid = f + step
                clear_mid = members & ~at(occ, mid)
                double = clear_mid & ~at(occ, t)
                exec_t[double] = t
                exec_t[clear_mid & ~double] = mid
            elif PAWN_ATTACKS_INT[mover][f] >> t & 1:
                took = members & at(opp_occ, t)
                exec_t[took] = t
                cap[took] = t
                passant = members & ~took & (work.ep == t)
                exec_t[passant] = t
                cap[passant] = t - step
        else:
            dirs = {BISHOP: DIAG_DIRS, ROOK: ORTHO_DIRS, QUEEN: tuple(range(8))}[kind]
            d = next((d for d in dirs if bits.RAYS_INT[d][f] >> t & 1), None)
            if d is None:
                continue
            path = np.uint64(BETWEEN_INT[f][t] | (1 << t))
            blockers = occ & path
            exec_t[members & (blockers == 0)] = t
            hit = members & (blockers != 0)
            if hit.any():
                isolate = bits.lsb_isolate if d in bits.POSITIVE_DIRS else bits.msb_isolate
                first_sq = bits.bit_index(isolate(blockers)).astype(np.int64)
                taken = hit & ((opp_occ & isolate(blockers)) != 0)
                exec_t[taken] = first_sq[taken]
                cap[taken] = first_sq[taken]
                df, dr = bits.DIR_DELTAS[d]
                stop = first_sq - (df + 8 * dr)
                short = hit & ~taken & (stop != f)
                exec_t[short] = stop[short]


def set_requestable_moves(sa: StateArray) -> list[Action]:
    """Move requests available somewhere in the set, for the side to move.

    Requestability depends only on the mover's own pieces, so for a
    well-formed infostate this equals any member's request list; when own
    placement has drifted apart (belief particles) the union of per-kind
    boards gives every request some member could make.
    """
    mover = sa.side
    boards = [0] * 12
    for kind in range(6):
        boards[board_index(mover, kind)] = int(sa.union_board(mover, kind))
    probe = WorldState(
        boards=tuple(boards), side=mover, phase=PHASE_MOVE,
        castling=int(np.bitwise_or.reduce(sa.castling)), ep=NO_SQUARE,
    )
    return rules.requestable_actions(probe)


# ---------------------------------------------------------------------------
# Opposing-move expansion


class _Candidates:
    """Flat table of candidate opposing moves consistent with the capture news."""

    __slots__ = ("f", "t", "kind", "promo", "flag", "cap", "new_ep", "clear",
                 "zdelta", "count")

    def __init__(self):
        self.f, self.t, self.kind = [], [], []
        self.promo, self.flag, self.cap, self.new_ep = [], [], [], []
        self.clear = []

    def add(self, flag, f=NO_SQUARE, t=NO_SQUARE, kind=-1, promo=-1,
            cap=NO_SQUARE, new_ep=NO_SQUARE, clear=0):
        self.flag.append(flag)
        self.f.append(f)
        self.t.append(t)
        self.kind.append(kind)
        self.promo.append(promo)
        self.cap.append(cap)
        self.new_ep.append(new_ep)
        self.clear.append(clear)

    def finalize(self, mover: int, victim_kind_at, phase: int):
        self.count = len(self.flag)
        for name in ("f", "t", "kind", "promo", "flag", "cap", "new_ep", "clear"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int16))
        zdelta = np.zeros(self.count, dtype=np.uint64)
        for i in range(self.count):
            if self.flag[i] == _F_PASS:
                d = 0
            else:
                f, t = int(self.f[i]), int(self.t[i])
                kind = int(self.kind[i])
                dst_kind = int(self.promo[i]) if self.promo[i] >= 0 else kind
                d = (zobrist.PIECE_KEYS_INT[board_index(mover, kind)][f]
                     ^ zobrist.PIECE_KEYS_INT[board_index(mover, dst_kind)][t])
                if self.cap[i] >= 0:
                    vk = victim_kind_at(int(self.cap[i]))
                    d ^= zobrist.PIECE_KEYS_INT[board_index(other(mover), vk)][int(self.cap[i])]
                if self.flag[i] == _F_CASTLE:
                    key = _castle_key(mover, f, t)
                    _, _, rf, rt, _ = CASTLE_GEOMETRY[key]
                    rcol = board_index(mover, ROOK)
                    d ^= zobrist.PIECE_KEYS_INT[rcol][rf] ^ zobrist.PIECE_KEYS_INT[rcol][rt]
                if self.new_ep[i] >= 0:
                    d ^= zobrist.EP_KEYS_INT[int(self.new_ep[i])]
            d ^= zobrist.SIDE_KEY_INT
            if phase == PHASE_MOVE:
                d ^= zobrist.PHASE_KEY_INT
            zdelta[i] = np.uint64(d)
        self.zdelta = zdelta


def _rights_clear(mover: int, kind: int, f: int, cap: int) -> int:
    clear = 0
    if kind == KING:
        clear |= CASTLE_RIGHT[(mover, "k")] | CASTLE_RIGHT[(mover, "q")]
    if kind == ROOK and f in ROOK_HOME:
        right = ROOK_HOME[f]
        if right in (CASTLE_RIGHT[(mover, "k")], CASTLE_RIGHT[(mover, "q")]):
            clear |= right
    if cap in ROOK_HOME:
        right = ROOK_HOME[cap]
        victim = other(mover)
        if right in (CASTLE_RIGHT[(victim, "k")], CASTLE_RIGHT[(victim, "q")]):
            clear |= right
    return clear


def _build_candidates(sa: StateArray, capture_square: int | None) -> _Candidates:
    """All opposing moves possible in some member and consistent with the
    public capture square (or its absence)."""
    mover = sa.side
    victim_color = other(mover)
    cands = _Candidates()
    victim_occ = 0
    victim_kinds = {}
    for k in range(6):
        ub = sa.union_board(victim_color, k)
        victim_occ |= ub
        for sq in bits_of(ub):
            victim_kinds[sq] = k
    union_by_kind = [sa.union_board(mover, k) for k in range(6)]
    step = 8 if mover == WHITE else -8
    start_rank = 1 if mover == WHITE else 6
    last_rank = 7 if mover == WHITE else 0

    def emit(flag, f, t, kind, cap=NO_SQUARE, new_ep=NO_SQUARE):
        clear = _rights_clear(mover, kind, f, cap)
        if kind == PAWN and rank_of(t) == last_rank:
            for promo in (QUEEN, ROOK, BISHOP, KNIGHT):
                cands.add(flag, f, t, kind, promo, cap, new_ep, clear)
        else:
            cands.add(flag, f, t, kind, -1, cap, new_ep, clear)

    if capture_square is None:
        quiet = ~victim_occ & bits.MASK64
        for f in bits_of(union_by_kind[KNIGHT]):
            for t in bits_of(KNIGHT_ATTACKS_INT[f] & quiet):
                emit(_F_NORMAL, f, t, KNIGHT)
        for f in bits_of(union_by_kind[KING]):
            for t in bits_of(KING_ATTACKS_INT[f] & quiet):
                emit(_F_NORMAL, f, t, KING)
        for kind, dirs in ((BISHOP, DIAG_DIRS), (ROOK, ORTHO_DIRS), (QUEEN, range(8))):
            for f in bits_of(union_by_kind[kind]):
                for t in bits_of(slider_attacks_int(f, victim_occ, dirs) & quiet):
                    emit(_F_NORMAL, f, t, kind)
        for f in bits_of(union_by_kind[PAWN]):
            one = f + step
            if 0 <= one < 64 and not victim_occ >> one & 1:
                emit(_F_PAWN1, f, one, PAWN)
                two = one + step
                if rank_of(f) == start_rank and not victim_occ >> two & 1:
                    emit(_F_PAWN2, f, two, PAWN, new_ep=one)
        for side_char in ("k", "q"):
            key = (mover, side_char)
            kf, kt, _, _, path = CASTLE_GEOMETRY[key]
            if int(np.bitwise_or.reduce(sa.castling)) & CASTLE_RIGHT[key] and not victim_occ & path:
                cands.add(_F_CASTLE, kf, kt, KING, -1, NO_SQUARE, NO_SQUARE,
                          _rights_clear(mover, KING, kf, NO_SQUARE))
        cands.add(_F_PASS)
    else:
        c = capture_square
        if victim_occ >> c & 1:
            for f in bits_of(KNIGHT_ATTACKS_INT[c] & union_by_kind[KNIGHT]):
                emit(_F_NORMAL, f, c, KNIGHT, cap=c)
            for f in bits_of(KING_ATTACKS_INT[c] & union_by_kind[KING]):
                emit(_F_NORMAL, f, c, KING, cap=c)
            for kind, dirs in ((BISHOP, DIAG_DIRS), (ROOK, ORTHO_DIRS), (QUEEN, range(8))):
                reach = slider_attacks_int(c, victim_occ, dirs)
                for f in bits_of(reach & union_by_kind[kind]):
                    emit(_F_NORMAL, f, c, kind, cap=c)
            for f in bits_of(PAWN_ATTACKS_INT[victim_color][c] & union_by_kind[PAWN]):
                emit(_F_DIAG, f, c, PAWN, cap=c)
            # En passant: victim pawn at c, capturer lands behind it.
            if victim_kinds.get(c) == PAWN:
                t = c + step
                if 0 <= t < 64:
                    for f in bits_of(PAWN_ATTACKS_INT[victim_color][t] & union_by_kind[PAWN]):
                        emit(_F_EP, f, t, PAWN, cap=c)
        cands.finalize(mover, lambda sq: victim_kinds[sq], sa.phase)
        return cands
    cands.finalize(mover, lambda sq: victim_kinds[sq], sa.phase)
    return cands


def _valid_matrix(sa: StateArray, cands: _Candidates) -> np.ndarray:
    """[N, A] boolean validity of each candidate action in each member."""
    mover = sa.side
    n, a = len(sa), cands.count
    occ_all = sa.occupancy()
    own_occ = sa.occupancy(mover)
    valid = np.ones((n, a), dtype=bool)

    move_like = cands.flag != _F_PASS
    castles = cands.flag == _F_CASTLE
    plain = move_like & ~castles
    if plain.any():
        cols = np.array([board_index(mover, int(k)) for k in cands.kind[plain]])
        fsh = cands.f[plain].astype(np.uint64)
        present = (sa.boards[:, cols] >> fsh[None, :] & _U1).astype(bool)
        tsh = cands.t[plain].astype(np.uint64)
        own_at_t = (own_occ[:, None] >> tsh[None, :] & _U1).astype(bool)
        paths = np.array([BETWEEN_INT[int(f)][int(t)]
                          for f, t in zip(cands.f[plain], cands.t[plain])], dtype=np.uint64)
        path_clear = (occ_all[:, None] & paths[None, :]) == 0
        ok = present & ~own_at_t & path_clear
        pawn1 = (cands.flag[plain] == _F_PAWN1) | (cands.flag[plain] == _F_PAWN2)
        if pawn1.any():
            te = (occ_all[:, None] >> tsh[None, pawn1] & _U1) == 0
            ok[:, pawn1] &= te
        epc = cands.flag[plain] == _F_EP
        if epc.any():
            ok[:, epc] &= sa.ep[:, None] == cands.t[plain][None, epc]
        # Captures need the victim actually present in the member (the victim
        # side is shared across a well-formed set, but cheap to confirm).
        caps = cands.cap[plain] >= 0
        if caps.any():
            victim_occ = sa.occupancy(other(mover))
            csh = cands.cap[plain][caps].astype(np.uint64)
            ok[:, caps] &= (victim_occ[:, None] >> csh[None, :] & _U1).astype(bool)
        valid[:, plain] = ok
    if castles.any():
        for j in np.nonzero(castles)[0]:
            key = _castle_key(mover, int(cands.f[j]), int(cands.t[j]))
            path = np.uint64(CASTLE_GEOMETRY[key][4])
            right = np.uint8(CASTLE_RIGHT[key])
            valid[:, j] = ((sa.castling & right) != 0) & ((occ_all & path) == 0)
    return valid


def _pair_hashes(sa: StateArray, cands: _Candidates, midx, aidx):
    """Successor hashes and castling rights for (member, action) pairs."""
    new_rights = sa.castling[midx] & ~cands.clear[aidx].astype(np.uint8)
    z = (sa.z[midx]
         ^ cands.zdelta[aidx]
         ^ zobrist.CASTLE_KEYS[sa.castling[midx]]
         ^ zobrist.CASTLE_KEYS[new_rights]
         ^ _EP_KEYS_EXT[sa.ep[midx].astype(np.int64) + 1])
    return z, new_rights


# Largest (member, action) validity block examined at once; bounds the
# working-set memory of an expansion regardless of set size.
_PAIR_BLOCK = 1 << 24


def expand_opponent_move(sa: StateArray, capture_square: int | None, limit: int,
                         truncate: bool = False):
    """Branch every member over consistent opposing moves; dedup by hash.

    The mover is sa.side (a sense phase is folded through unchanged, since
    the opposing sense neither alters the world nor is observable).  Returns
    (successors, overflow): when the deduped successor count exceeds `limit`
    the overflow flag is set and the result is either None (truncate=False,
    nothing materialized) or the first `limit` unique successors.
    """
    work = advance_phase(sa) if sa.phase == PHASE_SENSE else sa
    n = len(work)
    if capture_square is None and n > limit and not truncate:
        # Passing is always consistent, so distinct pass successors (member
        # hashes with en-passant rights dropped) lower-bound the total.
        zpass = work.z ^ _EP_KEYS_EXT[work.ep.astype(np.int64) + 1]
        if np.unique(zpass).size > limit:
            return None, True
    cands = _build_candidates(work, capture_square)
    if cands.count == 0:
        return None, False
    if truncate or n * cands.count <= _PAIR_BLOCK:
        valid = _valid_matrix(work, cands)
        midx, aidx = np.nonzero(valid)
        if midx.size == 0:
            return None, False
        zflat, new_rights = _pair_hashes(work, cands, midx, aidx)
        uniq, first = np.unique(zflat, return_index=True)
        overflow = uniq.size > limit
        if overflow:
            if not truncate:
                return None, True
            first = first[:limit]
        midx, aidx = midx[first], aidx[first]
        return (_materialize(work, cands, midx, aidx, zflat[first],
                             new_rights[first]), overflow)

    # Blockwise scan: accumulate the first occurrence of each successor
    # hash, bailing out as soon as the distinct count passes the limit.
    block = max(1, _PAIR_BLOCK // cands.count)
    seen = np.zeros(0, dtype=np.uint64)
    parts = []
    for row0 in range(0, n, block):
        chunk = work.take(slice(row0, row0 + block))
        valid = _valid_matrix(chunk, cands)
        mloc, aloc = np.nonzero(valid)
        if mloc.size == 0:
            continue
        z, rights = _pair_hashes(chunk, cands, mloc, aloc)
        uniq, first = np.unique(z, return_index=True)
        fresh = ~member_in(uniq, seen) if seen.size else np.ones(uniq.size, bool)
        keep = first[fresh]
        parts.append((z[keep], mloc[keep] + row0, aloc[keep], rights[keep]))
        seen = np.union1d(seen, uniq[fresh])
        if seen.size > limit:
            return None, True
    if not parts:
        return None, False
    zsel = np.concatenate([p[0] for p in parts])
    midx = np.concatenate([p[1] for p in parts])
    aidx = np.concatenate([p[2] for p in parts])
    rights = np.concatenate([p[3] for p in parts])
    # Same member order as the one-shot path: sorted by successor hash.
    order = np.argsort(zsel)
    return (_materialize(work, cands, midx[order], aidx[order], zsel[order],
                         rights[order]), False)


def _materialize(sa: StateArray, cands: _Candidates, midx, aidx, zsel, new_rights):
    mover = sa.side
    victim_color = other(mover)
    m = midx.size
    boards = sa.boards[midx].copy()
    prev1 = sa.boards[midx].copy()
    prev2 = sa.prev1[midx].copy()
    castling = new_rights
    rows = np.arange(m)

    flag = cands.flag[aidx]
    move_rows = flag != _F_PASS
    if move_rows.any():
        r = rows[move_rows]
        f = cands.f[aidx[move_rows]].astype(np.int64)
        t = cands.t[aidx[move_rows]].astype(np.int64)
        kind = cands.kind[aidx[move_rows]].astype(np.int64)
        promo = cands.promo[aidx[move_rows]].astype(np.int64)
        capsq = cands.cap[aidx[move_rows]].astype(np.int64)
        has_cap = capsq >= 0
        if has_cap.any():
            rc, cq = r[has_cap], capsq[has_cap]
            for k in range(6):
                boards[rc, board_index(victim_color, k)] &= ~BIT[cq]
        src = mover * 6 + kind
        dst = mover * 6 + np.where(promo >= 0, promo, kind)
        boards[r, src] &= ~BIT[f]
        boards[r, dst] |= BIT[t]
        cast = flag == _F_CASTLE
        if cast.any():
            for j in np.nonzero(cast)[0]:
                key = _castle_key(mover, int(cands.f[aidx[j]]), int(cands.t[aidx[j]]))
                _, _, rf, rt, _ = CASTLE_GEOMETRY[key]
                rcol = board_index(mover, ROOK)
                boards[j, rcol] &= ~BIT[rf]
                boards[j, rcol] |= BIT[rt]

    events = np.empty((m, 12), dtype=np.int8)
    events[:, 0] = cands.f[aidx]
    events[:, 1] = cands.t[aidx]
    events[:, 2] = cands.cap[aidx]
    events[:, 3:] = sa.events[midx, :9]
    ep_col = cands.new_ep[aidx].astype(np.int8)
    return StateArray(boards, castling, ep_col, zsel, events, prev1, prev2,
                      other(mover), PHASE_SENSE, sa.halfturn + 1)


# ---------------------------------------------------------------------------
# Hash-level helpers used by retro filtering and belief intersection


def successor_hash_pairs(sa: StateArray, capture_square: int | None):
    """(member_idx, successor_hash) for every consistent opposing move, or
    (None, None) when there are no candidates.  Nothing is materialized."""
    work = advance_phase(sa) if sa.phase == PHASE_SENSE else sa
    cands = _build_candidates(work, capture_square)
    if cands.count == 0:
        return None, None
    valid = _valid_matrix(work, cands)
    midx, aidx = np.nonzero(valid)
    zflat, _ = _pair_hashes(work, cands, midx, aidx)
    return midx, zflat


def own_move_successor_hashes(sa: StateArray, requested: Action, executed: Action,
                              capture_square: int | None):
    """(member_mask, successor_hashes) under the owner's substituted move."""
    mask = substitution_mask(sa, requested, executed, capture_square)
    kept = sa.take(mask)
    if len(kept) == 0:
        return mask, np.zeros(0, dtype=np.uint64)
    succ = apply_executed_uniform(kept, executed, capture_square)
    return mask, succ.z


def member_in(z_values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Membership of each z in a sorted hash table."""
    pos = np.searchsorted(table, z_values)
    pos = np.clip(pos, 0, table.size - 1)
    return table[pos] == z_values
