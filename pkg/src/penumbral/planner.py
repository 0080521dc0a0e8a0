"""Decision-time search over information sets.

The planner answers one question: given the set of states consistent with
everything the acting player has observed, which sense or move request
should they commit to?  It runs determinized playouts in which both
players' knowledge is tracked as separate state sets, shares per-node
bandit statistics through a transposition table, and falls back to the
averaged network prior when the budget allows no playouts at all.

A forced win found by static analysis short-circuits the search: a request
capturing the opposing king in every possible state, or a sense after
which such a request exists for every outcome, is simply played.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import rules, zobrist
from .bandit import UCB1, BanditConfig, select_action
from .bits import (
    BETWEEN_INT,
    INTERIOR_SENSES,
    KING,
    KING_ATTACKS_INT,
    KNIGHT,
    KNIGHT_ATTACKS_INT,
    PAWN,
    PAWN_ATTACKS_INT,
    QUEEN,
    ROOK,
    SENSE_WINDOWS_INT,
    BISHOP,
    board_index,
    slider_attacks_int,
)
from .evaluator import ALL_HEADSET, TOP_HEADSET, actions_to_indices, select_headset
from .nodestats import NodeStats
from .rules import PHASE_MOVE, PHASE_SENSE, Action, WorldState
from .stateset import (
    StateArray,
    advance_phase,
    concat,
    expand_opponent_move,
    filter_apply_requested,
    filter_sense,
    member_in,
    requested_outcomes,
    set_requestable_moves,
    singleton,
    subsample,
)

_log = logging.getLogger("penumbral.planner")

# Floor applied to the per-decision slice of the remaining clock.
MIN_DECISION_SECONDS = 0.1


def time_allowance(remaining_seconds: float) -> float:
    """Per-decision budget from the remaining clock: a twentieth, floored."""
    return max(MIN_DECISION_SECONDS, remaining_seconds / 20.0)


@dataclass
class PlannerConfig:
    """Search knobs; defaults match the shipped agents' tournament settings.

    time_budget and playout_limit may be combined; whichever is exhausted
    first stops the search, and with neither set no playouts run at all
    (the root falls back to the averaged prior).
    """

    c: float = 2.0                  # exploration scale
    mixing: float = 1.0             # policy-sample decay at non-root nodes
    kappa: float = 0.0              # chance a playout gets a cautious opponent
    phi: float = 0.0                # weight on the worst observed value
    variant: str = UCB1
    d_sense: int = 6                # playout depth from a sense root
    d_move: int = 12                # playout depth from a move root
    subsample_limit: int = 128      # tracked-set size inside playouts
    cautious_limit: int = 4         # opponent's set size under caution
    deepen_threshold: float = math.inf  # root visits that buy one extra step
    virtual_loss: int = 1
    prior_samples: int = 256        # belief draws averaged into the root prior
    time_budget: float | None = None
    playout_limit: int | None = None
    time_mode: str = "fixed"        # "proportional" rescales by the clock
    paranoia_at_root: bool = True   # apply phi to the root bandit as well
    opponent_headset: str | None = None
    expansion_limit: int = 4096     # cap on hidden-move branching per step
    static_move_limit: int = 65536  # set sizes worth scanning for forced wins
    static_sense_limit: int = 4096
    use_static: bool = True
    check_invariants: bool = False  # assert the true state stays in both sets

    def bandit_config(self) -> BanditConfig:
        return BanditConfig(
            c=self.c, phi=self.phi, mixing=self.mixing, variant=self.variant
        )


@dataclass
class PlayoutContext:
    """One determinized playout's moving parts.

    own and opp are the planning player's and the opponent's information
    sets; x is the sampled true state and stays a member of both.  path
    collects (stats key or None for the root, action slot, acting side)
    per decision for the backup pass.
    """

    own: StateArray
    opp: StateArray
    x: WorldState
    x_z: np.uint64
    path: list = field(default_factory=list)


@dataclass
class PlanResult:
    """Outcome of one root decision, with the root statistics exposed."""

    action: Action
    actions: list[Action]
    prior: np.ndarray
    visits: np.ndarray
    totals: np.ndarray
    minimums: np.ndarray
    playouts: int
    static: bool
    fallback: bool

    def mean_values(self) -> np.ndarray:
        """Average backed-up value per root action (nan when unvisited)."""
        with np.errstate(invalid="ignore"):
            return np.where(
                self.visits > 0, self.totals / np.maximum(self.visits, 1.0), np.nan
            )


# ---------------------------------------------------------------------------
# Sense pruning and forced-win analysis
# ---------------------------------------------------------------------------


def prune_senses(sa: StateArray) -> list[Action]:
    """Senses worth requesting: informative interior windows.

    A rim square's clipped window sits inside a neighbouring interior
    window, so rim senses are dominated and never offered.  Windows that
    read identically in every member carry no information and are dropped
    too; when nothing can be learned the lowest interior square stands in,
    so there is always at least one choice.
    """
    folds_or = np.bitwise_or.reduce(sa.boards, axis=0)
    folds_and = np.bitwise_and.reduce(sa.boards, axis=0)
    spread = np.bitwise_or.reduce(folds_or ^ folds_and)
    senses = [
        Action.sense(sq)
        for sq in INTERIOR_SENSES
        if spread & np.uint64(SENSE_WINDOWS_INT[sq])
    ]
    if not senses:
        return [Action.sense(INTERIOR_SENSES[0])]
    return senses


_ROOK_DIRS = (0, 1, 2, 3)
_BISHOP_DIRS = (4, 5, 6, 7)


def king_capture_move(state: WorldState) -> Action | None:
    """A move capturing the opposing king outright, if the state allows one."""
    me = state.side
    you = 1 - me
    king_board = state.boards[board_index(you, KING)]
    if not king_board:
        return None
    k = king_board.bit_length() - 1
    occ = state.occupancy()
    b = state.boards
    attackers = (
        KNIGHT_ATTACKS_INT[k] & b[board_index(me, KNIGHT)]
        | KING_ATTACKS_INT[k] & b[board_index(me, KING)]
        | PAWN_ATTACKS_INT[you][k] & b[board_index(me, PAWN)]
        | slider_attacks_int(k, occ, _ROOK_DIRS)
        & (b[board_index(me, ROOK)] | b[board_index(me, QUEEN)])
        | slider_attacks_int(k, occ, _BISHOP_DIRS)
        & (b[board_index(me, BISHOP)] | b[board_index(me, QUEEN)])
    )
    if not attackers:
        return None
    f = (attackers & -attackers).bit_length() - 1
    promo = None
    if (1 << f) & b[board_index(me, PAWN)] and k >> 3 in (0, 7):
        promo = QUEEN
    return Action.move(f, k, promo)


def static_win_move(sa: StateArray) -> Action | None:
    """A request that captures the opposing king in every member, if any.

    Substitution can stop a slider short of its requested target, so one
    request may capture differently-placed kings in different members.
    Members whose opposing king is already gone count as satisfied.
    """
    assert sa.phase == PHASE_MOVE
    kb = sa.boards[:, board_index(1 - sa.side, KING)]
    present = kb != 0
    if not present.any():
        return None
    king_sq = np.zeros(len(sa), dtype=np.int64)
    king_sq[present] = np.log2(kb[present].astype(np.float64)).astype(np.int64)
    king_union = int(np.bitwise_or.reduce(kb))
    for a in set_requestable_moves(sa):
        if a.kind != "move":
            continue
        reach = (1 << a.to_sq) | BETWEEN_INT[a.from_sq][a.to_sq]
        if not reach & king_union:
            continue
        _, cap, _ = requested_outcomes(sa, a)
        if bool(np.all(~present | (cap == king_sq))):
            return a
    return None


def static_win_sense(sa: StateArray) -> Action | None:
    """A sense whose every outcome leaves a guaranteed king capture."""
    assert sa.phase == PHASE_SENSE
    moved = advance_phase(sa)
    if static_win_move(moved) is not None:
        # No information needed; the canonical sense keeps the guarantee.
        return Action.sense(INTERIOR_SENSES[0])
    for a in prune_senses(sa):
        window = np.uint64(SENSE_WINDOWS_INT[a.sense_sq])
        _, classes = np.unique(sa.boards & window, axis=0, return_inverse=True)
        good = True
        for cls in range(int(classes.max()) + 1):
            subset = moved.take(np.flatnonzero(classes == cls))
            if static_win_move(subset) is None:
                good = False
                break
        if good:
            return a
    return None


def static_win(target: StateArray | WorldState) -> Action | None:
    """Forced king-capture analysis, dispatched on the argument.

    A single state gets the playout shortcut (any capture of the opposing
    king); a move-phase set needs a request winning in every member; a
    sense-phase set needs a sense whose every outcome leaves one.
    """
    if isinstance(target, WorldState):
        return king_capture_move(target)
    if target.phase == PHASE_MOVE:
        return static_win_move(target)
    return static_win_sense(target)


# ---------------------------------------------------------------------------
# Playout search
# ---------------------------------------------------------------------------


def _with_truth(sa: StateArray, x: WorldState, x_z: np.uint64, limit: int,
                rng: np.random.Generator) -> StateArray:
    """Subsample to a limit while guaranteeing the true state stays inside."""
    where = np.flatnonzero(sa.z == x_z)
    if where.size == 0:
        sa = concat(sa, singleton(x))
        idx = len(sa) - 1
    else:
        idx = int(where[0])
    return subsample(sa, limit, rng, must_include=idx)


class _Search:
    def __init__(self, x: StateArray, particles, stats: NodeStats, evaluator,
                 cfg: PlannerConfig, rng: np.random.Generator, trace):
        self.x_set = x
        # Particles are sampled at turn start (sense phase); when planning
        # the move after our sense they advance unfiltered, since the
        # opponent observes nothing of the sense.  Stale particles from
        # another turn are dropped rather than poisoning playouts.
        self.particles = []
        for p in particles or []:
            if len(p) == 0:
                continue
            if p.phase == PHASE_SENSE and x.phase == PHASE_MOVE and p.side == x.side:
                p = advance_phase(p)
            if (p.side, p.phase, p.halfturn) == (x.side, x.phase, x.halfturn):
                self.particles.append(p)
        self.stats = stats
        self.evaluator = evaluator
        self.cfg = cfg
        self.rng = rng
        self.trace = trace
        self.root_side = x.side
        self.base_depth = cfg.d_sense if x.phase == PHASE_SENSE else cfg.d_move
        self.x_order = np.argsort(x.z)
        self.x_sorted = x.z[self.x_order]
        headsets = evaluator.headsets
        self.self_headset = select_headset(TOP_HEADSET, headsets)
        self.opp_headset = select_headset(cfg.opponent_headset or TOP_HEADSET, headsets)
        self.value_headset = select_headset(ALL_HEADSET, headsets)
        self.bandit_cfg = cfg.bandit_config()
        self.root_cfg = (
            self.bandit_cfg
            if cfg.paranoia_at_root
            else replace(self.bandit_cfg, phi=0.0)
        )

    def run(self, actions: list[Action]) -> PlanResult:
        cfg = self.cfg
        indices = actions_to_indices(actions, self.root_side)
        self.root_actions = actions
        self.root_prior = self._root_prior(indices)
        self.visits = np.zeros(len(actions))
        self.totals = np.zeros(len(actions))
        self.minimums = np.full(len(actions), math.inf)

        deadline = (
            None if cfg.time_budget is None else time.perf_counter() + cfg.time_budget
        )
        playouts = 0
        while True:
            if cfg.playout_limit is not None and playouts >= cfg.playout_limit:
                break
            if deadline is not None and time.perf_counter() >= deadline:
                break
            if cfg.playout_limit is None and deadline is None:
                break
            info = self._playout(playouts)
            playouts += 1
            if self.trace is not None:
                self.trace(info)

        if playouts == 0:
            _log.info("no playout budget; falling back to the root prior argmax")
            action = actions[int(np.argmax(self.root_prior))]
        else:
            action = actions[int(np.argmax(self.totals))]
        return PlanResult(
            action=action,
            actions=actions,
            prior=self.root_prior,
            visits=self.visits,
            totals=self.totals,
            minimums=self.minimums,
            playouts=playouts,
            static=False,
            fallback=playouts == 0,
        )

    def _shared_index(self, j_set: StateArray) -> int:
        """A row of the root set also inside the particle, else a random row."""
        rng = self.rng
        hit = np.flatnonzero(member_in(j_set.z, self.x_sorted))
        if hit.size == 0:
            return int(rng.integers(len(self.x_set)))
        z = j_set.z[hit[int(rng.integers(hit.size))]]
        return int(self.x_order[np.searchsorted(self.x_sorted, z)])

    def _root_prior(self, indices: np.ndarray) -> np.ndarray:
        """Average the policy over belief-conditioned subsamples of the root."""
        cfg, rng = self.cfg, self.rng
        sets = []
        if self.particles and cfg.prior_samples > 0:
            count = len(self.particles)
            if count > cfg.prior_samples:
                chosen = rng.permutation(count)[: cfg.prior_samples]
            else:
                chosen = np.arange(count)
            for pi in chosen:
                xi = self._shared_index(self.particles[int(pi)])
                sets.append(
                    subsample(self.x_set, cfg.subsample_limit, rng, must_include=xi)
                )
        else:
            sets.append(subsample(self.x_set, cfg.subsample_limit, rng))
        return self.evaluator.policy_for(sets, indices, self.self_headset).mean(axis=0)

    def _playout(self, number: int) -> dict:
        cfg, rng = self.cfg, self.rng
        if self.particles:
            j_full = self.particles[int(rng.integers(len(self.particles)))]
        else:
            j_full = self.x_set
        xi = self._shared_index(j_full)
        x = self.x_set.state_at(xi)
        x_z = np.uint64(self.x_set.z[xi])
        cautious = rng.random() < cfg.kappa
        opp_limit = cfg.cautious_limit if cautious else cfg.subsample_limit
        ctx = PlayoutContext(
            own=subsample(self.x_set, cfg.subsample_limit, rng, must_include=xi),
            opp=_with_truth(j_full, x, x_z, opp_limit, rng),
            x=x,
            x_z=x_z,
        )
        depth = self.base_depth
        value = 0.0
        leaf_side = ctx.x.side
        terminal = False

        while len(ctx.path) < depth:
            actor = ctx.x.side
            mine = actor == self.root_side
            if cfg.check_invariants:
                assert (ctx.own.z == ctx.x_z).any() and (ctx.opp.z == ctx.x_z).any(), (
                    "determinized state escaped an information set"
                )
            if ctx.x.phase == PHASE_MOVE and ctx.path:
                capture = king_capture_move(ctx.x)
                if capture is not None:
                    value, leaf_side, terminal = 1.0, actor, True
                    break
            k_set = ctx.own if mine else ctx.opp

            if not ctx.path:
                pick = select_action(
                    self.root_prior, self.visits, self.totals, self.minimums,
                    self.root_cfg, rng, at_root=True,
                )
                acts = self.root_actions
                if self.visits[pick] > cfg.deepen_threshold:
                    depth += 1
                self.visits[pick] += cfg.virtual_loss
                self.totals[pick] -= cfg.virtual_loss
                ctx.path.append((None, pick, actor))
            else:
                if ctx.x.phase == PHASE_SENSE:
                    acts = prune_senses(k_set)
                else:
                    acts = set_requestable_moves(k_set)
                idxs = actions_to_indices(acts, actor)
                keys = zobrist.stats_keys(zobrist.set_hash(k_set.z), idxs)
                n, q, m = self.stats.read(keys)
                headset = self.self_headset if mine else self.opp_headset
                prior = self.evaluator.policy_for([k_set], idxs, headset)[0]
                pick = select_action(prior, n, q, m, self.bandit_cfg, rng)
                self.stats.visit(keys[pick], cfg.virtual_loss)
                ctx.path.append((keys[pick], pick, actor))

            a = acts[pick]
            if a.kind == "sense":
                ctx.x, result = rules.apply_sense(ctx.x, a.sense_sq)
                ctx.x_z = ctx.x_z ^ zobrist.PHASE_KEY
                if mine:
                    ctx.own = filter_sense(ctx.own, a.sense_sq, result)
                    ctx.opp = advance_phase(ctx.opp)
                else:
                    ctx.opp = filter_sense(ctx.opp, a.sense_sq, result)
                    ctx.own = advance_phase(ctx.own)
            else:
                executed, capsq = rules.substitute_move(ctx.x, a)
                actor_set = filter_apply_requested(k_set, a, executed, capsq)
                other_set = ctx.opp if mine else ctx.own
                expanded, _ = expand_opponent_move(
                    other_set, capsq, cfg.expansion_limit, truncate=True
                )
                ctx.x = rules.apply_executed(ctx.x, executed, capsq)
                ctx.x_z = np.uint64(ctx.x.zobrist())
                if expanded is None:
                    expanded = singleton(ctx.x)
                if mine:
                    ctx.own = actor_set
                    ctx.opp = _with_truth(expanded, ctx.x, ctx.x_z, opp_limit, rng)
                else:
                    ctx.opp = actor_set
                    ctx.own = _with_truth(
                        expanded, ctx.x, ctx.x_z, cfg.subsample_limit, rng
                    )
                alive = ctx.x.kings_alive()
                if not (alive[0] and alive[1]):
                    value, leaf_side, terminal = 1.0, actor, True
                    break

        if not terminal:
            if cfg.check_invariants:
                assert (ctx.own.z == ctx.x_z).any() and (ctx.opp.z == ctx.x_z).any(), (
                    "determinized state escaped an information set"
                )
            leaf_side = ctx.x.side
            k_leaf = ctx.own if leaf_side == self.root_side else ctx.opp
            value = float(self.evaluator.value_for([k_leaf], self.value_headset)[0])

        nv = cfg.virtual_loss
        for key, slot, side_at in ctx.path:
            signed = value if side_at == leaf_side else -value
            if key is None:
                self.visits[slot] += 1 - nv
                self.totals[slot] += signed + nv
                self.minimums[slot] = min(self.minimums[slot], signed)
            else:
                self.stats.backup(key, signed, nv)

        return {
            "playout": number,
            "root": int(ctx.path[0][1]),
            "steps": len(ctx.path),
            "depth_limit": depth,
            "value": value,
            "terminal": terminal,
            "cautious": bool(cautious),
            "keys": [0 if k is None else int(k) for k, _, _ in ctx.path],
        }


def _settled(action: Action, actions: list[Action], static: bool) -> PlanResult:
    width = len(actions)
    return PlanResult(
        action=action,
        actions=actions,
        prior=np.full(width, 1.0 / width),
        visits=np.zeros(width),
        totals=np.zeros(width),
        minimums=np.full(width, math.inf),
        playouts=0,
        static=static,
        fallback=False,
    )


def choose_action(x: StateArray, particles, stats: NodeStats, evaluator,
                  cfg: PlannerConfig, rng: np.random.Generator,
                  trace=None) -> PlanResult:
    """Pick the acting player's next sense or move request.

    x is their tracked information set at the phase to act; particles are
    samples of the opposing information set for the current turn (see
    beliefs); stats is the shared bandit table that playouts read and
    write.  trace, when given, receives one dict per playout.
    """
    assert len(x) > 0, "planning over an empty information set"
    if x.phase == PHASE_SENSE:
        if cfg.use_static and len(x) <= cfg.static_sense_limit:
            win = static_win_sense(x)
            if win is not None:
                return _settled(win, [win], static=True)
        actions = prune_senses(x)
    else:
        if cfg.use_static and len(x) <= cfg.static_move_limit:
            win = static_win_move(x)
            if win is not None:
                return _settled(win, [win], static=True)
        actions = set_requestable_moves(x)
    if len(actions) == 1:
        return _settled(actions[0], actions, static=False)
    return _Search(x, particles, stats, evaluator, cfg, rng, trace).run(actions)
