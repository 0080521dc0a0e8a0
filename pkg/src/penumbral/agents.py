"""Players: the searching agent, its ablations, and desk-scale baselines.

Every agent consumes the same observation stream the game loop produces
(own sense results, own executed moves, opposing capture squares) and
answers choose_sense / choose_move.  Agents that track possible states do
so through the shared tracker; all of them keep an exact view of their
own pieces so a legal request can always be produced, even after the
tracked set overflows and play degrades to uniformly random.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import stateset
from .bits import (
    BISHOP,
    CASTLE_RIGHT,
    INTERIOR_SENSES,
    KING,
    KNIGHT,
    PAWN,
    QUEEN,
    ROOK,
    ROOK_HOME,
    WHITE,
    file_of,
    rank_of,
)
from .beliefs import BeliefHistory, filter_beliefs, repopulate
from .evaluator import HeuristicEvaluator, TOP_HEADSET, actions_to_indices, select_headset
from .nodestats import NodeStats
from .planner import (
    PlannerConfig,
    choose_action,
    king_capture_move,
    prune_senses,
    time_allowance,
)
from .rules import (
    NO_SQUARE,
    PHASE_MOVE,
    Action,
    WorldState,
    apply_executed,
    initial_state,
    requestable_actions,
    substitute_move,
)
from .tracking import Tracker

PIECE_VALUES = {PAWN: 1, KNIGHT: 3, BISHOP: 3, ROOK: 5, QUEEN: 9, KING: 100}

# Tracking bound past which play degrades to uniformly random requests.
RANDOM_PLAY_CAP = 9_000_000


class OwnView:
    """The mover's own half of the board, kept exact for a whole game.

    Request enumeration never looks at opposing pieces, so this view is
    sufficient to produce a requestable move no matter what happened to
    the tracked set.
    """

    __slots__ = ("color", "state")

    def __init__(self, color: int):
        full = initial_state()
        boards = [0] * 12
        for kind in range(6):
            boards[color * 6 + kind] = full.boards[color * 6 + kind]
        rights = CASTLE_RIGHT[(color, "k")] | CASTLE_RIGHT[(color, "q")]
        self.color = color
        self.state = WorldState(
            boards=tuple(boards), side=color, phase=PHASE_MOVE,
            castling=full.castling & rights, ep=NO_SQUARE,
        )

    def requests(self) -> list[Action]:
        return requestable_actions(self.state)

    def on_own_move(self, executed: Action, capture_square: int | None) -> None:
        nxt = apply_executed(self.state, executed, capture_square)
        self.state = replace(nxt, side=self.color, phase=PHASE_MOVE, ep=NO_SQUARE)

    def on_opponent_capture(self, capture_square: int | None) -> None:
        if capture_square is None:
            return
        bit = 1 << capture_square
        boards = tuple(b & ~bit for b in self.state.boards)
        castling = self.state.castling
        right = ROOK_HOME.get(capture_square, 0)
        if right & castling:
            castling &= ~right
        self.state = replace(self.state, boards=boards, castling=castling)


class Agent:
    """Observation plumbing shared by every player.

    Subclasses override pick_sense / pick_move; the base class keeps the
    own-piece view, optionally a possible-state tracker (track_cap), and
    routes decisions to uniformly random play once tracking overflows.
    """

    kind = "Agent"
    track_cap: int | None = None
    keep_history = False

    def __init__(self, name: str | None = None):
        self.name = name or self.kind

    def begin_game(self, color: int, seed) -> None:
        self.color = color
        self.rng = np.random.default_rng(seed)
        self.own = OwnView(color)
        self.tracker = None
        if self.track_cap is not None:
            self.tracker = Tracker(
                color, cap=self.track_cap, keep_history=self.keep_history
            )

    # -- observations -------------------------------------------------------

    def observe_sense(self, sense_sq: int, result) -> None:
        if self.tracker is not None:
            self.tracker.on_own_sense(sense_sq, result)

    def observe_move(self, requested: Action, executed: Action,
                     capture_square: int | None) -> None:
        self.own.on_own_move(executed, capture_square)
        if self.tracker is not None:
            self.tracker.on_own_move(requested, executed, capture_square)

    def observe_opponent_move(self, capture_square: int | None) -> None:
        self.own.on_opponent_capture(capture_square)
        if self.tracker is not None:
            self.tracker.on_opponent_move(capture_square)

    # -- decisions ----------------------------------------------------------

    def degraded(self) -> bool:
        """True once tracking can no longer certify the true state."""
        return self.tracker is not None and (
            self.tracker.overflow or self.tracker.size() == 0
        )

    def choose_sense(self, seconds_left: float = math.inf) -> Action:
        if self.degraded():
            return self.random_sense()
        return self.pick_sense(seconds_left)

    def choose_move(self, seconds_left: float = math.inf) -> Action:
        if self.degraded():
            return self.random_move()
        return self.pick_move(seconds_left)

    def random_sense(self) -> Action:
        return Action.sense(int(self.rng.integers(64)))

    def random_move(self) -> Action:
        requests = self.own.requests()
        return requests[int(self.rng.integers(len(requests)))]

    def pick_sense(self, seconds_left: float) -> Action:
        raise NotImplementedError

    def pick_move(self, seconds_left: float) -> Action:
        raise NotImplementedError

    def tracked_size(self) -> int | None:
        return None if self.tracker is None else self.tracker.size()


class RandomBot(Agent):
    """Uniform over sense squares and over requestable moves."""

    kind = "RandomBot"

    def __init__(self, name=None, track_cap=None):
        super().__init__(name)
        self.track_cap = track_cap

    def pick_sense(self, seconds_left):
        return self.random_sense()

    def pick_move(self, seconds_left):
        return self.random_move()


class _Determinizer(Agent):
    """Baselines that act on one state sampled from their tracked set."""

    keep_history = False

    def __init__(self, name=None, track_cap=200_000):
        super().__init__(name)
        self.track_cap = track_cap

    def sample_state(self) -> WorldState:
        sa = self.tracker.current.sa
        state = sa.state_at(int(self.rng.integers(len(sa))))
        if state.phase != PHASE_MOVE:
            state = replace(state, phase=PHASE_MOVE)
        return state

    def pick_sense(self, seconds_left):
        return Action.sense(int(self.rng.choice(INTERIOR_SENSES)))

    def scored_requests(self, state: WorldState):
        """(action, executed, victim value) for every requestable move."""
        out = []
        for a in requestable_actions(state):
            executed, capsq = substitute_move(state, a)
            victim = 0
            if capsq is not None:
                piece = state.piece_at(capsq)
                if piece is not None:
                    victim = PIECE_VALUES[piece[1]]
            out.append((a, executed, victim))
        return out


class AttackerBot(_Determinizer):
    """Grabs the biggest available piece, otherwise crowds the enemy king."""

    kind = "AttackerBot"

    def pick_move(self, seconds_left):
        state = self.sample_state()
        win = king_capture_move(state)
        if win is not None:
            return win
        scored = self.scored_requests(state)
        best = max(v for _, _, v in scored)
        if best > 0:
            pool = [a for a, _, v in scored if v == best]
            return pool[int(self.rng.integers(len(pool)))]
        king_board = state.boards[(1 - self.color) * 6 + KING]
        if king_board:
            k = king_board.bit_length() - 1
            dist = {
                a: max(abs(file_of(e.to_sq) - file_of(k)),
                       abs(rank_of(e.to_sq) - rank_of(k)))
                for a, e, _ in scored if e.kind == "move"
            }
            if dist:
                closest = min(dist.values())
                pool = [a for a, d in dist.items() if d == closest]
                return pool[int(self.rng.integers(len(pool)))]
        return self.random_move()


class MaterialBot(_Determinizer):
    """One-ply material argmax on a sampled determinization."""

    kind = "MaterialBot"

    def pick_move(self, seconds_left):
        state = self.sample_state()
        scored = self.scored_requests(state)
        best = max(v for _, _, v in scored)
        pool = [a for a, _, v in scored if v == best]
        return pool[int(self.rng.integers(len(pool)))]


class ScriptedAgent(Agent):
    """Replays a fixed list of (sense, move request) action pairs.

    Used for scripted integration games and for record replay; runs out
    of script, it passes and senses the first interior square.
    """

    kind = "ScriptedAgent"

    def __init__(self, script, name=None, track_cap=None, keep_history=False):
        super().__init__(name)
        self.script = [
            (Action.from_text(s) if isinstance(s, str) else s,
             Action.from_text(m) if isinstance(m, str) else m)
            for s, m in script
        ]
        self.track_cap = track_cap
        self.keep_history = keep_history
        self.turn = 0

    def begin_game(self, color, seed):
        super().begin_game(color, seed)
        self.turn = 0

    def pick_sense(self, seconds_left):
        if self.turn < len(self.script):
            return self.script[self.turn][0]
        return Action.sense(INTERIOR_SENSES[0])

    def pick_move(self, seconds_left):
        action = Action.passing()
        if self.turn < len(self.script):
            action = self.script[self.turn][1]
        self.turn += 1
        return action


class NetworkOnly(Agent):
    """Plays the evaluator's policy argmax directly, with no playouts."""

    kind = "NetworkOnly"
    keep_history = False

    def __init__(self, name=None, evaluator=None, subsample_limit=128,
                 track_cap=RANDOM_PLAY_CAP):
        super().__init__(name)
        self.evaluator = evaluator if evaluator is not None else HeuristicEvaluator()
        self.subsample_limit = subsample_limit
        self.track_cap = track_cap
        self.headset = select_headset(TOP_HEADSET, self.evaluator.headsets)

    def _argmax(self, sa, actions):
        indices = actions_to_indices(actions, self.color)
        sample = stateset.subsample(sa, self.subsample_limit, self.rng)
        prior = self.evaluator.policy_for([sample], indices, self.headset)[0]
        return actions[int(np.argmax(prior))]

    def pick_sense(self, seconds_left):
        sa = self.tracker.current.sa
        return self._argmax(sa, prune_senses(sa))

    def pick_move(self, seconds_left):
        sa = stateset.advance_phase(self.tracker.current.sa)
        return self._argmax(sa, stateset.set_requestable_moves(sa))


class DsmcpAgent(Agent):
    """The full pipeline: track exactly, filter beliefs, search, act.

    One game means one fresh statistics table; the belief filter and the
    playout search both read and write it, so the opponent model sharpens
    as the search accumulates visits.
    """

    kind = "Dsmcp"
    keep_history = True

    def __init__(self, name=None, evaluator=None, cfg: PlannerConfig | None = None,
                 n_particles=4096, sample_attempts=512, stats_bits=20,
                 track_cap=RANDOM_PLAY_CAP):
        super().__init__(name)
        self.evaluator = evaluator if evaluator is not None else HeuristicEvaluator()
        # Without an explicit budget, search one second per decision.
        self.cfg = cfg if cfg is not None else PlannerConfig(time_budget=1.0)
        self.n_particles = n_particles
        self.sample_attempts = sample_attempts
        self.stats_bits = stats_bits
        self.track_cap = track_cap
        self.opp_headset = select_headset(
            self.cfg.opponent_headset or TOP_HEADSET, self.evaluator.headsets
        )

    def begin_game(self, color, seed):
        super().begin_game(color, seed)
        self.stats = NodeStats(capacity_bits=self.stats_bits)
        self.history = BeliefHistory(self.tracker.current.sa)
        self.belief_map = [0]  # belief turn index -> tracker history index
        self.pending_capture = None

    # -- observations -------------------------------------------------------

    def observe_move(self, requested, executed, capture_square):
        super().observe_move(requested, executed, capture_square)
        self.pending_capture = capture_square

    def observe_opponent_move(self, capture_square):
        super().observe_opponent_move(capture_square)
        if self.degraded():
            return
        self.history.begin_turn(self.pending_capture, self.tracker.current.sa)
        self.belief_map.append(len(self.tracker.history) - 1)
        self.pending_capture = None

    # -- planning -----------------------------------------------------------

    def _opp_policy(self, moved):
        actions = stateset.set_requestable_moves(moved)
        indices = actions_to_indices(actions, moved.side)
        prior = self.evaluator.policy_for([moved], indices, self.opp_headset)[0]
        return actions, prior

    def _refresh_beliefs(self):
        snapshots = [self.tracker.history[j].sa for j in self.belief_map]
        filter_beliefs(self.history, snapshots)
        repopulate(
            self.history, self.stats, self._opp_policy,
            self.cfg.bandit_config(), self.n_particles, False, self.rng,
            k=self.sample_attempts, subsample_limit=self.cfg.subsample_limit,
        )

    def _decision_config(self) -> PlannerConfig:
        return self.cfg

    def _plan(self, x, seconds_left) -> Action:
        cfg = self.cfg
        if cfg.time_mode == "proportional" and math.isfinite(seconds_left):
            cfg = replace(cfg, time_budget=time_allowance(seconds_left))
        self._refresh_beliefs()
        result = choose_action(
            x, self.history.current.particles, self.stats, self.evaluator,
            cfg, self.rng,
        )
        return result.action

    def pick_sense(self, seconds_left):
        return self._plan(self.tracker.current.sa, seconds_left)

    def pick_move(self, seconds_left):
        return self._plan(
            stateset.advance_phase(self.tracker.current.sa), seconds_left
        )


def _dsmcp_variant(kind_name, **cfg_overrides):
    class _Variant(DsmcpAgent):
        kind = kind_name

        def __init__(self, name=None, cfg=None, **kwargs):
            base = cfg if cfg is not None else PlannerConfig(time_budget=1.0)
            super().__init__(name, cfg=replace(base, **cfg_overrides), **kwargs)

    _Variant.__name__ = kind_name
    _Variant.__qualname__ = kind_name
    return _Variant


DsmcpMixture = _dsmcp_variant("DsmcpMixture", mixing=1.0)
DsmcpTree = _dsmcp_variant("DsmcpTree", mixing=math.inf)
DsmcpCache = _dsmcp_variant("DsmcpCache", mixing=0.0)
DsmcpSimple = _dsmcp_variant("DsmcpSimple", mixing=1.0, use_static=False)

AGENT_KINDS = {
    cls.kind: cls
    for cls in (
        RandomBot, AttackerBot, MaterialBot, NetworkOnly,
        DsmcpMixture, DsmcpTree, DsmcpCache, DsmcpSimple,
    )
}


def make_agent(kind: str, name: str | None = None, **params) -> Agent:
    """Instantiate a registered agent kind; params go to its constructor."""
    try:
        cls = AGENT_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown agent kind: {kind!r}") from None
    return cls(name=name, **params)
