"""Unweighted particle filter over the opponent's possible knowledge.

Each particle is a StateArray standing for one hypothesis of the state
set the opponent might be reasoning over, pinned to one of our own
decision turns.  Turn 0 is the game start; the transition from turn i-1
to turn i covers our own move (which the opponent saw only as a capture
square) and the opponent's reply (drawn from their modelled policy and
any shared search statistics).  Consistency with our tracked possible
set is enforced only by rejection: a drawn particle is kept when it
shares at least one state with the tracker's set for that turn.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import stateset, zobrist
from .bandit import BanditConfig, select_action
from .evaluator import actions_to_indices
from .nodestats import NodeStats
from .stateset import StateArray

# Work cap for one particle's hidden-move branch; overflow truncates,
# which only narrows the hypothesis (rejection keeps it sound).
EXPAND_CAP = 4096

# Minimum wall-clock refinement budget while the opponent is thinking.
MIN_BUDGET_SECONDS = 0.05


@dataclass
class BeliefState:
    """Particles for one of our decision turns."""

    turn_index: int
    particles: list[StateArray] = field(default_factory=list)


class BeliefHistory:
    """Per-turn beliefs plus the context needed to progress them.

    snapshots[i] is the tracker's possible set at our decision turn i
    (refreshed by the caller after retroactive filtering), and
    own_captures[i] is the capture square the opponent observed from our
    move between turns i-1 and i.
    """

    def __init__(self, x0: StateArray):
        self.turns = [BeliefState(0, [x0])]
        self.snapshots = [x0]
        self.own_captures: list[int | None] = [None]

    @property
    def current(self) -> BeliefState:
        return self.turns[-1]

    def begin_turn(self, own_capture: int | None, snapshot: StateArray) -> None:
        self.turns.append(BeliefState(len(self.turns)))
        self.own_captures.append(own_capture)
        self.snapshots.append(snapshot)


def uniform_opponent_policy(sa: StateArray):
    """Every requestable move equally likely; the no-model baseline."""
    actions = stateset.set_requestable_moves(sa)
    return actions, np.full(len(actions), 1.0 / len(actions))


def draw_sample(
    prev_particles: list[StateArray],
    own_capture: int | None,
    x: StateArray,
    stats: NodeStats,
    opp_policy,
    cfg: BanditConfig,
    k: int,
    subsample_limit: int,
    rng: np.random.Generator,
) -> StateArray:
    """One rejection-sampled particle for the turn whose possible set is x.

    Up to k attempts progress a uniformly drawn predecessor particle
    through our hidden move and a bandit-selected opposing reply; the
    result is kept if it intersects x.  When everything rejects (or
    there is no predecessor to progress) the fallback is a uniformly
    drawn singleton from x, which always intersects.
    """
    table = np.sort(x.z)
    # Rejection retries often redraw the same predecessor and action, so the
    # deterministic stages are cached for the duration of this call.
    decisions: dict[int, tuple] = {}
    progressed: dict[tuple[int, int], StateArray] = {}
    if prev_particles:
        for _ in range(k):
            pick_j = int(rng.integers(len(prev_particles)))
            decision = decisions.get(pick_j)
            if decision is None:
                prev = prev_particles[pick_j]
                if prev.side == x.side:
                    expanded, _ = stateset.expand_opponent_move(
                        prev, own_capture, EXPAND_CAP, truncate=True
                    )
                else:
                    # Second player's first turn: the opponent moved first,
                    # so there is no hidden own move to branch over.
                    expanded = prev
                if expanded is None:
                    decision = (None, None, None, None)
                else:
                    moved = stateset.advance_phase(expanded)
                    actions, prior = opp_policy(moved)
                    keys = zobrist.stats_keys(
                        zobrist.set_hash(moved.z),
                        actions_to_indices(actions, moved.side),
                    )
                    decision = (moved, actions, prior, keys)
                decisions[pick_j] = decision
            moved, actions, prior, keys = decision
            if moved is None:
                continue
            n, q, m = stats.read(keys)
            pick_a = select_action(prior, n, q, m, cfg, rng)
            candidate = progressed.get((pick_j, pick_a))
            if candidate is None:
                candidate = stateset.apply_requested(moved, actions[pick_a])
                progressed[(pick_j, pick_a)] = candidate
            candidate = stateset.subsample(candidate, subsample_limit, rng)
            if stateset.member_in(candidate.z, table).any():
                return candidate
    return x.take(np.array([int(rng.integers(len(x)))]))


def filter_beliefs(history: BeliefHistory, updated_snapshots) -> BeliefHistory:
    """Drop particles made impossible by retroactively narrowed sets."""
    history.snapshots = list(updated_snapshots)
    history.turns[0].particles = [history.snapshots[0]]
    for belief in history.turns[1:]:
        table = np.sort(history.snapshots[belief.turn_index].z)
        belief.particles = [
            p for p in belief.particles if stateset.member_in(p.z, table).any()
        ]
    return history


def repopulate(
    history: BeliefHistory,
    stats: NodeStats,
    opp_policy,
    cfg: BanditConfig,
    n_particles: int,
    opponent_to_act: bool,
    rng: np.random.Generator,
    k: int = 512,
    subsample_limit: int = 128,
) -> BeliefHistory:
    """Refill depleted turns oldest-first, optionally refining on a clock.

    With the opponent to act this keeps drawing (replacing random current
    particles once full) until a budget of max(50 ms, initial deficit x
    measured per-draw cost) runs out; otherwise it stops as soon as every
    turn is full again.
    """
    start = time.perf_counter()
    deficit = sum(
        max(0, n_particles - len(b.particles)) for b in history.turns[1:]
    )
    per_draw = 0.0
    draws = 0
    while True:
        target = next(
            (b for b in history.turns[1:] if len(b.particles) < n_particles), None
        )
        if target is None:
            if not opponent_to_act or history.current.turn_index == 0:
                break
            target = history.current
        if opponent_to_act and draws:
            budget = max(MIN_BUDGET_SECONDS, deficit * per_draw / draws)
            if time.perf_counter() - start > budget:
                break
        i = target.turn_index
        particle = draw_sample(
            history.turns[i - 1].particles,
            history.own_captures[i],
            history.snapshots[i],
            stats,
            opp_policy,
            cfg,
            k,
            subsample_limit,
            rng,
        )
        if len(target.particles) < n_particles:
            target.particles.append(particle)
        else:
            target.particles[int(rng.integers(len(target.particles)))] = particle
        draws += 1
        per_draw = time.perf_counter() - start
    return history
