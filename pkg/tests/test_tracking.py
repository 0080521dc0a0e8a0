"""Possible-state tracking: exact counts, truth persistence, retro pruning."""

from __future__ import annotations

import numpy as np

from penumbral.bits import BLACK, SENSE_WINDOWS, WHITE, parse_square
from penumbral.rules import (
    Action, apply_executed, apply_move, apply_sense, initial_state,
    legal_actions, requestable_actions, sense_result, substitute_move,
)
from penumbral.tracking import Tracker
from test_stateset import SCRIPT, advance, collect_tracked_sets


def drive_random_game(seed, plies, cap=60_000):
    """Play random requested moves with random senses, yielding the tracker
    pair and the true world after every move event."""
    rng = np.random.Generator(np.random.PCG64(seed))
    world = initial_state()
    trackers = {WHITE: Tracker(WHITE, cap=cap), BLACK: Tracker(BLACK, cap=cap)}
    for _ in range(plies):
        if world.winner() is not None:
            break
        actor = world.side
        me, them = trackers[actor], trackers[1 - actor]
        sq = int(rng.integers(0, 64))
        world, result = apply_sense(world, sq)
        me.on_own_sense(sq, result)
        reqs = requestable_actions(world)
        req = reqs[int(rng.integers(0, len(reqs)))]
        world, executed, capsq = apply_move(world, req)
        me.on_own_move(req, executed, capsq)
        them.on_opponent_move(capsq)
        yield trackers, world
        if them.overflow:
            break


def one_step_support(tracker):
    """Check that every member of each snapshot still has at least one
    successor inside the next snapshot, per the recorded transition."""
    for i, tr in enumerate(tracker.transitions):
        prev, nxt = tracker.history[i], tracker.history[i + 1]
        for j in range(len(prev.sa)):
            s = advance(prev.sa.state_at(j))
            supported = False
            if tr.kind == "own":
                if substitute_move(s, tr.requested) == (tr.executed, tr.capture_square):
                    child = apply_executed(s, tr.executed, tr.capture_square)
                    supported = nxt.contains_state(child)
            else:
                for a in legal_actions(s):
                    executed, cap = substitute_move(s, a)
                    if a.is_pass():
                        executed, cap = a, None
                    if cap != tr.capture_square:
                        continue
                    if nxt.contains_state(apply_executed(s, executed, cap)):
                        supported = True
                        break
            if not supported:
                return False
    return True


def test_scripted_game_reaches_exact_count():
    _, trackers, world = collect_tracked_sets(SCRIPT)
    assert len(trackers[WHITE].current.sa) == 238
    assert trackers[WHITE].current.contains_state(world)
    assert trackers[BLACK].current.contains_state(world)
    assert not trackers[WHITE].overflow
    assert not trackers[BLACK].overflow


def test_truth_always_in_tracked_set_random_games():
    games = 0
    for seed in range(10):
        for trackers, world in drive_random_game(2_000 + seed, plies=18, cap=30_000):
            for color in (WHITE, BLACK):
                t = trackers[color]
                if not t.overflow:
                    assert t.current.contains_state(world), seed
        games += 1
    assert games == 10


def test_sense_of_true_window_never_empties_set():
    _, trackers, world = collect_tracked_sets(SCRIPT)
    t = trackers[WHITE]
    before = len(t.current.sa)
    sq = parse_square("e5")
    _, result = apply_sense(world, sq)
    t.on_own_sense(sq, result)
    after = len(t.current.sa)
    assert 1 <= after <= before
    assert t.current.contains_state(world)


def test_retro_filter_pins_pawn_history():
    """Seeing the enemy h-pawn on h4 after two quiet turns proves it came via
    h7h5 then h5h4, so every older snapshot must collapse to that line."""
    world = initial_state()
    t = Tracker(WHITE)

    def own(move_text, sense_name):
        nonlocal world
        sq = parse_square(sense_name)
        world, result = apply_sense(world, sq)
        t.on_own_sense(sq, result)
        req = Action.from_text("move:" + move_text)
        world, executed, capsq = apply_move(world, req)
        t.on_own_move(req, executed, capsq)

    def opp(move_text):
        nonlocal world
        world, _ = apply_sense(world, 0)
        world, executed, capsq = apply_move(world, Action.from_text("move:" + move_text))
        t.on_opponent_move(capsq)

    own("e2e3", "b2")
    opp("h7h5")
    own("a2a3", "b2")
    opp("h5h4")
    sizes = [len(s.sa) for s in t.history]
    assert sizes[2] > 1 and sizes[4] > 100

    sq = parse_square("g3")
    _, result = apply_sense(world, sq)
    t.on_own_sense(sq, result)
    sizes = [len(s.sa) for s in t.history]
    assert sizes == [1, 1, 1, 1, 1]
    assert t.current.contains_state(world)
    assert one_step_support(t)


def test_one_step_support_after_scripted_game():
    _, trackers, _ = collect_tracked_sets(SCRIPT)
    assert one_step_support(trackers[WHITE])


def test_overflow_freezes_tracker():
    t = Tracker(WHITE, cap=8)
    world = initial_state()
    sq = parse_square("b2")
    world, result = apply_sense(world, sq)
    t.on_own_sense(sq, result)
    req = Action.from_text("move:e2e4")
    world, executed, capsq = apply_move(world, req)
    t.on_own_move(req, executed, capsq)
    world, _ = apply_sense(world, 0)
    world, _, capsq = apply_move(world, Action.from_text("move:e7e5"))
    snapshots = len(t.history)
    t.on_opponent_move(capsq)  # 20 successors exceed the cap of 8
    assert t.overflow
    # The last exact snapshot survives untouched and still holds the truth
    # as of the freeze point (the position before the opposing move).
    assert len(t.history) == snapshots
    assert len(t.current.sa) == 1
    # Later events are ignored rather than applied to a stale set.
    world, result = apply_sense(world, sq)
    t.on_own_sense(sq, result)
    t.on_opponent_move(None)
    assert t.overflow
    assert len(t.history) == snapshots
    assert len(t.current.sa) == 1


def test_tracker_without_history_skips_retro():
    t = Tracker(WHITE, keep_history=False)
    world = initial_state()
    sq = parse_square("g6")
    world, result = apply_sense(world, sq)
    t.on_own_sense(sq, result)
    req = Action.from_text("move:e2e4")
    world, executed, capsq = apply_move(world, req)
    t.on_own_move(req, executed, capsq)
    t.on_opponent_move(None)
    assert len(t.history) == 1
    assert len(t.current.sa) == 21


def test_max_sizes_recorded():
    _, trackers, _ = collect_tracked_sets(SCRIPT)
    t = trackers[WHITE]
    assert len(t.max_sizes) == len(t.history)
    assert t.max_sizes[-1] >= len(t.current.sa)
