"""Game loop, records, replay statistics, and tournament plumbing."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from penumbral import harness
from penumbral.agents import (
    AttackerBot,
    DsmcpMixture,
    MaterialBot,
    NetworkOnly,
    RandomBot,
    ScriptedAgent,
)
from penumbral.bits import BLACK, CASTLE_RIGHT, WHITE
from penumbral.harness import (
    AgentSpec,
    GameRecord,
    build_agent,
    decode_sense_result,
    encode_sense_result,
    play_game,
    read_records,
    replay_stats,
    run_tournament,
    schedule_pairings,
    score_for_white,
    verify_record,
    write_records,
)
from penumbral.planner import PlannerConfig
from penumbral.rules import Action, apply_sense, initial_state

# A full scripted game: White gets its queen to h5 unseen, trades it into
# g6 when the e8 stab is blocked, and captures the king one move later.
WHITE_SCRIPT = [
    ("sense:g6", "move:e2e4"),
    ("sense:g7", "move:d2d4"),
    ("sense:g6", "move:e4f5"),
    ("sense:d7", "move:f1e2"),
    ("sense:g7", "move:e2h5"),
    ("sense:b7", "move:d1h5"),
    ("sense:e7", "move:h5e8"),
    ("sense:g6", "move:g6e8"),
]
BLACK_SCRIPT = [
    ("sense:e3", "move:h7h5"),
    ("sense:f2", "move:f7f5"),
    ("sense:e4", "move:h5h4"),
    ("sense:g4", "move:b8c6"),
    ("sense:g4", "move:h8h5"),
    ("sense:g5", "move:g7g6"),
    ("sense:g6", "move:d7d6"),
]


def play_scripted(track_cap=None):
    white = ScriptedAgent(WHITE_SCRIPT, name="w", track_cap=track_cap)
    black = ScriptedAgent(BLACK_SCRIPT, name="b")
    return play_game(white, black, seed=0)


# ---------------------------------------------------------------------------
# Records


def test_record_core_is_deterministic():
    first = play_game(RandomBot("a"), RandomBot("b"), seed=11)
    second = play_game(RandomBot("a"), RandomBot("b"), seed=11)
    assert first.core() == second.core()
    assert first.timing["white"] >= 0.0
    other_seed = play_game(RandomBot("a"), RandomBot("b"), seed=12)
    assert other_seed.core() != first.core()


def test_record_json_roundtrip(tmp_path):
    records = [play_game(RandomBot("a"), RandomBot("b"), seed=s) for s in (0, 1)]
    for record in records:
        back = GameRecord.from_json(record.to_json())
        assert dataclasses.asdict(back) == dataclasses.asdict(record)
    path = tmp_path / "games.jsonl"
    write_records(path, records)
    loaded = read_records(path)
    assert [r.core() for r in loaded] == [r.core() for r in records]


def test_record_version_guard():
    record = play_game(RandomBot("a"), RandomBot("b"), seed=0)
    bad = dataclasses.asdict(record)
    bad["v"] = 99
    with pytest.raises(ValueError):
        GameRecord.from_dict(bad)


def test_sense_result_encoding_roundtrip():
    world = initial_state()
    for name in ("b2", "e7", "e5"):
        sq = Action.from_text(f"sense:{name}").sense_sq
        _, result = apply_sense(world, sq)
        encoded = encode_sense_result(result)
        assert decode_sense_result(encoded) == result


def test_replay_detects_tampering():
    record = play_scripted()
    assert verify_record(record)
    record.turns[3].executed = "pass"
    assert not verify_record(record)


# ---------------------------------------------------------------------------
# The game loop


def test_scripted_game_king_capture():
    record = play_scripted(track_cap=200_000)
    assert record.winner == WHITE
    assert record.reason == "king_capture"
    assert len(record.turns) == 15
    assert score_for_white(record) == 1.0
    assert verify_record(record)

    # The blocked queen stab substitutes into a capture short of the target.
    stab = record.turns[12]
    assert stab.requested == "move:h5e8"
    assert stab.executed == "move:h5g6"
    assert stab.capture == "g6"
    final = record.turns[14]
    assert final.executed == "move:g6e8"
    assert final.capture == "e8"

    # Exact possible-state count after the opponent's fourth move, from the
    # tracked sizes column (White tracked, Black did not).
    assert record.turns[7].x_sizes == [238, None]


def test_turn_cap_reaches_draw():
    record = play_game(ScriptedAgent([], name="w"), ScriptedAgent([], name="b"),
                       seed=0, turn_cap=6)
    assert record.reason == "turn_cap"
    assert record.winner is None
    assert len(record.turns) == 6
    assert score_for_white(record) == 0.5


def test_aborted_game_is_flagged_not_raised():
    class BadAgent(RandomBot):
        def pick_sense(self, seconds_left):
            return Action.passing()  # not a sense action

    record = play_game(BadAgent("bad"), RandomBot("b"), seed=0)
    assert record.reason == "aborted"
    assert record.winner is None
    assert record.turns == []


def test_game_clock_is_passed_down_and_charged():
    seen = []

    class Clocked(RandomBot):
        def pick_sense(self, seconds_left):
            seen.append(seconds_left)
            return super().pick_sense(seconds_left)

    record = play_game(Clocked("w"), RandomBot("b"), seed=0,
                       turn_cap=8, game_seconds=30.0)
    assert seen and abs(seen[0] - 30.0) < 1e-6
    assert all(math.isfinite(s) for s in seen)
    assert seen == sorted(seen, reverse=True)
    assert record.timing["white"] > 0.0

    seen.clear()
    play_game(Clocked("w"), RandomBot("b"), seed=0, turn_cap=2)
    assert seen == [math.inf]


def test_own_piece_view_stays_exact_through_random_games():
    def check(turn_index, world, agents):
        for color in (WHITE, BLACK):
            own = agents[color].own
            for i in range(6):
                assert own.state.boards[color * 6 + i] == world.boards[color * 6 + i]
            for i in range(6):
                assert own.state.boards[(1 - color) * 6 + i] == 0
            rights = CASTLE_RIGHT[(color, "k")] | CASTLE_RIGHT[(color, "q")]
            assert own.state.castling == world.castling & rights

    for seed in range(3):
        play_game(RandomBot("a"), RandomBot("b"), seed=seed, observer=check)


def test_truth_persists_while_tracking_is_exact():
    checks = 0

    def check(turn_index, world, agents):
        nonlocal checks
        for color in (WHITE, BLACK):
            tracker = agents[color].tracker
            if not tracker.overflow:
                assert tracker.current.contains_state(world)
                checks += 1

    for seed in range(4):
        white = RandomBot("a", track_cap=20_000)
        black = RandomBot("b", track_cap=20_000)
        play_game(white, black, seed=seed, observer=check)
    assert checks > 20


# ---------------------------------------------------------------------------
# Replay statistics


def test_replay_stats_buckets_and_scores():
    records = [play_game(RandomBot("a"), RandomBot("b"), seed=s, turn_cap=60)
               for s in range(4)]
    stats = replay_stats(records, cap=5_000)
    assert len(stats.rows) == 2 * len(records)
    by_seed = {}
    for row in stats.rows:
        by_seed.setdefault(row.game_seed, []).append(row)
    for rows in by_seed.values():
        assert sorted(r.player for r in rows) == ["a", "b"]
        assert sum(r.score for r in rows) == 1.0
    assert all(row.max_states >= 1 for row in stats.rows)
    lows = [b[0] for b in stats.buckets]
    assert lows == sorted(lows)
    assert sum(b[1] for b in stats.buckets) == len(stats.rows)
    assert stats.median_max_states > 0
    assert -1.0 <= stats.spearman() <= 1.0


def test_replay_stats_skips_aborted_records():
    good = play_game(RandomBot("a"), RandomBot("b"), seed=0, turn_cap=40)
    aborted = play_game(RandomBot("a"), RandomBot("b"), seed=1, turn_cap=40)
    aborted.reason = "aborted"
    stats = replay_stats([good, aborted], cap=2_000)
    assert len(stats.rows) == 2


def test_replay_stats_on_scripted_game_matches_live_tracking():
    stats = replay_stats([play_scripted()], cap=200_000)
    white_row = next(r for r in stats.rows if r.player == "w")
    assert white_row.max_states >= 238
    assert white_row.score == 1.0
    assert not white_row.overflowed


# ---------------------------------------------------------------------------
# Agent specs and tournaments


def test_build_agent_routes_planner_params():
    agent = build_agent("DsmcpCache", name="cache", l=8, playout_limit=32,
                        kappa=0.25)
    assert agent.kind == "DsmcpCache"
    assert agent.cfg.mixing == 0.0
    assert agent.cfg.subsample_limit == 8
    assert agent.cfg.playout_limit == 32
    assert agent.cfg.time_budget is None
    assert agent.cfg.kappa == 0.25

    netonly = build_agent("NetworkOnly", l=16)
    assert netonly.subsample_limit == 16

    with pytest.raises(ValueError):
        build_agent("NoSuchAgent")


def test_agent_spec_builds_in_place():
    spec = AgentSpec(kind="MaterialBot", name="mat", params={"track_cap": 5_000})
    agent = spec.build()
    assert isinstance(agent, MaterialBot)
    assert agent.name == "mat"
    assert agent.track_cap == 5_000
    assert spec.display_name == "mat"
    assert AgentSpec(kind="RandomBot").display_name == "RandomBot"


def test_schedule_pairings_alternates_colors():
    a = AgentSpec(kind="RandomBot", name="a")
    b = AgentSpec(kind="RandomBot", name="b")
    c = AgentSpec(kind="RandomBot", name="c")

    games = schedule_pairings([a, b], 10)
    assert len(games) == 10
    assert sum(1 for w, _ in games if w is a) == 5

    games = schedule_pairings([a, b, c], 4)
    assert len(games) == 12
    for x, y in ((a, b), (a, c), (b, c)):
        both = [g for g in games if x in g and y in g]
        assert len(both) == 4
        assert sum(1 for w, _ in both if w is x) == 2


def _quick_specs():
    return [
        AgentSpec(kind="RandomBot", name="rand"),
        AgentSpec(kind="AttackerBot", name="atk", params={"track_cap": 3_000}),
    ]


def test_tournament_records_and_table():
    records, table = run_tournament(_quick_specs(), games_per_pair=4,
                                    seed=5, turn_cap=60, anchor="rand")
    assert len(records) == 4
    assert {r.white for r in records} == {"rand", "atk"}
    assert table.rating("rand") == 1000.0
    assert table.entries["atk"].games == 4
    assert "atk" in table.format()

    again, _ = run_tournament(_quick_specs(), games_per_pair=4,
                              seed=5, turn_cap=60, anchor="rand")
    assert [r.core() for r in again] == [r.core() for r in records]


def test_tournament_parallel_matches_serial():
    serial, _ = run_tournament(_quick_specs(), games_per_pair=4,
                               seed=9, turn_cap=40)
    parallel, _ = run_tournament(_quick_specs(), games_per_pair=4,
                                 seed=9, turn_cap=40, workers=2)
    assert [r.core() for r in parallel] == [r.core() for r in serial]


def test_tournament_replays_aborted_games(monkeypatch):
    real = harness._play_spec_game
    poisoned = set()

    def flaky(args):
        record = real(args)
        if args[2] not in poisoned and not poisoned:
            poisoned.add(args[2])
            record.reason = "aborted"
            record.winner = None
        return record

    monkeypatch.setattr(harness, "_play_spec_game", flaky)
    records, table = run_tournament(_quick_specs(), games_per_pair=3,
                                    seed=2, turn_cap=40)
    assert len(records) == 3
    assert all(r.reason != "aborted" for r in records)
    assert sum(e.games for e in table.entries.values()) == 6


def test_tournament_requires_two_agents():
    with pytest.raises(ValueError):
        run_tournament(_quick_specs()[:1], games_per_pair=2)


# ---------------------------------------------------------------------------
# Full games with the heavier agents


def test_material_bot_game_completes():
    record = play_game(MaterialBot("m", track_cap=3_000), RandomBot("r"),
                       seed=1, turn_cap=80)
    assert record.reason in ("king_capture", "turn_cap")
    assert verify_record(record)


def test_network_only_game_completes():
    record = play_game(NetworkOnly("net", subsample_limit=16, track_cap=30_000),
                       AttackerBot("atk", track_cap=3_000), seed=0, turn_cap=50)
    assert record.reason in ("king_capture", "turn_cap")
    assert verify_record(record)


def test_searching_agent_game_completes():
    cfg = PlannerConfig(playout_limit=16, subsample_limit=8, prior_samples=2,
                        d_sense=4, d_move=6)
    agent = DsmcpMixture("searcher", cfg=cfg, n_particles=32,
                         sample_attempts=16, stats_bits=14, track_cap=50_000)
    record = play_game(agent, RandomBot("r"), seed=4, turn_cap=24)
    assert record.reason in ("king_capture", "turn_cap")
    assert verify_record(record)
    assert record.timing["white"] > 0.0
