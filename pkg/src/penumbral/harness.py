"""Full games, tournaments, and replay statistics.

A game is a synchronous loop: the side to move senses, observes, then
requests a move; the opponent learns only the capture square.  Records
carry everything needed to re-simulate the game exactly, so replaying a
record with fresh trackers reproduces each player's possible-state
trajectory after the fact.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import elo, rules
from .agents import Agent, make_agent
from .bits import BLACK, PIECE_CHARS, WHITE, square_name
from .evaluator import NetworkEvaluator
from .planner import PlannerConfig
from .rules import Action, initial_state
from .tracking import Tracker

_log = logging.getLogger("penumbral.harness")

RECORD_VERSION = 1
DEFAULT_TURN_CAP = 160  # half-turns; RBC games rarely get near this
REPLAY_CAP = 1_000_000


# ---------------------------------------------------------------------------
# Game records
# ---------------------------------------------------------------------------


def _piece_char(piece) -> str | None:
    if piece is None:
        return None
    color, kind = piece
    ch = PIECE_CHARS[kind]
    return ch if color == WHITE else ch.lower()


def encode_sense_result(result) -> list:
    """JSON form of a sense result: [offset, piece letter or null] pairs."""
    return [[off, _piece_char(piece)] for off, piece in result]


def decode_sense_result(encoded) -> tuple:
    out = []
    for off, ch in encoded:
        if ch is None:
            out.append((off, None))
        else:
            out.append((off, (WHITE if ch.isupper() else BLACK,
                              PIECE_CHARS.index(ch.upper()))))
    return tuple(out)


@dataclass
class TurnRecord:
    """One player's sense and move, with everything both sides observed."""

    side: int
    sense: str
    sense_result: list
    requested: str
    executed: str
    capture: str | None
    x_sizes: list  # tracked |X| for white and black after this turn
    seconds: float

    def observation_core(self) -> tuple:
        return (self.side, self.sense, tuple(map(tuple, self.sense_result)),
                self.requested, self.executed, self.capture)


@dataclass
class GameRecord:
    """One finished game in replayable form."""

    white: str
    black: str
    seed: int
    turns: list = field(default_factory=list)
    winner: int | None = None
    reason: str = "unfinished"
    timing: dict = field(default_factory=dict)
    v: int = RECORD_VERSION

    def core(self) -> dict:
        """Deterministic content: everything except wall-clock timings."""
        d = asdict(self)
        d.pop("timing")
        for turn in d["turns"]:
            turn.pop("seconds")
        return d

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @staticmethod
    def from_dict(d: dict) -> "GameRecord":
        if d.get("v") != RECORD_VERSION:
            raise ValueError(f"unsupported record version: {d.get('v')!r}")
        turns = [TurnRecord(**t) for t in d.pop("turns")]
        return GameRecord(turns=turns, **d)

    @staticmethod
    def from_json(line: str) -> "GameRecord":
        return GameRecord.from_dict(json.loads(line))


def write_records(path, records) -> None:
    with open(path, "w") as f:
        for record in records:
            f.write(record.to_json() + "\n")


def read_records(path) -> list[GameRecord]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(GameRecord.from_json(line))
    return out


# ---------------------------------------------------------------------------
# Playing one game
# ---------------------------------------------------------------------------


class GameAbort(RuntimeError):
    """Internal inconsistency while playing; the game should be replayed."""


def play_game(white: Agent, black: Agent, seed: int = 0,
              turn_cap: int = DEFAULT_TURN_CAP,
              game_seconds: float | None = None,
              observer=None) -> GameRecord:
    """Run one full game and return its record.

    observer, when given, is called with (turn_index, world, agents dict)
    after every half-turn.  An internal tracking failure in either agent
    aborts the game; the record comes back flagged with reason "aborted"
    for the caller to discard or replay.
    """
    agents = {WHITE: white, BLACK: black}
    children = np.random.SeedSequence(seed).spawn(2)
    white.begin_game(WHITE, children[0])
    black.begin_game(BLACK, children[1])
    record = GameRecord(white=white.name, black=black.name, seed=seed)
    world = initial_state()
    used = {WHITE: 0.0, BLACK: 0.0}

    try:
        for turn_index in range(turn_cap):
            side = world.side
            actor, other = agents[side], agents[1 - side]
            left = math.inf if game_seconds is None else game_seconds - used[side]
            began = time.perf_counter()

            sense = actor.choose_sense(left)
            assert sense.kind == "sense", f"{actor.name} returned {sense}"
            world, result = rules.apply_sense(world, sense.sense_sq)
            actor.observe_sense(sense.sense_sq, result)

            left = math.inf if game_seconds is None else (
                game_seconds - used[side] - (time.perf_counter() - began))
            requested = actor.choose_move(left)
            assert requested.kind in ("move", "pass"), (
                f"{actor.name} returned {requested}")
            world, executed, capture_square = rules.apply_move(world, requested)
            actor.observe_move(requested, executed, capture_square)
            other.observe_opponent_move(capture_square)

            used[side] += time.perf_counter() - began
            record.turns.append(TurnRecord(
                side=side,
                sense=sense.text(),
                sense_result=encode_sense_result(result),
                requested=requested.text(),
                executed=executed.text(),
                capture=None if capture_square is None
                        else square_name(capture_square),
                x_sizes=[agents[WHITE].tracked_size(),
                         agents[BLACK].tracked_size()],
                seconds=time.perf_counter() - began,
            ))
            if observer is not None:
                observer(turn_index, world, agents)
            if world.winner() is not None:
                record.winner = world.winner()
                record.reason = "king_capture"
                break
        else:
            record.reason = "turn_cap"
    except AssertionError as exc:
        _log.warning("game aborted (%s vs %s, seed %d): %s",
                     white.name, black.name, seed, exc)
        record.reason = "aborted"
        record.winner = None

    record.timing = {"white": used[WHITE], "black": used[BLACK]}
    return record


def score_for_white(record: GameRecord) -> float:
    """1 for a White win, 0 for a loss, 0.5 for a capped draw."""
    if record.winner == WHITE:
        return 1.0
    if record.winner == BLACK:
        return 0.0
    return 0.5


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def replay_observations(record: GameRecord):
    """Re-simulate a record from its requested actions.

    Yields one observation tuple per turn in TurnRecord.observation_core
    form; any divergence from the record means the record is corrupt.
    """
    world = initial_state()
    for turn in record.turns:
        side = world.side
        sense = Action.from_text(turn.sense)
        world, result = rules.apply_sense(world, sense.sense_sq)
        requested = Action.from_text(turn.requested)
        world, executed, capture_square = rules.apply_move(world, requested)
        yield (side, sense.text(), tuple(map(tuple, encode_sense_result(result))),
               requested.text(), executed.text(),
               None if capture_square is None else square_name(capture_square))


def verify_record(record: GameRecord) -> bool:
    """True when re-simulation reproduces every recorded observation."""
    replayed = list(replay_observations(record))
    if len(replayed) != len(record.turns):
        return False
    return all(
        got == turn.observation_core()
        for got, turn in zip(replayed, record.turns)
    )


@dataclass
class ReplayRow:
    """One player's view of one game: peak tracking load and the outcome."""

    player: str
    game_seed: int
    max_states: int
    score: float
    overflowed: bool


@dataclass
class ReplayStats:
    rows: list
    buckets: list  # (bucket lower bound, games, mean score)
    median_max_states: float

    def spearman(self) -> float:
        """Rank correlation between bucket size and bucket win rate."""
        from scipy.stats import spearmanr

        if len(self.buckets) < 2:
            return 0.0
        lows = [b[0] for b in self.buckets]
        rates = [b[2] for b in self.buckets]
        if len(set(rates)) == 1:
            return 0.0
        rho = spearmanr(lows, rates).statistic
        return 0.0 if math.isnan(rho) else float(rho)


def replay_stats(records, cap: int = REPLAY_CAP) -> ReplayStats:
    """Recount each player's possible-state trajectory from the records.

    Tracking is redone from scratch with the given cap, so the numbers are
    comparable across agents regardless of what they tracked live.  Each
    game contributes one row per player; rows are bucketed by the decade
    of their peak state count.
    """
    rows = []
    for record in records:
        if record.reason == "aborted":
            continue
        try:
            trackers = {WHITE: Tracker(WHITE, cap=cap, keep_history=False),
                        BLACK: Tracker(BLACK, cap=cap, keep_history=False)}
            world = initial_state()
            for turn in record.turns:
                side = world.side
                sense = Action.from_text(turn.sense)
                world, result = rules.apply_sense(world, sense.sense_sq)
                trackers[side].on_own_sense(sense.sense_sq, result)
                requested = Action.from_text(turn.requested)
                world, executed, capture_square = rules.apply_move(world, requested)
                trackers[side].on_own_move(requested, executed, capture_square)
                trackers[1 - side].on_opponent_move(capture_square)
        except (AssertionError, ValueError) as exc:
            _log.warning("skipping unreplayable record (seed %d): %s",
                         record.seed, exc)
            continue
        score = score_for_white(record)
        for color, name, sc in ((WHITE, record.white, score),
                                (BLACK, record.black, 1.0 - score)):
            rows.append(ReplayRow(
                player=name,
                game_seed=record.seed,
                max_states=max(trackers[color].max_sizes),
                score=sc,
                overflowed=trackers[color].overflow,
            ))

    buckets = []
    by_decade = {}
    for row in rows:
        by_decade.setdefault(int(math.log10(max(row.max_states, 1))), []).append(row)
    for decade in sorted(by_decade):
        group = by_decade[decade]
        buckets.append((10 ** decade, len(group),
                        sum(r.score for r in group) / len(group)))
    median = float(np.median([r.max_states for r in rows])) if rows else 0.0
    return ReplayStats(rows=rows, buckets=buckets, median_max_states=median)


# ---------------------------------------------------------------------------
# Agent construction from declarative specs
# ---------------------------------------------------------------------------

_PLANNER_FIELDS = {f.name for f in fields(PlannerConfig)}
_PARAM_ALIASES = {"m": "mixing", "l": "subsample_limit", "bandit_kind": "variant"}


def build_agent(kind: str, name: str | None = None, **params) -> Agent:
    """make_agent plus config-key routing for declarative tournament specs.

    Planner keys (c, m, kappa, phi, bandit_kind, depths, budgets, ...) are
    gathered into a PlannerConfig; an "evaluator" key of "heuristic" or a
    weight-file path picks the evaluator; the rest go to the constructor.
    """
    params = {_PARAM_ALIASES.get(k, k): v for k, v in params.items()}
    cfg_kw = {k: params.pop(k) for k in list(params) if k in _PLANNER_FIELDS}
    evaluator_spec = params.pop("evaluator", None)
    if evaluator_spec not in (None, "heuristic"):
        params["evaluator"] = NetworkEvaluator.load(evaluator_spec)
    is_planning = kind.startswith("Dsmcp")
    if is_planning:
        base = PlannerConfig(time_budget=1.0)
        if cfg_kw:
            if "playout_limit" in cfg_kw and "time_budget" not in cfg_kw:
                base = PlannerConfig(time_budget=None)
            params["cfg"] = replace(base, **cfg_kw)
    elif kind == "NetworkOnly" and "subsample_limit" in cfg_kw:
        params["subsample_limit"] = cfg_kw.pop("subsample_limit")
    return make_agent(kind, name=name, **params)


@dataclass
class AgentSpec:
    """A named, parameterized agent kind, constructible inside any worker."""

    kind: str
    name: str | None = None
    params: dict = field(default_factory=dict)

    def build(self) -> Agent:
        return build_agent(self.kind, name=self.name, **self.params)

    @property
    def display_name(self) -> str:
        return self.name or self.kind


# ---------------------------------------------------------------------------
# Tournaments
# ---------------------------------------------------------------------------


def _play_spec_game(args):
    white_spec, black_spec, seed, turn_cap, game_seconds = args
    record = play_game(white_spec.build(), black_spec.build(), seed=seed,
                       turn_cap=turn_cap, game_seconds=game_seconds)
    return record


def schedule_pairings(specs, games_per_pair):
    """Color-balanced round robin: each unordered pair, alternating colors."""
    games = []
    for i in range(len(specs)):
        for j in range(i + 1, len(specs)):
            for g in range(games_per_pair):
                pair = (specs[i], specs[j]) if g % 2 == 0 else (specs[j], specs[i])
                games.append(pair)
    return games


def run_tournament(specs, games_per_pair: int, workers: int = 0, seed: int = 0,
                   turn_cap: int = DEFAULT_TURN_CAP,
                   game_seconds: float | None = None,
                   anchor: str | None = None,
                   max_replays: int = 3):
    """Play every pairing, re-playing aborted games, and fit Elo ratings.

    Returns (records, EloTable).  workers <= 1 plays in-process; more run
    one game per process.  Seeds derive from the master seed and the game
    index, so scheduling order never changes outcomes.
    """
    if len(specs) < 2:
        raise ValueError("a tournament needs at least two agents")
    pairings = schedule_pairings(specs, games_per_pair)
    seeds = np.random.SeedSequence(seed).generate_state(len(pairings))
    jobs = [
        (w, b, int(s), turn_cap, game_seconds)
        for (w, b), s in zip(pairings, seeds)
    ]

    def run_all(batch):
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_play_spec_game, batch, chunksize=1))
        return [_play_spec_game(job) for job in batch]

    records = run_all(jobs)
    replays = 0
    for attempt in range(max_replays):
        retry = [i for i, r in enumerate(records) if r.reason == "aborted"]
        if not retry:
            break
        _log.warning("replaying %d aborted games (attempt %d)",
                     len(retry), attempt + 1)
        fresh = np.random.SeedSequence([seed, 1 + attempt]).generate_state(len(retry))
        batch = [
            (jobs[i][0], jobs[i][1], int(s), turn_cap, game_seconds)
            for i, s in zip(retry, fresh)
        ]
        for i, record in zip(retry, run_all(batch)):
            records[i] = record
        replays += len(retry)
    if replays:
        _log.info("replayed %d aborted games in total", replays)

    results = [
        (r.white, r.black, score_for_white(r))
        for r in records if r.reason != "aborted"
    ]
    table = elo.estimate_elo(results, anchor=anchor)
    return records, table
