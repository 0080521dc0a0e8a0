"""Command line front end: single games, tournaments, replay statistics,
and self-play dataset generation."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import dataset, report
from .harness import AgentSpec, play_game, read_records, replay_stats, \
    run_tournament, write_records

_log = logging.getLogger("penumbral.cli")


def _coerce(text: str):
    """Parameter values arrive as text; guess the intended type."""
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_agent(text: str) -> AgentSpec:
    """An agent spec in "Kind,key=value,..." form, e.g.

    "RandomBot" / "DsmcpMixture,m=1,l=128,name=mix" / "MaterialBot,track_cap=30000"
    """
    kind, *items = text.split(",")
    name = None
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(
                f"expected key=value, got {item!r} in {text!r}")
        key = key.strip()
        if key == "name":
            name = value.strip()
        else:
            params[key] = _coerce(value.strip())
    return AgentSpec(kind.strip(), name, params)


def _result_line(record) -> str:
    if record.winner is None:
        outcome = f"draw ({record.reason})"
    else:
        side = "white" if record.winner == 0 else "black"
        name = record.white if record.winner == 0 else record.black
        outcome = f"{side} ({name}) wins by {record.reason}"
    return f"{record.white} vs {record.black}: {outcome} " \
           f"in {len(record.turns)} half-turns"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_play(args) -> int:
    record = play_game(args.white.build(), args.black.build(), seed=args.seed,
                       turn_cap=args.turn_cap, game_seconds=args.game_seconds)
    print(_result_line(record))
    if args.log is not None:
        with open(args.log, "a") as f:
            f.write(record.to_json() + "\n")
        print(f"logged to {args.log}")
    return 0


def _specs_from_config(config) -> list:
    specs = []
    for entry in config.get("agents", []):
        entry = dict(entry)
        kind = entry.pop("kind")
        name = entry.pop("name", None)
        params = dict(entry.pop("params", {}))
        params.update(entry)  # inline keys are parameters too
        specs.append(AgentSpec(kind, name, params))
    return specs


def cmd_tourney(args) -> int:
    with open(args.config, "rb") as f:
        config = tomllib.load(f)
    specs = _specs_from_config(config)
    records, table = run_tournament(
        specs,
        games_per_pair=config.get("games_per_pair", 10),
        workers=config.get("workers", 0),
        seed=config.get("seed", 0),
        turn_cap=config.get("turn_cap", 160),
        game_seconds=config.get("game_seconds"),
        anchor=config.get("anchor"),
    )
    paths = report.write_tournament_report(args.out, records, table)
    print(table.format())
    print(f"{len(records)} games -> {paths['games']}")
    return 0


def _load_records(replay_path) -> list:
    path = Path(replay_path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    records = []
    for f in files:
        records.extend(read_records(f))
    return records


def cmd_stats(args) -> int:
    records = _load_records(args.replay)
    if not records:
        print(f"no records under {args.replay}")
        return 1
    stats = replay_stats(records, cap=args.cap)
    paths = report.write_stats_report(stats, args.csv, rows_path=args.rows)
    print(f"{len(records)} games, {len(stats.rows)} player-views")
    print(f"median peak tracked states: {stats.median_max_states:.0f}")
    print(f"spearman(bucket, win rate): {stats.spearman():+.3f}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_selfplay(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = dataset.selfplay(args.white, args.black, games=args.games,
                               seed=args.seed, turn_cap=args.turn_cap)
    write_records(out / "records.jsonl", records)
    examples = dataset.extract_many(
        records, seed=args.seed, multiplicity=args.multiplicity,
        subsample_limit=args.subsample_limit, cap=args.cap)
    dataset.write_examples(out / "examples.pnbs", examples)
    decided = sum(1 for r in records if r.winner is not None)
    print(f"{len(records)} games ({decided} decided) -> {out / 'records.jsonl'}")
    print(f"{len(examples)} examples -> {out / 'examples.pnbs'}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="penumbral",
        description="reconnaissance blind chess engine and tournament tools")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log tracker and planner internals")
    sub = parser.add_subparsers(dest="command", required=True)

    play = sub.add_parser("play", help="play one game between two agents")
    play.add_argument("--white", type=parse_agent, required=True,
                      help='agent spec, e.g. "DsmcpMixture,m=1"')
    play.add_argument("--black", type=parse_agent, required=True)
    play.add_argument("--seed", type=int, default=0)
    play.add_argument("--turn-cap", type=int, default=160)
    play.add_argument("--game-seconds", type=float, default=None,
                      help="per-player clock; omit for fixed per-move budgets")
    play.add_argument("--log", type=Path, default=None,
                      help="append the game record to this JSONL file")
    play.set_defaults(func=cmd_play)

    tourney = sub.add_parser("tourney",
                             help="round robin from a TOML config")
    tourney.add_argument("--config", type=Path, required=True)
    tourney.add_argument("--out", type=Path, required=True,
                         help="directory for games.jsonl and the Elo report")
    tourney.set_defaults(func=cmd_tourney)

    stats = sub.add_parser("stats",
                           help="re-track logged games and plot win rate "
                                "against state-set size")
    stats.add_argument("--replay", type=Path, required=True,
                       help="a records JSONL file or a directory of them")
    stats.add_argument("--csv", type=Path, required=True,
                       help="bucketed curve output; figure lands beside it")
    stats.add_argument("--rows", type=Path, default=None,
                       help="optional per-player detail CSV")
    stats.add_argument("--cap", type=int, default=10**6,
                       help="state-tracking cap during replay")
    stats.set_defaults(func=cmd_stats)

    selfplay = sub.add_parser("selfplay",
                              help="generate games and training synopses")
    selfplay.add_argument("--games", type=int, required=True)
    selfplay.add_argument("--out", type=Path, required=True)
    selfplay.add_argument("--white", type=parse_agent,
                          default=parse_agent("MaterialBot"))
    selfplay.add_argument("--black", type=parse_agent,
                          default=parse_agent("AttackerBot"))
    selfplay.add_argument("--seed", type=int, default=0)
    selfplay.add_argument("--turn-cap", type=int, default=160)
    selfplay.add_argument("--multiplicity", type=int, default=1,
                          help="independent subsamples per decision")
    selfplay.add_argument("--subsample-limit", "-l", type=int, default=128,
                          dest="subsample_limit")
    selfplay.add_argument("--cap", type=int, default=50_000,
                          help="state-tracking cap during extraction")
    selfplay.set_defaults(func=cmd_selfplay)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
