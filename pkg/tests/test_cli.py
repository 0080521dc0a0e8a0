"""Argument parsing and end-to-end runs of every subcommand."""

from __future__ import annotations

import argparse

import pytest

from penumbral import cli, dataset
from penumbral.harness import read_records


def test_parse_agent_syntax():
    plain = cli.parse_agent("RandomBot")
    assert (plain.kind, plain.name, plain.params) == ("RandomBot", None, {})
    rich = cli.parse_agent(
        "DsmcpMixture,m=1,l=128,kappa=0.25,name=mix,use_static=false,"
        "time_budget=none,evaluator=heuristic")
    assert rich.kind == "DsmcpMixture"
    assert rich.name == "mix"
    assert rich.params == {"m": 1, "l": 128, "kappa": 0.25,
                           "use_static": False, "time_budget": None,
                           "evaluator": "heuristic"}
    with pytest.raises(argparse.ArgumentTypeError):
        cli.parse_agent("RandomBot,oops")


def test_play_appends_to_the_log(tmp_path, capsys):
    log = tmp_path / "games.jsonl"
    argv = ["play", "--white", "RandomBot", "--black", "RandomBot",
            "--seed", "5", "--turn-cap", "10", "--log", str(log)]
    assert cli.main(argv) == 0
    assert cli.main(argv) == 0
    records = read_records(log)
    assert len(records) == 2
    assert records[0].core() == records[1].core()
    out = capsys.readouterr().out
    assert "RandomBot vs RandomBot" in out


def _write_config(path):
    path.write_text(
        'games_per_pair = 4\n'
        'seed = 3\n'
        'turn_cap = 20\n'
        'anchor = "rand"\n'
        '[[agents]]\n'
        'kind = "RandomBot"\n'
        'name = "rand"\n'
        '[[agents]]\n'
        'kind = "AttackerBot"\n'
        'name = "atk"\n'
        'track_cap = 3000\n')


def test_tourney_writes_report_files(tmp_path, capsys):
    config = tmp_path / "t.toml"
    _write_config(config)
    out = tmp_path / "report"
    assert cli.main(["tourney", "--config", str(config),
                     "--out", str(out)]) == 0
    assert len(read_records(out / "games.jsonl")) == 4
    elo_csv = (out / "elo.csv").read_text().splitlines()
    assert elo_csv[0] == "agent,rating,interval,games,anchor"
    assert len(elo_csv) == 3
    assert "rand" in (out / "elo.txt").read_text()
    assert (out / "elo.png").stat().st_size > 0
    assert "(anchor)" in capsys.readouterr().out


def test_stats_renders_curve_beside_csv(tmp_path, capsys):
    config = tmp_path / "t.toml"
    _write_config(config)
    out = tmp_path / "report"
    cli.main(["tourney", "--config", str(config), "--out", str(out)])
    csv_path = tmp_path / "curve.csv"
    rows_path = tmp_path / "rows.csv"
    assert cli.main(["stats", "--replay", str(out), "--csv", str(csv_path),
                     "--rows", str(rows_path), "--cap", "20000"]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "bucket_low,games,win_rate"
    assert len(lines) >= 2
    # Every game contributes one row per color.
    assert len(rows_path.read_text().splitlines()) == 9
    assert (tmp_path / "curve.png").stat().st_size > 0
    summary = capsys.readouterr().out
    assert "median peak tracked states" in summary
    assert "spearman" in summary


def test_stats_with_no_records_fails_cleanly(tmp_path, capsys):
    assert cli.main(["stats", "--replay", str(tmp_path),
                     "--csv", str(tmp_path / "x.csv")]) == 1
    assert "no records" in capsys.readouterr().out


def test_selfplay_emits_readable_examples(tmp_path, capsys):
    out = tmp_path / "data"
    assert cli.main(["selfplay", "--games", "2", "--out", str(out),
                     "--seed", "2", "--turn-cap", "30", "-l", "32"]) == 0
    records = read_records(out / "records.jsonl")
    assert len(records) == 2
    assert records[0].white == "MaterialBot"
    assert records[1].white == "AttackerBot"
    examples = dataset.read_examples(out / "examples.pnbs")
    decided = [r for r in records if r.winner is not None]
    # Two decisions per half-turn, minus any dropped once tracking froze.
    assert 0 < len(examples) <= sum(2 * len(r.turns) for r in decided)
    assert str(len(examples)) in capsys.readouterr().out


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        cli.main([])
