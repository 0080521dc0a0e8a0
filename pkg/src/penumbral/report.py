"""CSV tables and figures summarizing tournaments and replayed games.

Everything here takes the already-computed results (an EloTable, a
ReplayStats) and renders them; nothing replays games or talks to agents.
Figure functions import pyplot lazily so library users who never render
do not pay for a matplotlib backend.
"""

from __future__ import annotations

import csv
from pathlib import Path


def _plt():
    import matplotlib

    if matplotlib.get_backend().lower() != "agg":
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# ---------------------------------------------------------------------------
# Win rate vs. tracked-state-count curve


def write_win_curve_csv(stats, path) -> Path:
    """Bucketed win rates, one row per decade of peak state count."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bucket_low", "games", "win_rate"])
        for low, games, rate in stats.buckets:
            w.writerow([low, games, f"{rate:.4f}"])
    return path


def write_replay_rows_csv(stats, path) -> Path:
    """Per-player detail behind the curve, one row per (game, color)."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["player", "game_seed", "max_states", "score", "overflowed"])
        for r in stats.rows:
            w.writerow([r.player, r.game_seed, r.max_states,
                        f"{r.score:.1f}", int(r.overflowed)])
    return path


def render_win_curve(stats, path, title: str | None = None) -> Path:
    path = Path(path)
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if stats.buckets:
        lows = [b[0] for b in stats.buckets]
        rates = [b[2] for b in stats.buckets]
        games = [b[1] for b in stats.buckets]
        ax.plot(lows, rates, marker="o", color="tab:blue")
        for low, rate, n in zip(lows, rates, games):
            ax.annotate(str(n), (low, rate), textcoords="offset points",
                        xytext=(0, 6), ha="center", fontsize=8)
        ax.set_xscale("log")
    ax.axhline(0.5, color="gray", linewidth=0.8, linestyle=":")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("peak tracked states (bucket lower bound)")
    ax.set_ylabel("win rate")
    ax.set_title(title or
                 f"win rate by tracking load "
                 f"(median peak {stats.median_max_states:.0f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Elo tables


def write_elo_csv(table, path) -> Path:
    path = Path(path)
    ranked = sorted(table.entries.items(), key=lambda kv: -kv[1].rating)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["agent", "rating", "interval", "games", "anchor"])
        for name, e in ranked:
            w.writerow([name, f"{e.rating:.1f}", f"{e.interval:.1f}",
                        e.games, int(name == table.anchor)])
    return path


def render_elo(table, path, title: str = "tournament ratings") -> Path:
    path = Path(path)
    plt = _plt()
    ranked = sorted(table.entries.items(), key=lambda kv: kv[1].rating)
    names = [name for name, _ in ranked]
    ratings = [e.rating for _, e in ranked]
    intervals = [e.interval for _, e in ranked]
    fig, ax = plt.subplots(figsize=(6.0, 0.5 * max(len(names), 4) + 1.2))
    ax.errorbar(ratings, range(len(names)), xerr=intervals, fmt="o",
                color="tab:blue", ecolor="gray", capsize=3)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.axvline(table.anchor_rating, color="gray", linewidth=0.8, linestyle=":")
    ax.set_xlabel(f"Elo (anchor {table.anchor} = {table.anchor_rating:.0f})")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Bundled reports


def write_tournament_report(out_dir, records, table) -> dict:
    """Everything a finished tournament produces, under one directory."""
    from .harness import write_records

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"games": out / "games.jsonl",
             "elo_csv": out / "elo.csv",
             "elo_txt": out / "elo.txt",
             "elo_png": out / "elo.png"}
    write_records(paths["games"], records)
    write_elo_csv(table, paths["elo_csv"])
    paths["elo_txt"].write_text(table.format() + "\n")
    render_elo(table, paths["elo_png"])
    return paths


def write_stats_report(stats, csv_path, png_path=None, rows_path=None) -> dict:
    """Win-curve CSV plus its figure; a detail CSV when asked for."""
    csv_path = Path(csv_path)
    if png_path is None:
        png_path = csv_path.with_suffix(".png")
    paths = {"csv": write_win_curve_csv(stats, csv_path),
             "png": render_win_curve(stats, png_path)}
    if rows_path is not None:
        paths["rows"] = write_replay_rows_csv(stats, rows_path)
    return paths
