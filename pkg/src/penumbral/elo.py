"""Elo rating estimation from pairwise game results.

Maximum-a-posteriori fit of the standard logistic win model: player i
beats player j with probability 1 / (1 + 10^((s_j - s_i) / 400)).  A weak
Gaussian prior around the anchor rating keeps undefeated agents finite,
draws count half a win for each side, and 95% intervals come from the
observed information at the optimum.  The anchor's rating is held exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

_log = logging.getLogger("penumbral.elo")

SCALE = 400.0 / math.log(10.0)  # rating points per logit
DEFAULT_ANCHOR_RATING = 1000.0
PRIOR_SIGMA = 400.0


@dataclass
class EloEntry:
    rating: float
    interval: float  # 95% half-width; 0 for the anchor
    games: int


@dataclass
class EloTable:
    entries: dict
    anchor: str
    anchor_rating: float

    def rating(self, name: str) -> float:
        return self.entries[name].rating

    def interval(self, name: str) -> float:
        return self.entries[name].interval

    def predicted(self, a: str, b: str) -> float:
        """Modelled probability that a scores against b."""
        return 1.0 / (1.0 + 10 ** ((self.rating(b) - self.rating(a)) / 400.0))

    def format(self) -> str:
        width = max(len(n) for n in self.entries)
        lines = []
        ordered = sorted(self.entries.items(), key=lambda kv: -kv[1].rating)
        for name, entry in ordered:
            mark = " (anchor)" if name == self.anchor else ""
            lines.append(
                f"{name:<{width}}  {entry.rating:7.1f} +/- {entry.interval:5.1f}"
                f"  ({entry.games} games){mark}"
            )
        return "\n".join(lines)


def _components(names, pairs):
    """Connected components of the result graph, as a name -> root map."""
    parent = {n: n for n in names}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return {n: find(n) for n in names}


def estimate_elo(results, anchor: str | None = None,
                 anchor_rating: float = DEFAULT_ANCHOR_RATING,
                 prior_sigma: float = PRIOR_SIGMA) -> EloTable:
    """Fit ratings to (white, black, white score) triples.

    Colors carry no advantage term; a game contributes its score to the
    white player and one minus it to the black player.  When the result
    graph is disconnected each component is anchored separately (the
    named anchor for its own component, an arbitrary member elsewhere)
    and a warning is logged.
    """
    if not results:
        raise ValueError("no results to rate")
    names = sorted({n for w, b, _ in results for n in (w, b)})
    index = {n: i for i, n in enumerate(names)}
    k = len(names)
    score = np.zeros((k, k))
    games = np.zeros((k, k))
    for w, b, s in results:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"score out of range: {s}")
        i, j = index[w], index[b]
        score[i, j] += s
        score[j, i] += 1.0 - s
        games[i, j] += 1
        games[j, i] += 1

    if anchor is None:
        anchor = names[0]
    if anchor not in index:
        raise ValueError(f"anchor {anchor!r} played no games")

    roots = _components(names, [(w, b) for w, b, _ in results])
    anchors = {roots[anchor]: anchor}
    for name in names:
        anchors.setdefault(roots[name], name)
    if len(anchors) > 1:
        _log.warning("result graph has %d components; anchoring each separately",
                     len(anchors))
    anchored = {index[a] for a in anchors.values()}

    free = [i for i in range(k) if i not in anchored]
    ratings = np.full(k, float(anchor_rating))
    total = games.sum(axis=1)

    if free:
        for _ in range(100):
            diff = (ratings[:, None] - ratings[None, :]) / SCALE
            p = 1.0 / (1.0 + np.exp(-diff))
            grad_full = (score - games * p).sum(axis=1) / SCALE
            curve = games * p * (1.0 - p) / SCALE**2
            grad = grad_full[free] - (ratings[free] - anchor_rating) / prior_sigma**2
            hess = -curve[np.ix_(free, free)]
            np.fill_diagonal(
                hess, curve.sum(axis=1)[free] + 1.0 / prior_sigma**2
            )
            step = np.linalg.solve(hess, grad)
            ratings[free] += step
            if np.max(np.abs(step)) < 1e-9:
                break
        diff = (ratings[:, None] - ratings[None, :]) / SCALE
        p = 1.0 / (1.0 + np.exp(-diff))
        curve = games * p * (1.0 - p) / SCALE**2
        info = -curve[np.ix_(free, free)]
        np.fill_diagonal(info, curve.sum(axis=1)[free] + 1.0 / prior_sigma**2)
        variance = np.diag(np.linalg.inv(info))
    else:
        variance = np.zeros(0)

    entries = {}
    for name in names:
        i = index[name]
        if i in anchored:
            entries[name] = EloEntry(anchor_rating, 0.0, int(total[i]))
        else:
            half = 1.96 * math.sqrt(max(variance[free.index(i)], 0.0))
            entries[name] = EloEntry(float(ratings[i]), half, int(total[i]))
    return EloTable(entries=entries, anchor=anchor, anchor_rating=anchor_rating)
