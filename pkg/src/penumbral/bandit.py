"""Stochastic bandit action selection for playouts.

At a decision node the bandit either samples the policy prior outright,
with probability exp(-mixing * total visits), or picks the best action by
an upper-confidence score.  The mixing constant interpolates between pure
policy playouts (0, always sample) and plain UCT (infinity, never sample);
sampling is disabled at the root so root statistics stay comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UCB1 = "ucb1"
AVOP = "avop"


@dataclass
class BanditConfig:
    c: float = 2.0
    phi: float = 0.0
    mixing: float = 1.0
    variant: str = UCB1


def policy_sample_probability(mixing: float, total_visits: float) -> float:
    """exp(-m n) with the limit conventions spelled out."""
    if mixing == math.inf:
        return 0.0
    if total_visits == 0:
        return 1.0
    return math.exp(-mixing * float(total_visits))


def action_scores(prior: np.ndarray, n: np.ndarray, q: np.ndarray,
                  m: np.ndarray, cfg: BanditConfig) -> np.ndarray:
    """Deterministic selection scores; callers guarantee every n > 0."""
    prior = np.asarray(prior, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    total = n.sum()
    if cfg.variant == UCB1:
        exploit = (1.0 - cfg.phi) * q / n + cfg.phi * m
        explore = cfg.c * prior * np.sqrt(max(math.log(total), 0.0) / n)
    elif cfg.variant == AVOP:
        exploit = (1.0 - cfg.phi) * q / (1.0 + n) + cfg.phi * m
        explore = cfg.c * prior * math.sqrt(total) / (1.0 + n)
    else:
        raise ValueError(f"unknown bandit variant: {cfg.variant}")
    return exploit + explore


def select_action(prior: np.ndarray, n: np.ndarray, q: np.ndarray,
                  m: np.ndarray, cfg: BanditConfig, rng: np.random.Generator,
                  at_root: bool = False) -> int:
    """Index of the chosen action among the node's available actions."""
    prior = np.asarray(prior, dtype=np.float64)
    k = len(prior)
    assert k > 0, "bandit called with no actions"
    if k == 1:
        return 0
    total = float(np.sum(n))
    if not at_root:
        p = policy_sample_probability(cfg.mixing, total)
        if p > 0.0 and rng.random() < p:
            weights = np.maximum(prior, 0.0)
            s = weights.sum()
            if s <= 0.0:
                weights = np.full(k, 1.0 / k)
            else:
                weights = weights / s
            return int(rng.choice(k, p=weights))
    fresh = np.asarray(n) == 0
    if fresh.any():
        candidates = np.flatnonzero(fresh)
        return int(candidates[np.argmax(prior[candidates])])
    return int(np.argmax(action_scores(prior, n, q, m, cfg)))
