"""Epsilon-greedy over empirical mean rewards, with exact propensities.

Stateless: the caller owns the means and the random stream. Used as the
uniform/greedy baseline in regret comparisons and as a cheap adaptive
plan policy.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .common import Decision


def egreedy_choose(
    mean_rewards: Mapping[int, float],
    epsilon: float,
    rng: np.random.Generator,
) -> Decision:
    if not mean_rewards:
        raise ValueError("need at least one arm")
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must be in [0, 1]")
    arms = sorted(mean_rewards)
    greedy = max(arms, key=lambda a: (mean_rewards[a], -a))
    n = len(arms)
    if epsilon > 0.0 and rng.random() < epsilon:
        chosen = arms[int(rng.integers(0, n))]
    else:
        chosen = greedy
    propensity = (1.0 - epsilon) + epsilon / n if chosen == greedy else epsilon / n
    return Decision(arm_id=chosen, propensity=propensity, context=())
