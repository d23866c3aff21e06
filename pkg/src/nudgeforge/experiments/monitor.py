"""Sequential monitoring: daily Welch intervals, significance, trend."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import stats

from ..errors import InsufficientData


@dataclass(frozen=True)
class DailyEstimate:
    day: int
    diff: float
    ci_low: float | None
    ci_high: float | None
    n_t: int
    n_c: int
    interactions: int = 0

    def __post_init__(self) -> None:
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValueError("confidence bounds come as a pair")
        if self.ci_low is not None and not self.ci_low <= self.diff <= self.ci_high:
            raise ValueError("interval must bracket the difference")

    @property
    def has_ci(self) -> bool:
        return self.ci_low is not None

    def to_json(self) -> dict:
        return {
            "day": self.day,
            "diff": self.diff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_t": self.n_t,
            "n_c": self.n_c,
            "interactions": self.interactions,
        }

    @classmethod
    def from_json(cls, data: Any) -> "DailyEstimate":
        return cls(
            day=int(data["day"]),
            diff=float(data["diff"]),
            ci_low=None if data["ci_low"] is None else float(data["ci_low"]),
            ci_high=None if data["ci_high"] is None else float(data["ci_high"]),
            n_t=int(data["n_t"]),
            n_c=int(data["n_c"]),
            interactions=int(data.get("interactions", 0)),
        )


def estimate_daily_diff(
    t_values: Sequence[float],
    c_values: Sequence[float],
    level: float = 0.95,
    day: int = 0,
    interactions: int = 0,
) -> DailyEstimate:
    """Treatment-minus-control mean difference with a Welch interval.

    A group smaller than two still yields the point estimate but no
    interval; an empty group leaves nothing to estimate.
    """
    if len(t_values) == 0 or len(c_values) == 0:
        raise InsufficientData("both groups need at least one observation")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    t = np.asarray(t_values, dtype=float)
    c = np.asarray(c_values, dtype=float)
    n_t, n_c = len(t), len(c)
    diff = float(t.mean() - c.mean())
    if n_t < 2 or n_c < 2:
        return DailyEstimate(day, diff, None, None, n_t, n_c, interactions)
    a = float(t.var(ddof=1)) / n_t
    b = float(c.var(ddof=1)) / n_c
    se2 = a + b
    if se2 == 0.0:
        return DailyEstimate(day, diff, diff, diff, n_t, n_c, interactions)
    # Welch-Satterthwaite in the u = a/(a+b) form; the naive ratio of
    # squares underflows for subnormal variances
    u = a / se2
    df = 1.0 / (u * u / (n_t - 1) + (1.0 - u) * (1.0 - u) / (n_c - 1))
    half = float(stats.t.ppf(0.5 + level / 2.0, df)) * math.sqrt(se2)
    return DailyEstimate(day, diff, diff - half, diff + half, n_t, n_c, interactions)


def flag_significance(est: DailyEstimate) -> bool:
    """True iff zero falls outside the interval."""
    if not est.has_ci:
        raise InsufficientData("no interval on this estimate")
    return not est.ci_low <= 0.0 <= est.ci_high


def effect_trend(estimates: Sequence[DailyEstimate]) -> float:
    """Ordinary least-squares slope of diff against day."""
    if len(estimates) < 3:
        raise ValueError("trend needs at least three estimates")
    days = np.array([e.day for e in estimates], dtype=float)
    diffs = np.array([e.diff for e in estimates], dtype=float)
    return float(np.polyfit(days, diffs, 1)[0])
