"""Demand forecasting: Holt's linear exponential smoothing with
empirical-residual prediction intervals.

Parameters (alpha, beta) are picked from the coarse grid {0.1..0.9}^2 by
in-sample one-step squared error; intervals are the symmetric
residual-quantile kind, which stays valid for count-like demand series
without any Gaussian assumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParseError, SeriesTooShort
from ..kvtext import as_float, as_int, dump_kv, fmt_vec, load_kv, parse_vec

PARAM_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    point: tuple[float, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    level: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (len(self.point) == len(self.lower) == len(self.upper) == self.horizon):
            raise ValueError("point/lower/upper must have horizon entries")
        for lo, pt, hi in zip(self.lower, self.point, self.upper):
            if not (lo <= pt <= hi):
                raise ValueError("need lower <= point <= upper")

    def to_kv(self) -> str:
        return dump_kv(
            {
                "kind": "forecast",
                "version": "1",
                "horizon": str(self.horizon),
                "level": repr(self.level),
                "alpha": repr(self.alpha),
                "beta": repr(self.beta),
                "point": fmt_vec(self.point),
                "lower": fmt_vec(self.lower),
                "upper": fmt_vec(self.upper),
            },
            header="Holt linear smoothing forecast",
        )

    @classmethod
    def from_kv(cls, text: str) -> "ForecastResult":
        fields = load_kv(text)
        if fields.get("kind") != "forecast":
            raise ParseError(f"not a forecast: kind={fields.get('kind')!r}")
        return cls(
            horizon=as_int(fields, "horizon"),
            point=tuple(parse_vec(fields["point"])),
            lower=tuple(parse_vec(fields["lower"])),
            upper=tuple(parse_vec(fields["upper"])),
            level=as_float(fields, "level"),
            alpha=as_float(fields, "alpha"),
            beta=as_float(fields, "beta"),
        )


def _holt_run(y: np.ndarray, alpha: float, beta: float) -> tuple[float, float, np.ndarray]:
    """Run the smoother; returns final level, final trend, and one-step
    residuals for t >= 2 (the t=1 residual is zero by construction of
    the trend initialization and carries no information)."""
    level = y[0]
    trend = y[1] - y[0]
    residuals = np.empty(len(y) - 2)
    for t in range(1, len(y)):
        forecast = level + trend
        if t >= 2:
            residuals[t - 2] = y[t] - forecast
        new_level = alpha * y[t] + (1.0 - alpha) * forecast
        trend = beta * (new_level - level) + (1.0 - beta) * trend
        level = new_level
    return level, trend, residuals


def forecast_fit_predict(
    series: list[float], horizon: int, level: float = 0.9
) -> ForecastResult:
    if len(series) < 3:
        raise SeriesTooShort(f"need >= 3 points, got {len(series)}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    y = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("series must be finite")

    best: tuple[float, float, float, float, np.ndarray] | None = None
    best_sse = np.inf
    for alpha in PARAM_GRID:
        for beta in PARAM_GRID:
            lvl, trend, residuals = _holt_run(y, alpha, beta)
            sse = float(residuals @ residuals)
            if sse < best_sse:  # strict: ties keep the first grid point
                best_sse = sse
                best = (alpha, beta, lvl, trend, residuals)
    assert best is not None
    alpha, beta, lvl, trend, residuals = best

    # "higher" keeps the interval conservative on small residual samples.
    q = float(np.quantile(np.abs(residuals), level, method="higher"))
    points = tuple(float(lvl + h * trend) for h in range(1, horizon + 1))
    return ForecastResult(
        horizon=horizon,
        point=points,
        lower=tuple(p - q for p in points),
        upper=tuple(p + q for p in points),
        level=level,
        alpha=alpha,
        beta=beta,
    )
