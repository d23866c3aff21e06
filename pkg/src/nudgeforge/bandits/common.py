"""Shared bandit types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch


@dataclass(frozen=True)
class Decision:
    """One policy choice with the context it saw and, when the policy
    can state it, the probability it had of making exactly this choice.
    propensity None means unknown (Thompson draws without the Monte
    Carlo estimate)."""

    arm_id: int
    propensity: float | None
    context: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.propensity is not None and not (0.0 < self.propensity <= 1.0):
            raise ValueError(f"propensity must be in (0, 1], got {self.propensity}")


def check_context(context, d: int) -> np.ndarray:
    x = np.asarray(context, dtype=float)
    if x.shape != (d,):
        raise DimensionMismatch(f"context shape {x.shape}, policy dimension {d}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatch("context entries must be finite")
    return x
