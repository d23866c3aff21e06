"""Whittle indices for 2-state restless arms and top-k allocation.

States are 0 = disengaged, 1 = engaged, reward r(s) = s. The Whittle
index of a state is the passivity subsidy at which acting and resting
have equal value; we find it by bisection over the subsidy, running
value iteration at every candidate. Monotone indexability is assumed
for these 2-state instances (the acceptance suite cross-checks against
an exact-solve oracle).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import NoIndifference

VI_TOL = 1e-6
BISECT_TOL = 1e-9
SUBSIDY_BRACKET = (-10.0, 10.0)


@dataclass(frozen=True)
class RestlessArmModel:
    p_active: tuple[tuple[float, float], tuple[float, float]]
    p_passive: tuple[tuple[float, float], tuple[float, float]]
    discount: float = 0.95

    def __post_init__(self) -> None:
        if not (0.0 < self.discount < 1.0):
            raise ValueError("discount must be in (0, 1)")
        for name, matrix in (("p_active", self.p_active), ("p_passive", self.p_passive)):
            for row in matrix:
                if len(row) != 2 or any(p < 0 for p in row):
                    raise ValueError(f"{name} must be 2x2 with nonnegative entries")
                if abs(sum(row) - 1.0) > 1e-9:
                    raise ValueError(f"{name} rows must sum to 1")


def _value_iteration(arm: RestlessArmModel, subsidy: float, tol: float = VI_TOL) -> np.ndarray:
    """V(s) under the subsidy-lambda MDP: passive adds the subsidy."""
    pa = np.asarray(arm.p_active)
    pp = np.asarray(arm.p_passive)
    r = np.array([0.0, 1.0])
    beta = arm.discount
    v = np.zeros(2)
    while True:
        q_active = r + beta * (pa @ v)
        q_passive = r + subsidy + beta * (pp @ v)
        v_next = np.maximum(q_active, q_passive)
        if float(np.max(np.abs(v_next - v))) <= tol:
            return v_next
        v = v_next


def _action_gap(arm: RestlessArmModel, state: int, subsidy: float) -> float:
    """Q_active - Q_passive in the given state at this subsidy."""
    v = _value_iteration(arm, subsidy)
    pa = np.asarray(arm.p_active)
    pp = np.asarray(arm.p_passive)
    beta = arm.discount
    q_active = state + beta * float(pa[state] @ v)
    q_passive = state + subsidy + beta * float(pp[state] @ v)
    return q_active - q_passive


def whittle_index(
    arm: RestlessArmModel,
    state: int,
    bracket: tuple[float, float] = SUBSIDY_BRACKET,
    tol: float = BISECT_TOL,
) -> float:
    """Subsidy at which the arm is indifferent between acting and
    resting in `state`. The gap is decreasing in the subsidy, so plain
    bisection applies."""
    if state not in (0, 1):
        raise ValueError("state must be 0 or 1")
    lo, hi = bracket
    gap_lo = _action_gap(arm, state, lo)
    gap_hi = _action_gap(arm, state, hi)
    if gap_lo < 0.0 or gap_hi > 0.0:
        # Indifference point lies outside the bracket (or the instance
        # is not indexable here); report instead of clamping.
        raise NoIndifference(
            f"no sign change on [{lo}, {hi}] in state {state}: "
            f"gap({lo})={gap_lo:.3g}, gap({hi})={gap_hi:.3g}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _action_gap(arm, state, mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def allocate_topk(indices: Mapping[int, float], k: int) -> set[int]:
    """The min(k, n) arms with the highest indices; ties take the
    lowest arm_id."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ranked = sorted(indices, key=lambda arm: (-indices[arm], arm))
    return set(ranked[: min(k, len(ranked))])
