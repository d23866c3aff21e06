"""LinUCB contextual bandit.

Per arm we keep the ridge design matrix A = lambda*I + sum(x x^T) and
response vector b = sum(r x). Scores are the usual optimistic estimate
x'A^-1 b + alpha*sqrt(x'A^-1 x). Solves are explicit (no rank-1 inverse
caching); at d <= 32 that is cheap and easy to trust.
"""

from __future__ import annotations

import numpy as np

from ..errors import ParseError
from ..kvtext import as_float, as_int, dump_kv, fmt_mat, fmt_vec, load_kv, parse_mat, parse_vec
from .common import Decision, check_context


class LinUcbState:
    def __init__(
        self,
        d: int,
        arm_ids: list[int],
        alpha: float = 1.0,
        ridge: float = 1.0,
    ) -> None:
        if d < 1:
            raise ValueError("d must be >= 1")
        if not arm_ids:
            raise ValueError("need at least one arm")
        if alpha <= 0 or ridge <= 0:
            raise ValueError("alpha and ridge must be > 0")
        self.d = d
        self.alpha = alpha
        self.ridge = ridge
        self.A: dict[int, np.ndarray] = {}
        self.b: dict[int, np.ndarray] = {}
        for arm in arm_ids:
            self.A[int(arm)] = ridge * np.eye(d)
            self.b[int(arm)] = np.zeros(d)

    @property
    def arm_ids(self) -> list[int]:
        return sorted(self.A)

    def score(self, arm_id: int, context) -> float:
        x = check_context(context, self.d)
        A = self.A[arm_id]
        mean = float(x @ np.linalg.solve(A, self.b[arm_id]))
        return mean + self.alpha * self.width(arm_id, x)

    def width(self, arm_id: int, context) -> float:
        x = check_context(context, self.d)
        return float(np.sqrt(x @ np.linalg.solve(self.A[arm_id], x)))

    def choose(self, context, eligible: set[int] | None = None) -> Decision:
        x = check_context(context, self.d)
        arms = sorted(eligible) if eligible is not None else self.arm_ids
        if not arms:
            raise ValueError("eligible set is empty")
        best_arm = arms[0]
        best_score = -np.inf
        for arm in arms:
            s = self.score(arm, x)
            if s > best_score:  # strict: ties stay with the lowest arm_id
                best_score = s
                best_arm = arm
        return Decision(arm_id=best_arm, propensity=1.0, context=tuple(x))

    def update(self, decision: Decision, reward: float) -> None:
        x = check_context(decision.context, self.d)
        if decision.arm_id not in self.A:
            raise ValueError(f"unknown arm {decision.arm_id}")
        self.A[decision.arm_id] += np.outer(x, x)
        self.b[decision.arm_id] += reward * x

    def to_kv(self) -> str:
        fields = {
            "kind": "linucb",
            "version": "1",
            "d": str(self.d),
            "alpha": repr(self.alpha),
            "ridge": repr(self.ridge),
            "arms": ",".join(str(a) for a in self.arm_ids),
        }
        for arm in self.arm_ids:
            fields[f"arm.{arm}.A"] = fmt_mat(self.A[arm])
            fields[f"arm.{arm}.b"] = fmt_vec(self.b[arm])
        return dump_kv(fields, header="LinUCB policy state")

    @classmethod
    def from_kv(cls, text: str) -> "LinUcbState":
        fields = load_kv(text)
        if fields.get("kind") != "linucb":
            raise ParseError(f"not a linucb state: kind={fields.get('kind')!r}")
        arm_ids = [int(a) for a in fields["arms"].split(",")]
        state = cls(
            d=as_int(fields, "d"),
            arm_ids=arm_ids,
            alpha=as_float(fields, "alpha"),
            ridge=as_float(fields, "ridge"),
        )
        for arm in arm_ids:
            state.A[arm] = parse_mat(fields[f"arm.{arm}.A"])
            state.b[arm] = parse_vec(fields[f"arm.{arm}.b"])
        return state
