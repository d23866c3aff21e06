"""Experiment definitions: arms, designs, status machine, JSON wire form."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Union

from ..errors import IllegalTransition, ParseError
from ..schema import TOKEN_RE
from ..traits import (
    CohortDefinition,
    MetricDefinition,
    TraitDescriptor,
    node_from_json,
    node_to_json,
)

STATUSES = ("draft", "running", "paused", "stopped")
POLICY_KINDS = ("linucb", "thompson", "egreedy")


@dataclass(frozen=True)
class Arm:
    arm_id: str
    content_ref: str

    def __post_init__(self) -> None:
        if not TOKEN_RE.match(self.arm_id):
            raise ValueError(f"bad arm id {self.arm_id!r}")


@dataclass(frozen=True)
class FixedAb:
    ratio: float = 0.5

    kind: ClassVar[str] = "fixed_ab"

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must be in (0, 1)")


@dataclass(frozen=True)
class ClusterAb:
    cluster_trait: str
    ratio: float = 0.5

    kind: ClassVar[str] = "cluster_ab"

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must be in (0, 1)")


@dataclass(frozen=True)
class MicroRandomized:
    prob: float
    decision_points: tuple[int, ...]

    kind: ClassVar[str] = "micro_randomized"

    def __post_init__(self) -> None:
        if not 0.0 < self.prob <= 1.0:
            raise ValueError("prob must be in (0, 1]")
        if not self.decision_points:
            raise ValueError("micro designs need at least one decision point")
        if any(b <= a for a, b in zip(self.decision_points, self.decision_points[1:])):
            raise ValueError("decision points must be strictly increasing days")


@dataclass(frozen=True)
class Adaptive:
    policy: str

    kind: ClassVar[str] = "adaptive"

    def __post_init__(self) -> None:
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.policy!r}")


Design = Union[FixedAb, ClusterAb, MicroRandomized, Adaptive]


@dataclass(frozen=True)
class ExperimentDef:
    experiment_id: str
    cohort: CohortDefinition
    arms: tuple[Arm, ...]
    design: Design
    metric: MetricDefinition
    start_day: int
    end_day: int
    seed: int
    cadence_days: int = 7
    status: str = "draft"

    def __post_init__(self) -> None:
        if not TOKEN_RE.match(self.experiment_id):
            raise ValueError(f"bad experiment id {self.experiment_id!r}")
        ids = [a.arm_id for a in self.arms]
        if len(set(ids)) != len(ids):
            raise ValueError("arm ids must be unique")
        if len(ids) < 2:
            raise ValueError("experiments need at least two arms")
        # A/B assignment is binary: arms[0] is treatment, arms[1] control.
        if isinstance(self.design, (FixedAb, ClusterAb)) and len(ids) != 2:
            raise ValueError("fixed/cluster designs take exactly two arms")
        if self.cadence_days < 1:
            raise ValueError("cadence_days must be >= 1")
        if not 0 <= self.start_day <= self.end_day:
            raise ValueError("need 0 <= start_day <= end_day")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def arm_ids(self) -> tuple[str, ...]:
        return tuple(a.arm_id for a in self.arms)

    def arm(self, arm_id: str) -> Arm:
        for a in self.arms:
            if a.arm_id == arm_id:
                return a
        raise KeyError(arm_id)


# --- status machine ------------------------------------------------------------

_TRANSITIONS = {
    ("draft", "resume"): "running",
    ("running", "pause"): "paused",
    ("paused", "resume"): "running",
    ("running", "stop"): "stopped",
    ("paused", "stop"): "stopped",
}


def next_status(status: str, action: str) -> str:
    try:
        return _TRANSITIONS[(status, action)]
    except KeyError:
        raise IllegalTransition(f"cannot {action} a {status} experiment") from None


# --- JSON wire form -------------------------------------------------------------


def design_to_json(design: Design) -> dict:
    if isinstance(design, FixedAb):
        return {"kind": "fixed_ab", "ratio": design.ratio}
    if isinstance(design, ClusterAb):
        return {
            "kind": "cluster_ab",
            "cluster_trait": design.cluster_trait,
            "ratio": design.ratio,
        }
    if isinstance(design, MicroRandomized):
        return {
            "kind": "micro_randomized",
            "prob": design.prob,
            "decision_points": list(design.decision_points),
        }
    return {"kind": "adaptive", "policy": design.policy}


def design_from_json(data: Any) -> Design:
    try:
        kind = data["kind"]
        if kind == "fixed_ab":
            return FixedAb(ratio=float(data["ratio"]))
        if kind == "cluster_ab":
            return ClusterAb(
                cluster_trait=data["cluster_trait"], ratio=float(data["ratio"])
            )
        if kind == "micro_randomized":
            return MicroRandomized(
                prob=float(data["prob"]),
                decision_points=tuple(int(d) for d in data["decision_points"]),
            )
        if kind == "adaptive":
            return Adaptive(policy=data["policy"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad design: {exc}") from None
    raise ParseError(f"unknown design kind {kind!r}")


def trait_to_json(trait: TraitDescriptor) -> dict:
    return {
        "name": trait.name,
        "kind": trait.kind,
        "window_days": trait.window_days,
        "definition": list(trait.definition),
    }


def trait_from_json(data: Any) -> TraitDescriptor:
    try:
        return TraitDescriptor(
            name=data["name"],
            kind=data["kind"],
            window_days=int(data["window_days"]),
            definition=tuple(data["definition"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad trait descriptor: {exc}") from None


def metric_to_json(metric: MetricDefinition) -> dict:
    return {
        "name": metric.name,
        "aggregation": metric.aggregation,
        "trait": trait_to_json(metric.trait),
    }


def metric_from_json(data: Any) -> MetricDefinition:
    try:
        return MetricDefinition(
            name=data["name"],
            trait=trait_from_json(data["trait"]),
            aggregation=data["aggregation"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad metric: {exc}") from None


def experiment_to_json(exp: ExperimentDef) -> dict:
    return {
        "experiment_id": exp.experiment_id,
        "cohort": {"predicate": node_to_json(exp.cohort.predicate)},
        "arms": [{"arm_id": a.arm_id, "content_ref": a.content_ref} for a in exp.arms],
        "design": design_to_json(exp.design),
        "metric": metric_to_json(exp.metric),
        "cadence_days": exp.cadence_days,
        "start_day": exp.start_day,
        "end_day": exp.end_day,
        "seed": exp.seed,
        "status": exp.status,
    }


def experiment_from_json(data: Any) -> ExperimentDef:
    try:
        return ExperimentDef(
            experiment_id=data["experiment_id"],
            cohort=CohortDefinition(node_from_json(data["cohort"]["predicate"])),
            arms=tuple(
                Arm(a["arm_id"], a["content_ref"]) for a in data["arms"]
            ),
            design=design_from_json(data["design"]),
            metric=metric_from_json(data["metric"]),
            start_day=int(data["start_day"]),
            end_day=int(data["end_day"]),
            seed=int(data["seed"]),
            cadence_days=int(data.get("cadence_days", 7)),
            status=data.get("status", "draft"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad experiment: {exc}") from None
