"""Experiment designs, randomized assignment, and sequential monitoring."""

from .assign import (
    CONTROL,
    TREATMENT,
    AssignmentTable,
    assign_cluster,
    assign_fixed,
    micro_cell_rng,
    pairwise_match,
    schedule_micro,
)
from .defs import (
    POLICY_KINDS,
    STATUSES,
    Adaptive,
    Arm,
    ClusterAb,
    Design,
    ExperimentDef,
    FixedAb,
    MicroRandomized,
    design_from_json,
    design_to_json,
    experiment_from_json,
    experiment_to_json,
    metric_from_json,
    metric_to_json,
    next_status,
    trait_from_json,
    trait_to_json,
)
from .monitor import DailyEstimate, effect_trend, estimate_daily_diff, flag_significance

__all__ = [
    "CONTROL",
    "TREATMENT",
    "POLICY_KINDS",
    "STATUSES",
    "Adaptive",
    "Arm",
    "AssignmentTable",
    "ClusterAb",
    "DailyEstimate",
    "Design",
    "ExperimentDef",
    "FixedAb",
    "MicroRandomized",
    "assign_cluster",
    "assign_fixed",
    "design_from_json",
    "design_to_json",
    "effect_trend",
    "estimate_daily_diff",
    "experiment_from_json",
    "experiment_to_json",
    "flag_significance",
    "metric_from_json",
    "metric_to_json",
    "micro_cell_rng",
    "next_status",
    "pairwise_match",
    "schedule_micro",
    "trait_from_json",
    "trait_to_json",
]
