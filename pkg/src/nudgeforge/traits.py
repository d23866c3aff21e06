"""Contextual traits, cohort predicates, and metric aggregation.

A trait is a pure function of (event log up to as_of, descriptor).
Dynamic traits read a half-open trailing window (as_of - window, as_of];
static traits read the earliest event that carries the attribute.
Cohorts are boolean predicate trees over trait comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Union

from .errors import EmptyGroup, ParseError, UnknownTrait
from .eventlog import EventLog
from .schema import TraitValue

DAY_MS = 86_400_000

BUILTIN_DEFINITIONS = (
    "weekly_purchased_variety",
    "days_since_last_event",
    "count_events",
    "distinct_payload_values",
    "static_attribute",
)


@dataclass(frozen=True)
class TraitDescriptor:
    name: str
    kind: str
    window_days: int
    definition: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("static", "dynamic"):
            raise ValueError(f"unknown trait kind {self.kind!r}")
        builtin = self.definition[0] if self.definition else None
        if builtin not in BUILTIN_DEFINITIONS:
            raise UnknownTrait(f"unknown built-in {builtin!r}")
        if builtin == "static_attribute":
            if self.kind != "static" or self.window_days != 0:
                raise ValueError("static_attribute traits are static with window 0")
            if len(self.definition) != 2:
                raise ValueError("static_attribute needs a payload key")
        else:
            if self.kind != "dynamic" or self.window_days < 1:
                raise ValueError(f"{builtin} is dynamic and needs window_days >= 1")
            if builtin == "weekly_purchased_variety":
                if self.window_days != 7 or len(self.definition) != 1:
                    raise ValueError("weekly_purchased_variety is fixed to a 7-day window")
            elif len(self.definition) != 2:
                raise ValueError(f"{builtin} needs one argument")


TraitRegistry = dict[str, TraitDescriptor]


def default_traits() -> TraitRegistry:
    descriptors = [
        TraitDescriptor("weekly_purchased_variety", "dynamic", 7, ("weekly_purchased_variety",)),
        TraitDescriptor("days_since_last_order", "dynamic", 30, ("days_since_last_event", "order_placed")),
        TraitDescriptor("orders_30d", "dynamic", 30, ("count_events", "order_placed")),
        TraitDescriptor("distinct_items_30d", "dynamic", 30, ("distinct_payload_values", "sku")),
        TraitDescriptor("region", "static", 0, ("static_attribute", "region")),
    ]
    return {d.name: d for d in descriptors}


def compute_trait(
    log: EventLog, subject_id: str, desc: TraitDescriptor, as_of_ms: int
) -> TraitValue:
    builtin = desc.definition[0]
    if builtin == "static_attribute":
        key = desc.definition[1]
        value = None
        for event in log.events_for(subject_id, until_ms=as_of_ms):
            if key in event.payload:
                value = event.payload[key]
                break
    else:
        since = as_of_ms - desc.window_days * DAY_MS
        if builtin == "weekly_purchased_variety":
            events = log.events_for(
                subject_id, since_ms=since, until_ms=as_of_ms,
                stream="ecommerce", event_name="order_placed",
            )
            value = len({e.payload["sku"] for e in events})
        elif builtin == "days_since_last_event":
            events = log.events_for(
                subject_id, since_ms=since, until_ms=as_of_ms,
                event_name=desc.definition[1],
            )
            if events:
                value = (as_of_ms - events[-1].timestamp_ms) / DAY_MS
            else:
                value = float(desc.window_days)
        elif builtin == "count_events":
            value = len(
                log.events_for(
                    subject_id, since_ms=since, until_ms=as_of_ms,
                    event_name=desc.definition[1],
                )
            )
        elif builtin == "distinct_payload_values":
            key = desc.definition[1]
            seen = set()
            for event in log.events_for(subject_id, since_ms=since, until_ms=as_of_ms):
                if key in event.payload:
                    v = event.payload[key]
                    seen.add(tuple(v) if isinstance(v, list) else v)
            value = len(seen)
        else:  # pragma: no cover - descriptor validation forbids this
            raise UnknownTrait(builtin)
    return TraitValue(
        subject_id=subject_id,
        name=desc.name,
        kind=desc.kind,
        value=value,
        as_of_ms=as_of_ms,
        window_days=desc.window_days,
    )


# --- cohort predicates --------------------------------------------------------

COMPARE_OPS = ("<", "<=", "=", "!=", ">=", ">")


@dataclass(frozen=True)
class Cmp:
    trait: str
    op: str
    value: Any

    def __post_init__(self) -> None:
        if self.op not in COMPARE_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    children: tuple["Node", ...] = ()


@dataclass(frozen=True)
class Or:
    children: tuple["Node", ...] = ()


@dataclass(frozen=True)
class Not:
    child: "Node" = None  # type: ignore[assignment]


Node = Union[Cmp, And, Or, Not]

MAX_DEPTH = 32


@dataclass(frozen=True)
class CohortDefinition:
    predicate: Node

    def __post_init__(self) -> None:
        if _depth(self.predicate) > MAX_DEPTH:
            raise ValueError(f"predicate deeper than {MAX_DEPTH}")

    def referenced_traits(self) -> set[str]:
        return _traits_in(self.predicate)


def _depth(node: Node) -> int:
    if isinstance(node, Cmp):
        return 1
    if isinstance(node, Not):
        return 1 + _depth(node.child)
    return 1 + max((_depth(c) for c in node.children), default=0)


def _traits_in(node: Node) -> set[str]:
    if isinstance(node, Cmp):
        return {node.trait}
    if isinstance(node, Not):
        return _traits_in(node.child)
    out: set[str] = set()
    for child in node.children:
        out |= _traits_in(child)
    return out


def _compare(value: Any, op: str, constant: Any) -> bool:
    # A missing trait value satisfies nothing, including "!=".
    if value is None:
        return False
    if op == "=":
        return value == constant
    if op == "!=":
        return value != constant
    try:
        if op == "<":
            return value < constant
        if op == "<=":
            return value <= constant
        if op == ">":
            return value > constant
        return value >= constant
    except TypeError:
        return False


def _eval(node: Node, values: Mapping[str, Any]) -> bool:
    if isinstance(node, Cmp):
        return _compare(values[node.trait], node.op, node.value)
    if isinstance(node, And):
        return all(_eval(c, values) for c in node.children)
    if isinstance(node, Or):
        return any(_eval(c, values) for c in node.children)
    return not _eval(node.child, values)


def evaluate_cohort(
    log: EventLog,
    cohort: CohortDefinition,
    registry: TraitRegistry,
    as_of_ms: int,
) -> set[str]:
    """Subjects (anyone with at least one event in the log) whose traits
    at as_of satisfy the predicate."""
    names = cohort.referenced_traits()
    missing = names - set(registry)
    if missing:
        raise UnknownTrait(f"unregistered traits {sorted(missing)}")
    members = set()
    for subject in log.subjects():
        values = {
            name: compute_trait(log, subject, registry[name], as_of_ms).value
            for name in names
        }
        if _eval(cohort.predicate, values):
            members.add(subject)
    return members


# --- predicate JSON form (API wire format) ------------------------------------


def node_to_json(node: Node) -> dict:
    if isinstance(node, Cmp):
        return {"op": "cmp", "trait": node.trait, "cmp": node.op, "value": node.value}
    if isinstance(node, And):
        return {"op": "and", "children": [node_to_json(c) for c in node.children]}
    if isinstance(node, Or):
        return {"op": "or", "children": [node_to_json(c) for c in node.children]}
    return {"op": "not", "child": node_to_json(node.child)}


def node_from_json(data: Any) -> Node:
    if not isinstance(data, dict) or "op" not in data:
        raise ParseError("predicate node must be an object with an 'op'")
    op = data["op"]
    if op == "cmp":
        try:
            return Cmp(data["trait"], data["cmp"], data["value"])
        except (KeyError, ValueError) as exc:
            raise ParseError(str(exc)) from None
    if op in ("and", "or"):
        children = tuple(node_from_json(c) for c in data.get("children", []))
        return And(children) if op == "and" else Or(children)
    if op == "not":
        if "child" not in data:
            raise ParseError("'not' needs a child")
        return Not(node_from_json(data["child"]))
    raise ParseError(f"unknown predicate op {op!r}")


# --- metrics -------------------------------------------------------------------

AGGREGATIONS = ("mean", "sum", "count")


@dataclass(frozen=True)
class MetricDefinition:
    name: str
    trait: TraitDescriptor
    aggregation: str

    def __post_init__(self) -> None:
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.aggregation in ("mean", "sum") and self.trait.definition[0] == "static_attribute":
            raise ValueError("mean/sum need a numeric dynamic trait")


def query_metric(
    log: EventLog,
    metric: MetricDefinition,
    subjects: set[str],
    as_of_ms: int,
) -> float:
    values = [
        compute_trait(log, s, metric.trait, as_of_ms).value for s in sorted(subjects)
    ]
    usable = [v for v in values if v is not None]
    if metric.aggregation == "count":
        return float(len(usable))
    if metric.aggregation == "sum":
        return float(sum(usable))
    if not usable:
        raise EmptyGroup(f"mean of {metric.name!r} over empty group")
    return float(sum(usable)) / len(usable)
