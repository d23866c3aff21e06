"""Backend facade: ingestion, traits, cohorts, experiments, monitoring.

Owns the event log, the trait registry, one ExperimentRuntime per
experiment, and the per-device nudge poll queues. All state lives under
one data_dir (event segments + experiments.json) so a process restart
reconstructs everything.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable

from .errors import InsufficientData, UnknownExperiment, UnknownTrait, ValidationError
from .eventlog import EventLog
from .experiments import (
    Adaptive,
    ExperimentDef,
    MicroRandomized,
    experiment_to_json,
)
from .experiments.monitor import DailyEstimate, estimate_daily_diff
from .orchestrator import (
    ContentProvider,
    ExperimentRuntime,
    InterventionPlan,
    RewardSpec,
    TickReport,
    day_ms,
)
from .schema import NudgeRecord, SchemaCatalog, default_catalog
from .sdk import Ack, parse_batch
from .traits import TraitRegistry, TraitValue, compute_trait, default_traits

EXPOSURE_WINDOW_DAYS = 7  # monitor grouping for micro/adaptive designs


class Platform:
    def __init__(
        self,
        catalog: SchemaCatalog | None = None,
        registry: TraitRegistry | None = None,
        data_dir: str | Path | None = None,
    ) -> None:
        self.catalog = catalog or default_catalog()
        self.registry = registry or default_traits()
        self.data_dir = Path(data_dir) if data_dir is not None else None
        events_dir = self.data_dir / "events" if self.data_dir else None
        if events_dir is not None:
            events_dir.mkdir(parents=True, exist_ok=True)
        self.log = EventLog(self.catalog, data_dir=events_dir)
        self.runtimes: dict[str, ExperimentRuntime] = {}
        self.queues: dict[str, list[NudgeRecord]] = {}
        self._lock = threading.RLock()

    @classmethod
    def open(
        cls,
        data_dir: str | Path,
        catalog: SchemaCatalog | None = None,
        registry: TraitRegistry | None = None,
        content_providers: dict[str, ContentProvider] | None = None,
    ) -> "Platform":
        """Rebuild a platform from its data_dir (replay + state file)."""
        platform = cls.__new__(cls)
        platform.catalog = catalog or default_catalog()
        platform.registry = registry or default_traits()
        platform.data_dir = Path(data_dir)
        events_dir = platform.data_dir / "events"
        events_dir.mkdir(parents=True, exist_ok=True)
        platform.log = EventLog.replay(events_dir, platform.catalog)
        platform.runtimes = {}
        platform.queues = {}
        platform._lock = threading.RLock()
        state_path = platform.data_dir / "experiments.json"
        if state_path.exists():
            state = json.loads(state_path.read_text())
            providers = content_providers or {}
            for exp_id, blob in state.get("experiments", {}).items():
                platform.runtimes[exp_id] = ExperimentRuntime.from_json(
                    blob, platform.registry, providers.get(exp_id)
                )
            for device, nudges in state.get("queues", {}).items():
                platform.queues[device] = [NudgeRecord(**n) for n in nudges]
        return platform

    def save(self) -> None:
        if self.data_dir is None:
            return
        with self._lock:
            state = {
                "experiments": {
                    exp_id: rt.to_json() for exp_id, rt in sorted(self.runtimes.items())
                },
                "queues": {
                    device: [asdict(n) for n in nudges]
                    for device, nudges in sorted(self.queues.items())
                },
            }
        path = self.data_dir / "experiments.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(state, sort_keys=True, indent=1))
        tmp.replace(path)

    # --- ingestion and reads ----------------------------------------------

    def ingest_wire(self, text: str) -> Ack:
        batch = parse_batch(text)
        return self.log.ingest_batch(batch)

    def traits_of(self, subject_id: str, as_of_ms: int) -> dict[str, TraitValue]:
        return {
            name: compute_trait(self.log, subject_id, desc, as_of_ms)
            for name, desc in sorted(self.registry.items())
        }

    def cohort_members(self, cohort, as_of_ms: int) -> list[str]:
        from .traits import evaluate_cohort

        return sorted(evaluate_cohort(self.log, cohort, self.registry, as_of_ms))

    # --- experiments ---------------------------------------------------------

    def create_experiment(
        self,
        experiment: ExperimentDef,
        reward_spec: RewardSpec | None = None,
        frequency_cap: int = 1,
        context_traits: Iterable[str] = (),
        content_provider: ContentProvider | None = None,
    ) -> ExperimentRuntime:
        with self._lock:
            if experiment.experiment_id in self.runtimes:
                raise ValidationError(
                    f"experiment {experiment.experiment_id!r} already exists"
                )
            # Fail at creation, not at the draft->running edge, when the
            # cohort references traits nobody registered.
            missing = experiment.cohort.referenced_traits() - set(self.registry)
            if missing:
                raise UnknownTrait(f"unregistered traits {sorted(missing)}")
            if reward_spec is None:
                # score the experiment's own metric as a before/after delta
                # over one cadence window unless the plan says otherwise
                reward_spec = RewardSpec(
                    metric=experiment.metric,
                    window_days=experiment.cadence_days,
                    mode="delta",
                )
            plan = InterventionPlan(
                experiment=experiment,
                reward_spec=reward_spec,
                frequency_cap=frequency_cap,
                context_traits=tuple(context_traits),
            )
            runtime = ExperimentRuntime(plan, self.registry, content_provider)
            self.runtimes[experiment.experiment_id] = runtime
        self.save()
        return runtime

    def runtime(self, experiment_id: str) -> ExperimentRuntime:
        try:
            return self.runtimes[experiment_id]
        except KeyError:
            raise UnknownExperiment(f"no experiment {experiment_id!r}") from None

    def control_experiment(self, experiment_id: str, action: str) -> str:
        with self._lock:
            status = self.runtime(experiment_id).control(action, self.log)
        self.save()
        return status

    def list_experiments(self) -> list[dict]:
        with self._lock:
            return [
                experiment_to_json(rt.experiment)
                for _, rt in sorted(self.runtimes.items())
            ]

    def experiment_json(self, experiment_id: str) -> dict:
        return experiment_to_json(self.runtime(experiment_id).experiment)

    def tick_reports(self, experiment_id: str) -> list[dict]:
        return [r.to_json() for r in self.runtime(experiment_id).reports]

    # --- the daily loop -------------------------------------------------------

    def _tick_scheduled(self, runtime: ExperimentRuntime, day: int) -> bool:
        exp = runtime.experiment
        if not exp.start_day <= day <= exp.end_day:
            return False
        if isinstance(exp.design, MicroRandomized):
            return day in exp.design.decision_points
        return (day - exp.start_day) % exp.cadence_days == 0

    def run_day(self, day: int) -> list[TickReport]:
        """Attribute closed reward windows, then tick every scheduled
        experiment and queue its nudges for device polling."""
        reports = []
        with self._lock:
            for exp_id in sorted(self.runtimes):
                runtime = self.runtimes[exp_id]
                if runtime.experiment.status not in ("running", "paused"):
                    continue
                if runtime.experiment.status == "running":
                    runtime.attribute_rewards(self.log, day)
                if self._tick_scheduled(runtime, day):
                    reports.append(runtime.tick(self.log, day))
                    for device, record in runtime.take_outbox():
                        self.queues.setdefault(device, []).append(record)
        self.save()
        return reports

    def poll_nudges(self, device_id: str) -> list[NudgeRecord]:
        with self._lock:
            nudges = self.queues.pop(device_id, [])
        if nudges:
            self.save()
        return nudges

    # --- monitoring ------------------------------------------------------------

    def _groups_for_day(
        self, runtime: ExperimentRuntime, day: int
    ) -> tuple[list[str], list[str]]:
        """Comparison groups for one day. Fixed and cluster designs use
        the assignment table; micro and adaptive designs compare
        recently-exposed subjects against the unexposed cohort."""
        exp = runtime.experiment
        if isinstance(exp.design, (Adaptive, MicroRandomized)):
            treated = set()
            for subject, days in runtime.sent_days.items():
                if any(0 <= day - d < EXPOSURE_WINDOW_DAYS for d in days):
                    treated.add(subject)
            cohort = set(self.cohort_members(exp.cohort, day_ms(day + 1)))
            return sorted(treated), sorted(cohort - treated)
        table = runtime.assignment
        if table is None:
            return [], []
        return (
            table.subjects_in(exp.arms[0].arm_id),
            table.subjects_in(exp.arms[1].arm_id),
        )

    def _interactions_on(self, runtime: ExperimentRuntime, day: int) -> int:
        nudge_ids = set(runtime.nudges)
        if not nudge_ids:
            return 0
        subjects = {n.subject_id for n in runtime.nudges.values()}
        hit = 0
        for subject in sorted(subjects):
            events = self.log.events_for(
                subject,
                since_ms=day_ms(day),
                until_ms=day_ms(day + 1),
                stream="core",
                event_name="nudge_reaction",
            )
            for event in events:
                if (
                    event.payload.get("nudge_id") in nudge_ids
                    and event.payload.get("kind") != "delivered"
                ):
                    hit += 1
                    break
        return hit

    def monitor(
        self, experiment_id: str, from_day: int, to_day: int
    ) -> list[DailyEstimate]:
        """Daily treatment-control estimates over [from_day, to_day].

        Days where either group has no usable metric values are omitted.
        """
        runtime = self.runtime(experiment_id)
        metric_trait = runtime.plan.reward_spec.metric.trait
        estimates = []
        for day in range(from_day, to_day + 1):
            treated, control = self._groups_for_day(runtime, day)
            as_of = day_ms(day + 1)
            t_values = self._trait_values(treated, metric_trait, as_of)
            c_values = self._trait_values(control, metric_trait, as_of)
            if not t_values or not c_values:
                continue
            try:
                est = estimate_daily_diff(
                    t_values,
                    c_values,
                    day=day,
                    interactions=self._interactions_on(runtime, day),
                )
            except InsufficientData:
                continue
            estimates.append(est)
        return estimates

    def _trait_values(self, subjects, trait, as_of: int) -> list[float]:
        values = []
        for subject in subjects:
            value = compute_trait(self.log, subject, trait, as_of).value
            if value is not None:
                values.append(float(value))
        return values
