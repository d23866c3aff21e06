"""Basket co-occurrence model with lift-ranked pair recommendations.

This is the classical stand-in for learned item recommendation: count
within-basket pairs, rank candidate partners of a subject's regular
items by lift, and suggest what they are not ordering yet.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Mapping

from ..errors import ParseError
from ..kvtext import as_int, dump_kv, load_kv
from ..schema import EventRecord

DAY_MS = 86_400_000


@dataclass(frozen=True)
class CooccurrenceModel:
    pair_counts: Mapping[tuple[str, str], int]  # keys normalized a < b
    item_counts: Mapping[str, int]
    basket_total: int

    def lift(self, a: str, b: str) -> float:
        key = (a, b) if a < b else (b, a)
        pair = self.pair_counts.get(key, 0)
        if pair == 0:
            return 0.0
        return pair * self.basket_total / (self.item_counts[a] * self.item_counts[b])

    def to_kv(self) -> str:
        pairs = ",".join(
            f"{a}:{b}:{count}" for (a, b), count in sorted(self.pair_counts.items())
        )
        items = ",".join(f"{sku}:{count}" for sku, count in sorted(self.item_counts.items()))
        return dump_kv(
            {
                "kind": "cooccurrence",
                "version": "1",
                "basket_total": str(self.basket_total),
                "item_counts": items,
                "pair_counts": pairs,
            },
            header="basket co-occurrence counts",
        )

    @classmethod
    def from_kv(cls, text: str) -> "CooccurrenceModel":
        fields = load_kv(text)
        if fields.get("kind") != "cooccurrence":
            raise ParseError(f"not a cooccurrence model: kind={fields.get('kind')!r}")
        item_counts: dict[str, int] = {}
        raw_items = fields.get("item_counts", "")
        if raw_items:
            for part in raw_items.split(","):
                sku, _, count = part.rpartition(":")
                item_counts[sku] = int(count)
        pair_counts: dict[tuple[str, str], int] = {}
        raw_pairs = fields.get("pair_counts", "")
        if raw_pairs:
            for part in raw_pairs.split(","):
                try:
                    a, b, count = part.split(":")
                except ValueError:
                    raise ParseError(f"bad pair entry {part!r}") from None
                pair_counts[(a, b)] = int(count)
        return cls(pair_counts, item_counts, as_int(fields, "basket_total"))


def cooccurrence_fit(baskets: Iterable[set[str]]) -> CooccurrenceModel:
    pair_counts: dict[tuple[str, str], int] = {}
    item_counts: dict[str, int] = {}
    total = 0
    for basket in baskets:
        total += 1
        skus = sorted(basket)
        for sku in skus:
            item_counts[sku] = item_counts.get(sku, 0) + 1
        for i, a in enumerate(skus):
            for b in skus[i + 1 :]:
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + 1
    return CooccurrenceModel(pair_counts, item_counts, total)


def pair_recommend(
    model: CooccurrenceModel, regular_items: set[str], k: int
) -> list[str]:
    """Top-k co-purchase partners of the regular items, best lift first.

    Candidates are items that ever co-occurred with a regular item,
    minus the regular items themselves. Each candidate is scored by its
    best (lift, pair_count) over regular partners; ties break by sku.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, tuple[float, int]] = {}
    for (a, b), count in model.pair_counts.items():
        for regular, candidate in ((a, b), (b, a)):
            if regular in regular_items and candidate not in regular_items:
                lift = model.lift(regular, candidate)
                entry = (lift, count)
                if candidate not in scores or entry > scores[candidate]:
                    scores[candidate] = entry
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))
    return [sku for sku, _ in ranked[:k]]


def _iso_week(ts_ms: int) -> tuple[int, int]:
    stamp = datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc)
    year, week, _ = stamp.isocalendar()
    return year, week


def regular_skus(
    orders: Iterable[tuple[int, str]],
    as_of_ms: int,
    total_weeks: int = 8,
    min_weeks: int = 4,
) -> set[str]:
    """SKUs ordered in at least min_weeks of the trailing total_weeks
    ISO weeks (the week containing as_of plus the ones before it)."""
    window = [_iso_week(as_of_ms - i * 7 * DAY_MS) for i in range(total_weeks)]
    window_set = set(window)
    weeks_by_sku: dict[str, set[tuple[int, int]]] = {}
    for ts_ms, sku in orders:
        if ts_ms > as_of_ms:
            continue
        week = _iso_week(ts_ms)
        if week in window_set:
            weeks_by_sku.setdefault(sku, set()).add(week)
    return {sku for sku, weeks in weeks_by_sku.items() if len(weeks) >= min_weeks}


def extract_baskets(events: Iterable[EventRecord]) -> list[set[str]]:
    """Group order_placed events into baskets.

    Events carrying a "basket" token group by (subject, token); the
    rest fall back to one basket per (subject, calendar day).
    """
    groups: dict[tuple[str, str], set[str]] = {}
    for event in events:
        if event.stream != "ecommerce" or event.event_name != "order_placed":
            continue
        token = event.payload.get("basket")
        if token is None:
            token = f"day-{event.timestamp_ms // DAY_MS}"
        groups.setdefault((event.subject_id, token), set()).add(event.payload["sku"])
    return [groups[key] for key in sorted(groups)]
