"""Randomized assignment: fixed A/B, cluster inheritance, pairwise matching,
and micro-randomized schedules.

Every function here is a deterministic pure function of (inputs, seed).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np

from ..errors import OddClusterCount, ParseError

TREATMENT = "treatment"
CONTROL = "control"

# exact matching is brute force over perfect pairings; cost is (n-1)!!
# so cap it and fall back to greedy nearest-neighbour above
EXACT_MATCH_LIMIT = 10


@dataclass(frozen=True)
class AssignmentTable:
    by_subject: dict[str, str]
    by_cluster: dict[str, str] | None = None
    pairs: tuple[tuple[str, str], ...] = ()

    def arm_of(self, subject_id: str) -> str | None:
        return self.by_subject.get(subject_id)

    def subjects_in(self, arm_id: str) -> list[str]:
        return sorted(s for s, a in self.by_subject.items() if a == arm_id)

    def with_subjects(self, subject_clusters: Mapping[str, str]) -> "AssignmentTable":
        """Project cluster arms down to the subjects of each cluster."""
        if self.by_cluster is None:
            raise ValueError("no cluster arms on this table")
        by_subject = {
            s: self.by_cluster[c] for s, c in subject_clusters.items()
        }
        return AssignmentTable(by_subject, dict(self.by_cluster), self.pairs)

    def to_json(self) -> dict:
        return {
            "by_subject": dict(sorted(self.by_subject.items())),
            "by_cluster": (
                dict(sorted(self.by_cluster.items()))
                if self.by_cluster is not None
                else None
            ),
            "pairs": [list(p) for p in self.pairs],
        }

    @classmethod
    def from_json(cls, data: Any) -> "AssignmentTable":
        try:
            return cls(
                by_subject=dict(data["by_subject"]),
                by_cluster=(
                    dict(data["by_cluster"]) if data.get("by_cluster") is not None else None
                ),
                pairs=tuple((p[0], p[1]) for p in data.get("pairs", [])),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"bad assignment table: {exc}") from None


def assign_fixed(
    subjects: Iterable[str],
    ratio: float,
    seed: int,
    treatment: str = TREATMENT,
    control: str = CONTROL,
) -> AssignmentTable:
    """Seeded permutation of the sorted ids; the first floor(ratio*n + 0.5)
    (round half up) go to treatment."""
    ids = sorted(subjects)
    if not ids:
        raise ValueError("no subjects to assign")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_treat = math.floor(ratio * len(ids) + 0.5)
    by_subject = {}
    for rank, idx in enumerate(order):
        by_subject[ids[idx]] = treatment if rank < n_treat else control
    return AssignmentTable(by_subject=by_subject)


def assign_cluster(
    subject_clusters: Mapping[str, str],
    ratio: float,
    seed: int,
    treatment: str = TREATMENT,
    control: str = CONTROL,
) -> AssignmentTable:
    """Randomize at the cluster level; subjects inherit their cluster's arm."""
    clusters = assign_fixed(
        set(subject_clusters.values()), ratio, seed, treatment, control
    )
    by_subject = {
        s: clusters.by_subject[c] for s, c in subject_clusters.items()
    }
    return AssignmentTable(by_subject, by_cluster=dict(clusters.by_subject))


def _standardized(ids: list[str], covariates: Mapping[str, Any]) -> np.ndarray:
    X = np.array([covariates[i] for i in ids], dtype=float)
    if X.ndim != 2:
        raise ValueError("covariate vectors must share one length")
    mu, sd = X.mean(axis=0), X.std(axis=0)
    keep = sd > 0.0
    if not keep.any():
        # all clusters identical: every pairing has distance zero
        return np.zeros((len(ids), 1))
    return (X[:, keep] - mu[keep]) / sd[keep]


def _exact_pairs(ids: list[str], Z: np.ndarray) -> list[tuple[str, str]]:
    # enumerate pairings in canonical order and keep strictly better
    # totals only, so ties resolve to the lexicographically smallest
    dist = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2))
    best: list[tuple[int, int]] | None = None
    best_total = math.inf

    def recurse(remaining: list[int], acc: list[tuple[int, int]], total: float) -> None:
        nonlocal best, best_total
        if not remaining:
            if total < best_total:
                best, best_total = list(acc), total
            return
        first, rest = remaining[0], remaining[1:]
        for k, other in enumerate(rest):
            acc.append((first, other))
            recurse(rest[:k] + rest[k + 1 :], acc, total + dist[first, other])
            acc.pop()

    recurse(list(range(len(ids))), [], 0.0)
    assert best is not None
    return [(ids[a], ids[b]) for a, b in best]


def _greedy_pairs(ids: list[str], Z: np.ndarray) -> list[tuple[str, str]]:
    dist = np.sqrt(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2))
    unpaired = set(range(len(ids)))
    pairs = []
    for i in range(len(ids)):
        if i not in unpaired:
            continue
        unpaired.discard(i)
        j = min(unpaired, key=lambda k: (dist[i, k], k))
        unpaired.discard(j)
        pairs.append((ids[i], ids[j]))
    return pairs


def pairwise_match(
    cluster_covariates: Mapping[str, Any],
    seed: int,
    treatment: str = TREATMENT,
    control: str = CONTROL,
) -> tuple[list[tuple[str, str]], AssignmentTable]:
    """Pair clusters by covariate similarity, then split each pair by a
    seeded fair coin.

    Covariates are standardized per dimension (zero-variance dimensions
    dropped). Pairing minimizes total within-pair Euclidean distance:
    exact search up to EXACT_MATCH_LIMIT clusters, greedy
    nearest-neighbour in ascending id above that.
    """
    ids = sorted(cluster_covariates)
    if not ids or len(ids) % 2:
        raise OddClusterCount(f"need an even number of clusters, got {len(ids)}")
    Z = _standardized(ids, cluster_covariates)
    if len(ids) <= EXACT_MATCH_LIMIT:
        pairs = _exact_pairs(ids, Z)
    else:
        pairs = _greedy_pairs(ids, Z)

    rng = np.random.default_rng(seed)
    by_cluster: dict[str, str] = {}
    for a, b in pairs:
        if rng.integers(0, 2) == 0:
            by_cluster[a], by_cluster[b] = treatment, control
        else:
            by_cluster[a], by_cluster[b] = control, treatment
    table = AssignmentTable(by_subject={}, by_cluster=by_cluster, pairs=tuple(pairs))
    return pairs, table


def micro_cell_rng(seed: int, subject_id: str, day: int) -> np.random.Generator:
    digest = hashlib.sha256(subject_id.encode("utf-8")).digest()
    h = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & (2**63 - 1), int(day), h])
    )


def schedule_micro(
    subjects: Iterable[str],
    decision_points: Iterable[int],
    prob: float,
    seed: int,
) -> dict[tuple[str, int], str]:
    """Independent seeded Bernoulli(prob) per (subject, day).

    Each cell draws from its own stream derived from (seed, day,
    subject), so a subject's draw never depends on who else is
    scheduled. Precomputed grids and day-by-day orchestration therefore
    agree cell for cell.
    """
    if not 0.0 < prob <= 1.0:
        raise ValueError("prob must be in (0, 1]")
    plan: dict[tuple[str, int], str] = {}
    for subject in sorted(subjects):
        for day in sorted(decision_points):
            treat = micro_cell_rng(seed, subject, day).random() < prob
            plan[(subject, day)] = "treat" if treat else "withhold"
    return plan
