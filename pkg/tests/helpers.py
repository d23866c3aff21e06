"""Shared test harnesses.

run_sync_scenario drives one device buffer and one server log through a
random interleaving of logs, partial uploads, lost batches, lost acks,
and crash-restores, then drains to quiescence and checks the
exactly-once contract. Used by both the unit property test and the
acceptance suite.
"""

from __future__ import annotations

import random

import numpy as np

from nudgeforge.eventlog import EventLog
from nudgeforge.schema import default_catalog
from nudgeforge.sdk import DeviceBuffer

CATALOG = default_catalog()


def oracle_whittle_gap(arm, state: int, subsidy: float) -> float:
    """Q_active - Q_passive via exact policy evaluation, independent of
    the production value iteration.

    For a 2-state, 2-action discounted MDP the optimal value function is
    the elementwise max of the exact values of the four stationary
    deterministic policies, each solved as a linear system.
    """
    pa = np.asarray(arm.p_active)
    pp = np.asarray(arm.p_passive)
    beta = arm.discount
    base_r = np.array([0.0, 1.0])
    values = []
    for action0 in (0, 1):  # 0 = active, 1 = passive
        for action1 in (0, 1):
            actions = (action0, action1)
            P = np.vstack([(pp if actions[s] else pa)[s] for s in (0, 1)])
            r = base_r + subsidy * np.array([float(a) for a in actions])
            values.append(np.linalg.solve(np.eye(2) - beta * P, r))
    v_star = np.max(values, axis=0)
    q_active = state + beta * float(pa[state] @ v_star)
    q_passive = state + subsidy + beta * float(pp[state] @ v_star)
    return q_active - q_passive


def oracle_whittle_index(arm, state: int, lo=-10.0, hi=10.0, tol=1e-10) -> float:
    gap_lo = oracle_whittle_gap(arm, state, lo)
    gap_hi = oracle_whittle_gap(arm, state, hi)
    assert gap_lo >= 0.0 >= gap_hi, "oracle bracket failed"
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if oracle_whittle_gap(arm, state, mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def enumerate_pairings(ids):
    """All perfect matchings of ids, in canonical (lexicographic) order.

    Canonical form: each pair (a, b) with a < b, pair list ordered by
    first element. Recursing on the smallest remaining id yields exactly
    that order.
    """
    ids = sorted(ids)
    if not ids:
        yield []
        return
    first, rest = ids[0], ids[1:]
    for i, other in enumerate(rest):
        for tail in enumerate_pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, other)] + tail


def oracle_best_pairing(covariates):
    """Minimum-distance perfect matching by brute force.

    Standardizes per dimension (dropping zero-variance dims), scores the
    total within-pair Euclidean distance of every pairing, and returns
    the first minimum in canonical order, i.e. the lexicographically
    smallest argmin.
    """
    ids = sorted(covariates)
    X = np.array([covariates[i] for i in ids], dtype=float)
    mu, sd = X.mean(axis=0), X.std(axis=0)
    keep = sd > 0
    Z = (X[:, keep] - mu[keep]) / sd[keep] if keep.any() else np.zeros((len(ids), 1))
    pos = {c: k for k, c in enumerate(ids)}

    best, best_total = None, float("inf")
    for pairing in enumerate_pairings(ids):
        total = sum(
            float(np.linalg.norm(Z[pos[a]] - Z[pos[b]])) for a, b in pairing
        )
        if total < best_total:
            best, best_total = pairing, total
    return best, best_total


def build_log(specs) -> EventLog:
    """Assemble an in-memory EventLog from event dicts.

    Each spec needs subject/ts/stream/event/payload; device defaults to
    one per subject. Sequence numbers are assigned per device in spec
    order.
    """
    log = EventLog(CATALOG)
    buffers: dict[str, DeviceBuffer] = {}
    for spec in specs:
        device = spec.get("device", "dev-" + spec["subject"])
        buffer = buffers.setdefault(device, DeviceBuffer(device, CATALOG))
        buffer.log_event(
            subject_id=spec["subject"],
            stream=spec["stream"],
            event_name=spec["event"],
            timestamp_ms=spec["ts"],
            session_id=spec.get("session", "s1"),
            payload=spec.get("payload", {}),
        )
    for buffer in buffers.values():
        for batch in buffer.drain_batches(500):
            buffer.apply_ack(log.ingest_batch(batch))
    return log


def order(subject: str, ts: int, sku: str, qty=1, **kw) -> dict:
    return {
        "subject": subject, "ts": ts, "stream": "ecommerce",
        "event": "order_placed", "payload": {"sku": sku, "qty": qty}, **kw,
    }


def run_sync_scenario(rng: random.Random, n_ops: int = 50) -> None:
    server = EventLog(CATALOG)
    buffer = DeviceBuffer("dev-sync", CATALOG, cap=10_000)
    # Write-ahead discipline: the app persists the buffer after every
    # completed operation, so a crash rolls back to the last snapshot
    # and never forgets an event it claimed to log.
    snapshot = buffer.snapshot()
    expected: list[str] = []
    ts = 1_000
    n_logged = 0

    def persist() -> None:
        nonlocal snapshot
        snapshot = buffer.snapshot()

    def log_one() -> None:
        nonlocal ts, n_logged
        ts += rng.randint(1, 5_000)
        n_logged += 1
        event = buffer.log_event(
            subject_id="pharm-sync-01",
            stream="ecommerce",
            event_name="order_placed",
            timestamp_ms=ts,
            session_id="s1",
            payload={"sku": f"S{n_logged % 37}", "qty": n_logged},
        )
        from nudgeforge.schema import canonical_encode

        expected.append(canonical_encode(event).decode().rstrip("\n"))
        persist()

    def sync_round() -> None:
        batches = buffer.drain_batches(rng.randint(1, 4))
        for batch in batches:
            if rng.random() < 0.3:
                continue  # batch lost in flight
            ack = server.ingest_batch(batch)
            if rng.random() < 0.3:
                continue  # ack lost; client will re-send
            buffer.apply_ack(ack)
            persist()

    def crash() -> None:
        nonlocal buffer
        buffer = DeviceBuffer.restore(snapshot, CATALOG)

    ops = [log_one] * 5 + [sync_round] * 3 + [crash]
    for _ in range(n_ops):
        rng.choice(ops)()

    # Drain to quiescence with a reliable network.
    guard = 0
    while buffer.pending:
        for batch in buffer.drain_batches(rng.randint(1, 8)):
            buffer.apply_ack(server.ingest_batch(batch))
        guard += 1
        assert guard < 100, "sync did not converge"

    got = sorted(server.lines(), key=lambda line: int(line.split("|")[6]))
    assert got == expected, "server log diverged from logged events"
    assert server.watermark("dev-sync") == len(expected)
    assert buffer.acked_watermark == len(expected)


# --- joint restless-bandit oracle -------------------------------------------


def _joint_states(n: int) -> list[tuple[int, ...]]:
    import itertools

    return list(itertools.product((0, 1), repeat=n))


def _joint_kernel(arms, active: frozenset) -> np.ndarray:
    """Row-stochastic matrix over joint states when `active` arms act."""
    states = _joint_states(len(arms))
    P = np.empty((len(states), len(states)))
    for i, state in enumerate(states):
        for j, nxt in enumerate(states):
            p = 1.0
            for a, arm in enumerate(arms):
                matrix = arm.p_active if a in active else arm.p_passive
                p *= matrix[state[a]][nxt[a]]
            P[i, j] = p
    return P


def oracle_restless_optimum(arms, k: int, tol: float = 1e-10) -> np.ndarray:
    """Exact optimal value per joint state under a hard budget of k
    active arms per step (value iteration over all k-subsets)."""
    import itertools

    states = _joint_states(len(arms))
    rewards = np.array([float(sum(s)) for s in states])
    beta = arms[0].discount
    kernels = [
        _joint_kernel(arms, frozenset(subset))
        for subset in itertools.combinations(range(len(arms)), min(k, len(arms)))
    ]
    v = np.zeros(len(states))
    while True:
        v_next = rewards + beta * np.max([P @ v for P in kernels], axis=0)
        if float(np.max(np.abs(v_next - v))) <= tol:
            return v_next
        v = v_next


def whittle_policy_value(arms, k: int, index_table) -> np.ndarray:
    """Exact value per joint state of always acting on the k arms with
    the highest precomputed Whittle indices (index_table[arm][state])."""
    from nudgeforge.bandits import allocate_topk

    states = _joint_states(len(arms))
    rewards = np.array([float(sum(s)) for s in states])
    beta = arms[0].discount
    P = np.empty((len(states), len(states)))
    for i, state in enumerate(states):
        chosen = allocate_topk(
            {a: index_table[a][state[a]] for a in range(len(arms))}, k
        )
        row_kernel = _joint_kernel(arms, frozenset(chosen))
        P[i] = row_kernel[i]
    return np.linalg.solve(np.eye(len(states)) - beta * P, rewards)
