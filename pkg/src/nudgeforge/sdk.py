"""Device-side SDK semantics: durable offline buffering, monotone
sequencing, at-least-once batch upload, nudge receipt and reactions.

There is no real network here. The simulator (or a test harness) moves
Batch and Ack values between a DeviceBuffer and the platform; connectivity
is whatever the caller decides it is. One buffer has a single logical
owner; distinct buffers can run concurrently.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Mapping

from .errors import BufferFull, MalformedBatch, ParseError, UnknownNudge
from .schema import (
    EventRecord,
    NudgeRecord,
    SchemaCatalog,
    TOKEN_RE,
    canonical_decode,
    canonical_encode,
    validate_event,
)

DEFAULT_BUFFER_CAP = 100_000

_AUTO_SESSION = "nudge-auto"


@dataclass(frozen=True)
class Batch:
    """An upload unit: canonical lines from one device, seq strictly rising."""

    device_id: str
    batch_seq: int
    events: tuple[str, ...]  # canonical lines without trailing newline

    def to_wire(self) -> str:
        header = f"v1|batch|{self.device_id}|{self.batch_seq}|{len(self.events)}"
        return "\n".join([header, *self.events]) + "\n"


@dataclass(frozen=True)
class Ack:
    device_id: str
    watermark: int
    accepted: int
    duplicates: int

    def to_wire(self) -> str:
        return f"v1|ack|{self.device_id}|{self.watermark}|{self.accepted}|{self.duplicates}\n"


def parse_batch(text: str) -> Batch:
    """Structural parse of a batch body. Event lines are validated later
    by ingestion; this only checks the envelope."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedBatch("empty body")
    header = lines[0].split("|")
    if len(header) != 5 or header[0] != "v1" or header[1] != "batch":
        raise MalformedBatch(f"bad header {lines[0]!r}")
    device_id = header[2]
    if not TOKEN_RE.match(device_id):
        raise MalformedBatch(f"bad device_id {device_id!r}")
    try:
        batch_seq = int(header[3])
        count = int(header[4])
    except ValueError:
        raise MalformedBatch("batch_seq and event_count must be integers") from None
    if batch_seq < 1:
        raise MalformedBatch("batch_seq must be >= 1")
    body = lines[1:]
    if len(body) != count:
        raise MalformedBatch(f"header says {count} events, body has {len(body)}")
    return Batch(device_id=device_id, batch_seq=batch_seq, events=tuple(body))


def parse_ack(text: str) -> Ack:
    parts = text.strip().split("|")
    if len(parts) != 6 or parts[0] != "v1" or parts[1] != "ack":
        raise ParseError(f"bad ack {text!r}")
    try:
        return Ack(parts[2], int(parts[3]), int(parts[4]), int(parts[5]))
    except ValueError:
        raise ParseError(f"bad ack {text!r}") from None


class DeviceBuffer:
    """Offline event buffer for one device.

    Events get gap-free sequence numbers at log time and stay pending
    until an ack's watermark covers them, so draining twice re-sends
    (at-least-once). `snapshot`/`restore` give the durability contract:
    a crash between any two operations loses nothing that was
    snapshotted.
    """

    def __init__(
        self,
        device_id: str,
        catalog: SchemaCatalog,
        cap: int = DEFAULT_BUFFER_CAP,
    ) -> None:
        if not TOKEN_RE.match(device_id):
            raise ValueError(f"bad device_id {device_id!r}")
        if cap < 1:
            raise ValueError("cap must be >= 1")
        self.device_id = device_id
        self.catalog = catalog
        self.cap = cap
        self.pending: list[EventRecord] = []
        self._pending_lines: list[str] = []
        self.acked_watermark = 0
        self.pending_nudges: dict[str, NudgeRecord] = {}

    @property
    def next_seq(self) -> int:
        if self.pending:
            return self.pending[-1].sequence_no + 1
        return self.acked_watermark + 1

    def log_event(
        self,
        subject_id: str,
        stream: str,
        event_name: str,
        timestamp_ms: int,
        session_id: str,
        payload: Mapping[str, Any] | None = None,
    ) -> EventRecord:
        """Validate, assign the next sequence number, append to pending."""
        if len(self.pending) >= self.cap:
            raise BufferFull(f"device {self.device_id}: {self.cap} events pending")
        event = validate_event(
            {
                "subject_id": subject_id,
                "device_id": self.device_id,
                "stream": stream,
                "event_name": event_name,
                "timestamp_ms": timestamp_ms,
                "sequence_no": self.next_seq,
                "session_id": session_id,
                "payload": dict(payload or {}),
            },
            self.catalog,
        )
        self.pending.append(event)
        self._pending_lines.append(canonical_encode(event).decode().rstrip("\n"))
        return event

    def drain_batches(self, max_events_per_batch: int) -> list[Batch]:
        """Partition pending lines into upload batches. Pending is left
        untouched; only an ack removes events."""
        if max_events_per_batch < 1:
            raise ValueError("max_events_per_batch must be >= 1")
        batches = []
        for start in range(0, len(self.pending), max_events_per_batch):
            chunk = self._pending_lines[start : start + max_events_per_batch]
            batches.append(
                Batch(
                    device_id=self.device_id,
                    batch_seq=self.pending[start].sequence_no,
                    events=tuple(chunk),
                )
            )
        return batches

    def apply_ack(self, ack: Ack) -> None:
        """Drop pending events covered by the watermark. Idempotent;
        stale watermarks are no-ops."""
        if ack.device_id != self.device_id:
            raise ValueError(f"ack for {ack.device_id!r} applied to {self.device_id!r}")
        if ack.watermark > self.acked_watermark:
            self.acked_watermark = ack.watermark
        keep = [i for i, e in enumerate(self.pending) if e.sequence_no > ack.watermark]
        self.pending = [self.pending[i] for i in keep]
        self._pending_lines = [self._pending_lines[i] for i in keep]

    def receive_nudges(self, payloads: Iterable[NudgeRecord], at_ms: int) -> list[NudgeRecord]:
        """Accept polled nudges: dedup by nudge_id, mark delivered, and
        auto-log one core/nudge_reaction event per newly seen nudge.
        Returns the newly delivered records."""
        delivered = []
        for nudge in payloads:
            if nudge.reaction != "pending":
                raise ValueError(f"nudge {nudge.nudge_id} arrived with reaction {nudge.reaction}")
            if nudge.nudge_id in self.pending_nudges:
                continue
            record = nudge.with_reaction("delivered", at_ms)
            self.log_event(
                subject_id=record.subject_id,
                stream="core",
                event_name="nudge_reaction",
                timestamp_ms=at_ms,
                session_id=_AUTO_SESSION,
                payload={"nudge_id": record.nudge_id, "kind": "delivered"},
            )
            self.pending_nudges[record.nudge_id] = record
            delivered.append(record)
        return delivered

    def record_reaction(self, nudge_id: str, kind: str, at_ms: int) -> NudgeRecord:
        """User reacted to a delivered nudge; update it and auto-log."""
        nudge = self.pending_nudges.get(nudge_id)
        if nudge is None:
            raise UnknownNudge(nudge_id)
        updated = nudge.with_reaction(kind, at_ms)  # raises IllegalTransition
        self.log_event(
            subject_id=updated.subject_id,
            stream="core",
            event_name="nudge_reaction",
            timestamp_ms=at_ms,
            session_id=_AUTO_SESSION,
            payload={"nudge_id": nudge_id, "kind": kind},
        )
        self.pending_nudges[nudge_id] = updated
        return updated

    # --- durability ---------------------------------------------------------

    def snapshot(self) -> str:
        state = {
            "version": 1,
            "device_id": self.device_id,
            "cap": self.cap,
            "acked_watermark": self.acked_watermark,
            "pending": list(self._pending_lines),
            "nudges": [asdict(n) for n in self.pending_nudges.values()],
        }
        return json.dumps(state, sort_keys=True)

    @classmethod
    def restore(cls, snapshot: str, catalog: SchemaCatalog) -> "DeviceBuffer":
        try:
            state = json.loads(snapshot)
        except json.JSONDecodeError:
            raise ParseError("snapshot is not valid JSON") from None
        if state.get("version") != 1:
            raise ParseError(f"unsupported snapshot version {state.get('version')!r}")
        buffer = cls(state["device_id"], catalog, cap=state["cap"])
        buffer.acked_watermark = state["acked_watermark"]
        for line in state["pending"]:
            event = canonical_decode(line + "\n", catalog)
            buffer.pending.append(event)
            buffer._pending_lines.append(line)
        for fields in state["nudges"]:
            record = NudgeRecord(**fields)
            buffer.pending_nudges[record.nudge_id] = record
        return buffer
