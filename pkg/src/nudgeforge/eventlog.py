"""Append-only event log with idempotent batch ingestion.

Storage is segment files of canonical event lines plus in-memory indices
(per-device sequence sets and watermarks, per-subject time-sorted event
lists). The files are the source of truth: `EventLog.replay` rebuilds
every index exactly. With no data_dir the log runs memory-only, which is
what unit tests and throwaway simulations use.

A single lock serializes ingestion and gives readers whole-batch
visibility: a reader never observes a partially applied batch.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MalformedBatch, ValidationError
from .schema import EventRecord, SchemaCatalog, canonical_decode
from .sdk import Ack, Batch

SEGMENT_MAX_LINES = 50_000


@dataclass
class DeviceIndex:
    seqs: set[int] = field(default_factory=set)
    watermark: int = 0

    def add(self, seq: int) -> None:
        self.seqs.add(seq)
        while self.watermark + 1 in self.seqs:
            self.watermark += 1


class EventLog:
    def __init__(
        self,
        catalog: SchemaCatalog,
        data_dir: Path | str | None = None,
        segment_max_lines: int = SEGMENT_MAX_LINES,
    ) -> None:
        self.catalog = catalog
        self.segment_max_lines = segment_max_lines
        self._lock = threading.RLock()
        self._events: list[EventRecord] = []
        self._by_key: dict[tuple[str, int], str] = {}  # (device, seq) -> line
        self.devices: dict[str, DeviceIndex] = {}
        self._subj_idx: dict[str, list[int]] = {}
        self._subj_ts: dict[str, list[int]] = {}
        self._seg_index = 0
        self._seg_count = 0
        self._segments_dir: Path | None = None
        if data_dir is not None:
            self._segments_dir = Path(data_dir) / "segments"
            self._segments_dir.mkdir(parents=True, exist_ok=True)

    # --- ingestion ------------------------------------------------------------

    def ingest_batch(self, batch: Batch) -> Ack:
        """Persist the batch's novel events; everything-or-nothing.

        Dedup is by (device_id, sequence_no): a line already persisted
        byte-identically counts as a duplicate, a different line under
        the same key rejects the whole batch.
        """
        with self._lock:
            accepted: list[tuple[str, EventRecord]] = []
            seen_seqs: set[int] = set()
            last_seq = 0
            duplicates = 0
            for line in batch.events:
                event = canonical_decode(line + "\n", self.catalog)
                if event.device_id != batch.device_id:
                    raise ValidationError(
                        f"event device {event.device_id!r} != batch device {batch.device_id!r}"
                    )
                if event.sequence_no <= last_seq or event.sequence_no in seen_seqs:
                    raise MalformedBatch("sequence_no not strictly increasing within batch")
                last_seq = event.sequence_no
                seen_seqs.add(event.sequence_no)
                key = (batch.device_id, event.sequence_no)
                existing = self._by_key.get(key)
                if existing is not None:
                    if existing != line:
                        raise ValidationError(
                            f"sequence collision with different content at {key}"
                        )
                    duplicates += 1
                else:
                    accepted.append((line, event))

            self._write_lines([line for line, _ in accepted])
            for line, event in accepted:
                self._admit(line, event)
            index = self.devices.setdefault(batch.device_id, DeviceIndex())
            return Ack(
                device_id=batch.device_id,
                watermark=index.watermark,
                accepted=len(accepted),
                duplicates=duplicates,
            )

    def _admit(self, line: str, event: EventRecord) -> None:
        self._events.append(event)
        pos = len(self._events) - 1
        self._by_key[(event.device_id, event.sequence_no)] = line
        self.devices.setdefault(event.device_id, DeviceIndex()).add(event.sequence_no)
        ts_list = self._subj_ts.setdefault(event.subject_id, [])
        idx_list = self._subj_idx.setdefault(event.subject_id, [])
        at = bisect.bisect_right(ts_list, event.timestamp_ms)
        ts_list.insert(at, event.timestamp_ms)
        idx_list.insert(at, pos)

    def _write_lines(self, lines: list[str]) -> None:
        if self._segments_dir is None or not lines:
            return
        written: list[tuple[Path, int]] = []  # (path, size before write) for rollback
        try:
            cursor = 0
            while cursor < len(lines):
                room = self.segment_max_lines - self._seg_count
                if room == 0:
                    self._seg_index += 1
                    self._seg_count = 0
                    room = self.segment_max_lines
                chunk = lines[cursor : cursor + room]
                path = self._segment_path(self._seg_index)
                size = path.stat().st_size if path.exists() else 0
                with path.open("a", encoding="utf-8") as fh:
                    fh.write("".join(line + "\n" for line in chunk))
                written.append((path, size))
                self._seg_count += len(chunk)
                cursor += len(chunk)
        except OSError:
            for path, size in written:
                try:
                    with path.open("r+b") as fh:
                        fh.truncate(size)
                except OSError:
                    pass
            raise

    def _segment_path(self, index: int) -> Path:
        assert self._segments_dir is not None
        return self._segments_dir / f"seg-{index:06d}.log"

    @classmethod
    def replay(
        cls,
        data_dir: Path | str,
        catalog: SchemaCatalog,
        segment_max_lines: int = SEGMENT_MAX_LINES,
    ) -> "EventLog":
        """Rebuild the log and all indices from segment files."""
        log = cls(catalog, data_dir=None, segment_max_lines=segment_max_lines)
        segments_dir = Path(data_dir) / "segments"
        paths = sorted(segments_dir.glob("seg-*.log")) if segments_dir.exists() else []
        for path in paths:
            count = 0
            with path.open("r", encoding="utf-8") as fh:
                for raw in fh:
                    line = raw.rstrip("\n")
                    event = canonical_decode(line + "\n", catalog)
                    key = (event.device_id, event.sequence_no)
                    if key in log._by_key:
                        raise ValidationError(f"duplicate {key} in segment files")
                    log._admit(line, event)
                    count += 1
            log._seg_index = int(path.stem.split("-")[1])
            log._seg_count = count
        log._segments_dir = segments_dir
        segments_dir.mkdir(parents=True, exist_ok=True)
        return log

    # --- reads ----------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._events)

    def subjects(self) -> list[str]:
        with self._lock:
            return sorted(self._subj_idx)

    def subjects_as_of(self, as_of_ms: int) -> list[str]:
        """Subjects with at least one event at or before as_of."""
        with self._lock:
            return sorted(
                subject
                for subject, ts in self._subj_ts.items()
                if ts and ts[0] <= as_of_ms
            )

    def events_for(
        self,
        subject_id: str,
        since_ms: int | None = None,
        until_ms: int | None = None,
        stream: str | None = None,
        event_name: str | None = None,
    ) -> list[EventRecord]:
        """Subject events in the half-open window (since_ms, until_ms],
        time-sorted. Bounds default to everything."""
        with self._lock:
            ts = self._subj_ts.get(subject_id)
            if not ts:
                return []
            idx = self._subj_idx[subject_id]
            lo = 0 if since_ms is None else bisect.bisect_right(ts, since_ms)
            hi = len(ts) if until_ms is None else bisect.bisect_right(ts, until_ms)
            out = [self._events[idx[i]] for i in range(lo, hi)]
        if stream is not None:
            out = [e for e in out if e.stream == stream]
        if event_name is not None:
            out = [e for e in out if e.event_name == event_name]
        return out

    def iter_events(self) -> Iterator[EventRecord]:
        with self._lock:
            snapshot = list(self._events)
        return iter(snapshot)

    def lines(self) -> Iterable[str]:
        """All persisted canonical lines in arrival order (for tests)."""
        with self._lock:
            return [
                self._by_key[(e.device_id, e.sequence_no)] for e in self._events
            ]

    def watermark(self, device_id: str) -> int:
        with self._lock:
            index = self.devices.get(device_id)
            return index.watermark if index else 0
