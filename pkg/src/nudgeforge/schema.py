"""Shared event/trait/nudge data model.

Everything that crosses a process boundary in this system is built from
the types here: schema-validated events with a canonical line encoding,
nudge records with a monotone reaction lifecycle, and the PII guard that
keeps direct identifiers out of the log entirely.

All values are immutable; operations are pure functions, so the module
is safe under any concurrency.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping
from urllib.parse import quote, unquote

from .errors import (
    IllegalTransition,
    MissingKey,
    ParseError,
    PiiViolation,
    TypeMismatch,
    UnknownEvent,
    UnknownKey,
)

STREAMS = ("core", "ecommerce", "patient", "learning", "supply", "condition")
PAYLOAD_TYPES = ("string", "number", "boolean", "string_list")

SUBJECT_ID_RE = re.compile(r"^[A-Za-z0-9_-]{8,64}$")
TOKEN_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
PAYLOAD_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")

# Keys that may never appear in any payload, regardless of value.
PII_DENYLIST = frozenset(
    {"name", "email", "phone", "address", "dob", "national_id", "msisdn"}
)

# Seven or more digits optionally broken up by common phone separators.
# Deliberately strict: digit-dense values such as dates will be flagged too.
_PHONE_RE = re.compile(r"(?:\d[()\s.+-]*){6}\d")

# Largest float that still names an integer exactly.
_EXACT_INT_FLOAT = float(2**53)


def matches_email_pattern(value: str) -> bool:
    """True when value contains '@' with nonempty text on both sides."""
    idx = value.find("@")
    return 0 < idx < len(value) - 1


def matches_phone_pattern(value: str) -> bool:
    return _PHONE_RE.search(value) is not None


@dataclass(frozen=True)
class ScrubViolation:
    key: str
    reason: str


def scrub_check(payload: Mapping[str, Any]) -> list[ScrubViolation]:
    """Run the PII guard over a payload; an empty list means pass.

    Checks key names against the denylist and string values (including
    string-list items) against the email and phone patterns.
    """
    violations: list[ScrubViolation] = []
    for key in sorted(payload):
        if str(key).lower() in PII_DENYLIST:
            violations.append(ScrubViolation(str(key), "denylisted key"))
        value = payload[key]
        items = value if isinstance(value, list) else [value]
        for item in items:
            if not isinstance(item, str):
                continue
            if matches_email_pattern(item):
                violations.append(ScrubViolation(str(key), "email pattern"))
            if matches_phone_pattern(item):
                violations.append(ScrubViolation(str(key), "phone pattern"))
    return violations


# --- schema catalog ----------------------------------------------------------


@dataclass(frozen=True)
class EventSchema:
    stream: str
    event_name: str
    required: Mapping[str, str]
    optional: Mapping[str, str]

    def __post_init__(self) -> None:
        if self.stream not in STREAMS:
            raise ValueError(f"unknown stream {self.stream!r}")
        if not TOKEN_RE.match(self.event_name):
            raise ValueError(f"bad event name {self.event_name!r}")
        overlap = set(self.required) & set(self.optional)
        if overlap:
            raise ValueError(f"keys both required and optional: {sorted(overlap)}")
        for key, typ in {**self.required, **self.optional}.items():
            if not PAYLOAD_KEY_RE.match(key):
                raise ValueError(f"bad payload key {key!r}")
            if key in PII_DENYLIST:
                raise ValueError(f"denylisted payload key {key!r}")
            if typ not in PAYLOAD_TYPES:
                raise ValueError(f"unknown payload type {typ!r} for {key!r}")

    @property
    def declared(self) -> dict[str, str]:
        return {**self.required, **self.optional}


@dataclass(frozen=True)
class SchemaCatalog:
    entries: Mapping[tuple[str, str], EventSchema]

    def get(self, stream: str, event_name: str) -> EventSchema | None:
        return self.entries.get((stream, event_name))

    @staticmethod
    def from_schemas(schemas: list[EventSchema]) -> "SchemaCatalog":
        entries: dict[tuple[str, str], EventSchema] = {}
        for schema in schemas:
            key = (schema.stream, schema.event_name)
            if key in entries:
                raise ValueError(f"duplicate catalog entry {key}")
            entries[key] = schema
        return SchemaCatalog(entries)


def default_catalog() -> SchemaCatalog:
    """The fixed starter catalog every deployment begins from."""
    return SchemaCatalog.from_schemas(
        [
            EventSchema("core", "app_open", {}, {"region": "string"}),
            EventSchema(
                "core", "nudge_reaction",
                {"nudge_id": "string", "kind": "string"}, {},
            ),
            EventSchema(
                "ecommerce", "order_placed",
                {"sku": "string", "qty": "number"}, {"basket": "string"},
            ),
            EventSchema(
                "ecommerce", "item_viewed",
                {"sku": "string"}, {"tags": "string_list"},
            ),
            EventSchema(
                "ecommerce", "cart_add",
                {"sku": "string", "qty": "number"}, {},
            ),
            EventSchema(
                "patient", "visit_recorded",
                {"visit_type": "string"}, {"facility": "string"},
            ),
            EventSchema(
                "patient", "referral_made",
                {"facility": "string"}, {"urgent": "boolean"},
            ),
            EventSchema("learning", "module_started", {"module_id": "string"}, {}),
            EventSchema(
                "learning", "module_completed",
                {"module_id": "string", "score": "number"}, {},
            ),
        ]
    )


# --- events -------------------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    subject_id: str
    device_id: str
    stream: str
    event_name: str
    timestamp_ms: int
    sequence_no: int
    session_id: str
    payload: Mapping[str, Any] = field(default_factory=dict)


def _check_value(key: str, value: Any, typ: str) -> None:
    # bool is an int subclass in Python; test it first so booleans never
    # slip through as numbers.
    if typ == "boolean":
        if not isinstance(value, bool):
            raise TypeMismatch(f"key {key!r}: expected boolean")
        return
    if isinstance(value, bool):
        raise TypeMismatch(f"key {key!r}: expected {typ}, got boolean")
    if typ == "string":
        if not isinstance(value, str):
            raise TypeMismatch(f"key {key!r}: expected string")
    elif typ == "number":
        if not isinstance(value, (int, float)):
            raise TypeMismatch(f"key {key!r}: expected number")
        if isinstance(value, float) and not (value == value and abs(value) != float("inf")):
            raise TypeMismatch(f"key {key!r}: number must be finite")
    elif typ == "string_list":
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            raise TypeMismatch(f"key {key!r}: expected list of strings")
        if any(v == "" for v in value):
            raise TypeMismatch(f"key {key!r}: empty string in list")
    else:  # pragma: no cover - catalog construction rejects unknown types
        raise TypeMismatch(f"key {key!r}: unknown type {typ!r}")


_ENVELOPE_FIELDS = (
    "subject_id", "device_id", "stream", "event_name",
    "timestamp_ms", "sequence_no", "session_id", "payload",
)


def validate_event(raw: Mapping[str, Any], catalog: SchemaCatalog) -> EventRecord:
    """Validate a raw record against the catalog and return an EventRecord.

    The returned payload contains exactly the declared keys that were
    present; anything undeclared is rejected, not dropped.
    """
    for name in _ENVELOPE_FIELDS:
        if name == "payload":
            continue
        if name not in raw:
            raise MissingKey(f"envelope field {name!r} missing")
    extra = set(raw) - set(_ENVELOPE_FIELDS)
    if extra:
        raise UnknownKey(f"unexpected envelope fields {sorted(extra)}")

    subject_id = raw["subject_id"]
    if not isinstance(subject_id, str) or not SUBJECT_ID_RE.match(subject_id):
        raise TypeMismatch(f"bad subject_id {subject_id!r}")
    if matches_email_pattern(subject_id) or matches_phone_pattern(subject_id):
        raise PiiViolation(f"subject_id {subject_id!r} matches a PII pattern")

    for name in ("device_id", "session_id"):
        token = raw[name]
        if not isinstance(token, str) or not TOKEN_RE.match(token):
            raise TypeMismatch(f"bad {name} {token!r}")

    stream = raw["stream"]
    event_name = raw["event_name"]
    if stream not in STREAMS:
        raise UnknownEvent(f"unknown stream {stream!r}")
    schema = catalog.get(stream, event_name)
    if schema is None:
        raise UnknownEvent(f"no catalog entry for {stream}/{event_name}")

    timestamp_ms = raw["timestamp_ms"]
    if not isinstance(timestamp_ms, int) or isinstance(timestamp_ms, bool) or timestamp_ms <= 0:
        raise TypeMismatch(f"timestamp_ms must be a positive integer, got {timestamp_ms!r}")
    sequence_no = raw["sequence_no"]
    if not isinstance(sequence_no, int) or isinstance(sequence_no, bool) or sequence_no < 1:
        raise TypeMismatch(f"sequence_no must be >= 1, got {sequence_no!r}")

    payload = raw.get("payload") or {}
    if not isinstance(payload, Mapping):
        raise TypeMismatch("payload must be a mapping")
    declared = schema.declared
    for key in payload:
        if key not in declared:
            raise UnknownKey(f"payload key {key!r} not declared for {stream}/{event_name}")
    for key in schema.required:
        if key not in payload:
            raise MissingKey(f"required payload key {key!r} missing")
    for key, value in payload.items():
        _check_value(key, value, declared[key])

    violations = scrub_check(payload)
    if violations:
        detail = "; ".join(f"{v.key}: {v.reason}" for v in violations)
        raise PiiViolation(detail)

    return EventRecord(
        subject_id=subject_id,
        device_id=raw["device_id"],
        stream=stream,
        event_name=event_name,
        timestamp_ms=timestamp_ms,
        sequence_no=sequence_no,
        session_id=raw["session_id"],
        payload=dict(payload),
    )


# --- canonical line encoding --------------------------------------------------

WIRE_VERSION = "v1"


def _fmt_number(value: float | int) -> str:
    if isinstance(value, int):
        return str(value)
    # Integral floats collapse to the integer spelling so that payloads
    # that compare equal (2 == 2.0) encode identically.
    if value.is_integer() and abs(value) <= _EXACT_INT_FLOAT:
        return str(int(value))
    return repr(value)


def _encode_value(value: Any) -> str:
    if isinstance(value, bool):
        return "b:true" if value else "b:false"
    if isinstance(value, str):
        return "s:" + quote(value, safe="")
    if isinstance(value, (int, float)):
        return "n:" + _fmt_number(value)
    if isinstance(value, list):
        return "l:" + ",".join(quote(v, safe="") for v in value)
    raise TypeMismatch(f"unencodable payload value {value!r}")


def _decode_value(raw: str) -> Any:
    if raw.startswith("s:"):
        return unquote(raw[2:])
    if raw.startswith("n:"):
        body = raw[2:]
        try:
            return int(body) if re.match(r"^-?\d+$", body) else float(body)
        except ValueError:
            raise ParseError(f"bad number {body!r}") from None
    if raw == "b:true":
        return True
    if raw == "b:false":
        return False
    if raw.startswith("b:"):
        raise ParseError(f"bad boolean {raw!r}")
    if raw.startswith("l:"):
        body = raw[2:]
        return [unquote(part) for part in body.split(",")] if body else []
    raise ParseError(f"unknown value tag in {raw!r}")


def canonical_encode(event: EventRecord) -> bytes:
    """Encode a valid event as one UTF-8 line, newline-terminated.

    Payload keys are sorted, so two equal events always produce the
    same bytes. The encoding is injective over valid events: strings
    are percent-escaped and every value carries a type tag.
    """
    pairs = "&".join(
        f"{key}={_encode_value(event.payload[key])}" for key in sorted(event.payload)
    )
    line = "|".join(
        [
            WIRE_VERSION,
            event.stream,
            event.event_name,
            event.subject_id,
            event.device_id,
            event.session_id,
            str(event.sequence_no),
            str(event.timestamp_ms),
            pairs,
        ]
    )
    return (line + "\n").encode("utf-8")


def canonical_decode(line: bytes | str, catalog: SchemaCatalog) -> EventRecord:
    """Parse one canonical line and re-validate it against the catalog."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("line is not UTF-8") from None
    line = line.rstrip("\n")
    if "\n" in line:
        raise ParseError("multiple lines passed to canonical_decode")
    parts = line.split("|")
    if len(parts) != 9:
        raise ParseError(f"expected 9 fields, got {len(parts)}")
    if parts[0] != WIRE_VERSION:
        raise ParseError(f"unsupported version {parts[0]!r}")
    _, stream, event_name, subject_id, device_id, session_id, seq_raw, ts_raw, body = parts
    try:
        sequence_no = int(seq_raw)
        timestamp_ms = int(ts_raw)
    except ValueError:
        raise ParseError("sequence_no and timestamp_ms must be integers") from None
    payload: dict[str, Any] = {}
    if body:
        for pair in body.split("&"):
            key, sep, value = pair.partition("=")
            if not sep:
                raise ParseError(f"bad payload pair {pair!r}")
            if key in payload:
                raise ParseError(f"duplicate payload key {key!r}")
            payload[key] = _decode_value(value)
    return validate_event(
        {
            "subject_id": subject_id,
            "device_id": device_id,
            "stream": stream,
            "event_name": event_name,
            "timestamp_ms": timestamp_ms,
            "sequence_no": sequence_no,
            "session_id": session_id,
            "payload": payload,
        },
        catalog,
    )


# --- nudges -------------------------------------------------------------------

REACTIONS = ("pending", "delivered", "opened", "viewed", "discarded", "blocked")
TERMINAL_REACTIONS = frozenset({"opened", "viewed", "discarded", "blocked"})


@dataclass(frozen=True)
class NudgeRecord:
    nudge_id: str
    subject_id: str
    experiment_id: str
    arm_id: int
    content_ref: str
    sent_at_ms: int
    reaction: str = "pending"
    reaction_at_ms: int | None = None

    def __post_init__(self) -> None:
        if not TOKEN_RE.match(self.nudge_id):
            raise ValueError(f"bad nudge_id {self.nudge_id!r}")
        if not TOKEN_RE.match(self.experiment_id):
            raise ValueError(f"bad experiment_id {self.experiment_id!r}")
        if self.reaction not in REACTIONS:
            raise ValueError(f"unknown reaction {self.reaction!r}")
        if self.arm_id < 0:
            raise ValueError("arm_id must be >= 0")
        if (self.reaction_at_ms is None) != (self.reaction == "pending"):
            raise ValueError("reaction_at_ms present iff reaction != pending")

    def with_reaction(self, kind: str, at_ms: int) -> "NudgeRecord":
        """Advance the lifecycle; only forward transitions are legal."""
        if kind not in REACTIONS or kind == "pending":
            raise IllegalTransition(f"cannot transition to {kind!r}")
        if kind == "delivered":
            if self.reaction != "pending":
                raise IllegalTransition(f"{self.reaction} -> delivered")
        else:
            if self.reaction != "delivered":
                raise IllegalTransition(f"{self.reaction} -> {kind}")
        return replace(self, reaction=kind, reaction_at_ms=at_ms)


# --- item catalog -------------------------------------------------------------


@dataclass(frozen=True)
class CatalogItem:
    sku: str
    name: str
    category: str

    def __post_init__(self) -> None:
        if not TOKEN_RE.match(self.sku):
            raise ValueError(f"bad sku {self.sku!r}")


def item_index(items: list[CatalogItem]) -> dict[str, CatalogItem]:
    index: dict[str, CatalogItem] = {}
    for item in items:
        if item.sku in index:
            raise ValueError(f"duplicate sku {item.sku!r}")
        index[item.sku] = item
    return index


# --- traits -------------------------------------------------------------------


@dataclass(frozen=True)
class TraitValue:
    subject_id: str
    name: str
    kind: str
    value: Any
    as_of_ms: int
    window_days: int

    def __post_init__(self) -> None:
        if self.kind not in ("static", "dynamic"):
            raise ValueError(f"unknown trait kind {self.kind!r}")
        if self.kind == "dynamic" and self.window_days < 1:
            raise ValueError("dynamic traits need window_days >= 1")
        if self.kind == "static" and self.window_days != 0:
            raise ValueError("static traits have window_days = 0")
