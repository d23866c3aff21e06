"""Flat key=value text documents.

Used for server config, scenario files, and model serialization. The
format is deliberately dumb: one `key = value` per line, `#` comments,
blank lines ignored, no nesting and no quoting. Values are strings;
typed access goes through the converters below. Floats round-trip
exactly because we format with repr().
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError

_KEY_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def dump_kv(fields: Mapping[str, str], header: str | None = None) -> str:
    lines: list[str] = []
    if header:
        lines.append(f"# {header}")
    for key, value in fields.items():
        if not _KEY_RE.match(key):
            raise ParseError(f"bad key {key!r}")
        value = str(value)
        if "\n" in value:
            raise ParseError(f"value for {key!r} contains a newline")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_kv(text: str) -> dict[str, str]:
    """Parse a document into an ordered key -> value dict.

    Raises ParseError on lines that are not comments, blanks, or
    `key = value`, and on duplicate keys.
    """
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ParseError(f"line {lineno}: bad key {key!r}")
        if key in fields:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value
    return fields


def need(fields: Mapping[str, str], key: str) -> str:
    if key not in fields:
        raise ParseError(f"missing key {key!r}")
    return fields[key]


def as_int(fields: Mapping[str, str], key: str) -> int:
    raw = need(fields, key)
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"key {key!r}: {raw!r} is not an integer") from None


def as_float(fields: Mapping[str, str], key: str) -> float:
    raw = need(fields, key)
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"key {key!r}: {raw!r} is not a number") from None


def as_bool(fields: Mapping[str, str], key: str) -> bool:
    raw = need(fields, key).lower()
    if raw in ("true", "1", "yes"):
        return True
    if raw in ("false", "0", "no"):
        return False
    raise ParseError(f"key {key!r}: {raw!r} is not a boolean")


def fmt_vec(values: Iterable[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def parse_vec(raw: str) -> np.ndarray:
    raw = raw.strip()
    if not raw:
        return np.zeros(0)
    try:
        return np.array([float(part) for part in raw.split(",")], dtype=float)
    except ValueError:
        raise ParseError(f"bad vector {raw!r}") from None


def fmt_mat(matrix: np.ndarray) -> str:
    return ";".join(fmt_vec(row) for row in np.asarray(matrix, dtype=float))


def parse_mat(raw: str) -> np.ndarray:
    rows = [parse_vec(part) for part in raw.strip().split(";") if part != ""]
    if not rows:
        return np.zeros((0, 0))
    width = rows[0].size
    if any(r.size != width for r in rows):
        raise ParseError("ragged matrix")
    return np.vstack(rows)
