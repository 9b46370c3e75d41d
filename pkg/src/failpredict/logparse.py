"""Private-side front end: log lines to events to a binary input vector.

Times are handled as float milliseconds since the epoch. A log line is
``<timestamp><separator><message>``; the timestamp format is declared up
front (``"iso"`` or ``"epoch_ms"``), never sniffed.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .schema import FailureCatalog

# time of an event that was not observed
UNOBSERVED = -1.0


class LogFormatError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(f"line {line_no}: {message}" if line_no is not None else message)
        self.line_no = line_no


@dataclass(frozen=True)
class EventPattern:
    pattern: str
    event_index: int
    one_off: bool = False
    regex: bool = False

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("event pattern must be non-empty")
        if self.event_index < 0:
            raise ValueError(f"event index must be >= 0, got {self.event_index}")
        if self.regex:
            object.__setattr__(self, "_compiled", re.compile(self.pattern))

    def matches(self, text: str) -> bool:
        if self.regex:
            # anchored at the start of the message
            return self._compiled.match(text) is not None
        return self.pattern in text


class TextEventMap:
    """Ordered pattern table; the first matching entry wins."""

    def __init__(self, entries: Iterable[EventPattern]):
        self.entries = tuple(entries)
        seen = set()
        for e in self.entries:
            if e.event_index in seen:
                raise ValueError(f"event index {e.event_index} is mapped twice")
            seen.add(e.event_index)

    def match(self, text: str) -> EventPattern | None:
        for entry in self.entries:
            if entry.matches(text):
                return entry
        return None

    def check_schema(self, catalog: FailureCatalog) -> None:
        schema = catalog.schema
        for e in self.entries:
            if e.event_index >= schema.e_max or schema.is_timing_index(e.event_index):
                raise ValueError(f"event index {e.event_index} is not an event slot of the schema")

    @classmethod
    def from_list(cls, items: list[dict]) -> "TextEventMap":
        return cls(
            EventPattern(d["pattern"], int(d["event_index"]), bool(d.get("one_off", False)),
                         bool(d.get("regex", False)))
            for d in items
        )

    @classmethod
    def load(cls, path) -> "TextEventMap":
        doc = json.loads(Path(path).read_text())
        return cls.from_list(doc["entries"] if isinstance(doc, dict) else doc)


@dataclass(frozen=True)
class LogRecord:
    timestamp: float
    text: str
    line_no: int | None = None


@dataclass(frozen=True)
class EventTuple:
    event_index: int
    time: float


@dataclass(frozen=True)
class WindowConfig:
    window_span: float
    step: float

    def __post_init__(self):
        if self.window_span <= 0 or self.step <= 0:
            raise ValueError("window_span and step must be positive")
        if self.step > self.window_span:
            raise ValueError("step must not exceed window_span")


def parse_timestamp(raw: str, time_format: str) -> float:
    if time_format == "epoch_ms":
        return float(int(raw))
    if time_format == "iso":
        ts = datetime.fromisoformat(raw)
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        return ts.timestamp() * 1000.0
    raise ValueError(f"unknown time format {time_format!r}")


def read_log(lines: Iterable[str], time_format: str, separator: str | None = None) -> list[LogRecord]:
    """Split lines into records; blank lines and ``#`` comments are skipped."""
    records = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(separator, 1)
        if len(parts) != 2 or not parts[1].strip():
            raise LogFormatError("expected '<timestamp><separator><message>'", line_no)
        try:
            ts = parse_timestamp(parts[0].strip(), time_format)
        except ValueError as exc:
            raise LogFormatError(f"unparseable timestamp {parts[0].strip()!r} ({exc})", line_no) from None
        records.append(LogRecord(ts, parts[1].strip(), line_no))
    return records


def load_log(path, time_format: str, separator: str | None = None) -> list[LogRecord]:
    with open(path) as fh:
        return read_log(fh, time_format, separator)


def _check_ordered(records: list[LogRecord]) -> None:
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp < prev.timestamp:
            raise LogFormatError("log records are not in time order", cur.line_no)


def _dedup(matches: Iterable[tuple[int, float]]) -> list[EventTuple]:
    earliest: dict[int, float] = {}
    for idx, t in matches:
        if idx not in earliest or t < earliest[idx]:
            earliest[idx] = t
    return sorted((EventTuple(i, t) for i, t in earliest.items()), key=lambda e: (e.time, e.event_index))


def iter_windows(records: list[LogRecord], event_map: TextEventMap,
                 window: WindowConfig) -> Iterator[tuple[float, list[EventTuple]]]:
    """Yield ``(window_start, tuples)`` for each window on the step grid.

    Windows start at the first record's time and advance by ``step``; each
    covers ``[start, start + window_span)`` and keeps the earliest time of
    every event seen in it.
    """
    _check_ordered(records)
    if not records:
        return
    matched = []
    for rec in records:
        entry = event_map.match(rec.text)
        if entry is not None:
            matched.append((entry.event_index, rec.timestamp))
    times = np.array([t for _, t in matched])
    t0, t_last = records[0].timestamp, records[-1].timestamp
    k = 0
    while True:
        start = t0 + k * window.step
        if start > t_last:
            break
        lo = np.searchsorted(times, start, side="left")
        hi = np.searchsorted(times, start + window.window_span, side="left")
        yield start, _dedup(matched[lo:hi])
        k += 1


def parse_stream(records: list[LogRecord], event_map: TextEventMap,
                 window: WindowConfig) -> list[EventTuple]:
    """Events in the active window, in time order.

    The active window is the earliest grid window that still contains the
    newest record, i.e. the one holding the most history up to "now".
    """
    _check_ordered(records)
    if not records:
        return []
    t0, t_last = records[0].timestamp, records[-1].timestamp
    # smallest k with t0 + k*step + span > t_last
    k = max(0, int(np.floor((t_last - window.window_span - t0) / window.step)) + 1)
    while k > 0 and t0 + (k - 1) * window.step + window.window_span > t_last:
        k -= 1
    start = t0 + k * window.step
    matched = []
    for rec in records:
        if start <= rec.timestamp < start + window.window_span:
            entry = event_map.match(rec.text)
            if entry is not None:
                matched.append((entry.event_index, rec.timestamp))
    return _dedup(matched)


def assemble_input(tuples: Iterable[EventTuple], catalog: FailureCatalog) -> np.ndarray:
    """Binary input vector: observed events plus derived timing-relation bits."""
    schema = catalog.schema
    times = np.full(schema.e_max, UNOBSERVED)
    bits = np.zeros(schema.e_max, dtype=np.uint8)
    for tup in tuples:
        idx = tup.event_index
        if not 0 <= idx < schema.e_max or schema.is_timing_index(idx):
            raise ValueError(f"event index {idx} is not an event slot of the schema")
        bits[idx] = 1
        if times[idx] == UNOBSERVED or tup.time < times[idx]:
            times[idx] = tup.time
    times[schema.one_off_slice] = UNOBSERVED
    for failure in catalog.failures:
        if failure.timing_bit is None:
            continue
        chain = times[list(failure.ordered_events)]
        satisfied = bool((bits[list(failure.ordered_events)] == 1).all()) and bool(
            np.all(np.diff(chain) > 0)
        )
        if satisfied:
            bits[failure.timing_bit] = 1
    return bits
