"""Binary event space, failure signatures and the one-hot label space.

Feature layout of an event vector of length ``e_max``::

    [0, e_rel)                      related events
    [e_rel, e_rel + e_time)         timing-relation bits
    [e_rel + e_time, e_max)         one-off events

The label space has ``f_max + 1`` classes; the last one is the invalid
class that every non-catalogued bit pattern maps to.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CATALOG_FORMAT_VERSION = 1

# duplicate redraws allowed per requested signature
CATALOG_RETRY_FACTOR = 100


class InfeasibleCatalogError(ValueError):
    """Raised when no catalog satisfying the requested bounds can be drawn."""


@dataclass(frozen=True)
class EventSchema:
    e_rel: int
    e_time: int = 0
    e_one: int = 0

    def __post_init__(self):
        for name in ("e_rel", "e_time", "e_one"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
        if self.e_max < 1:
            raise ValueError("schema must contain at least one feature")

    @property
    def e_max(self) -> int:
        return self.e_rel + self.e_time + self.e_one

    @property
    def timing_slice(self) -> slice:
        return slice(self.e_rel, self.e_rel + self.e_time)

    @property
    def one_off_slice(self) -> slice:
        return slice(self.e_rel + self.e_time, self.e_max)

    def is_timing_index(self, index: int) -> bool:
        return self.e_rel <= index < self.e_rel + self.e_time

    @classmethod
    def flat(cls, e_max: int) -> "EventSchema":
        """Schema with every feature treated as a related event."""
        return cls(e_rel=e_max)


def as_event_vector(bits, e_max: int | None = None) -> np.ndarray:
    """Validate a 0/1 sequence and return it as a read-only uint8 array."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"event vector must be 1-D, got shape {arr.shape}")
    if e_max is not None and arr.shape[0] != e_max:
        raise ValueError(f"event vector has length {arr.shape[0]}, expected {e_max}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("event vector elements must be 0 or 1")
    out = arr.astype(np.uint8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FailureSignature:
    failure_id: int
    signature: np.ndarray
    ordered_events: tuple[int, ...] | None = None
    timing_bit: int | None = None

    def __post_init__(self):
        sig = as_event_vector(self.signature)
        object.__setattr__(self, "signature", sig)
        if self.failure_id < 1:
            raise ValueError("failure ids are 1-based")
        if int(sig.sum()) < 1:
            raise ValueError(f"signature of F_{self.failure_id} has no events set")
        if self.ordered_events is not None:
            chain = tuple(int(i) for i in self.ordered_events)
            object.__setattr__(self, "ordered_events", chain)
            for idx in chain:
                if not 0 <= idx < sig.shape[0] or sig[idx] != 1:
                    raise ValueError(
                        f"ordered event {idx} of F_{self.failure_id} is not set in its signature"
                    )
        if self.timing_bit is not None:
            if self.ordered_events is None:
                raise ValueError("timing_bit requires ordered_events")
            if not 0 <= self.timing_bit < sig.shape[0]:
                raise ValueError(f"timing_bit {self.timing_bit} out of range")

    @property
    def popcount(self) -> int:
        return int(self.signature.sum())

    def __eq__(self, other):
        if not isinstance(other, FailureSignature):
            return NotImplemented
        return (
            self.failure_id == other.failure_id
            and np.array_equal(self.signature, other.signature)
            and self.ordered_events == other.ordered_events
            and self.timing_bit == other.timing_bit
        )

    def __hash__(self):
        return hash((self.failure_id, self.signature.tobytes(), self.ordered_events, self.timing_bit))


@dataclass(frozen=True, eq=False)
class FailureCatalog:
    """The event-to-failure map: one distinct signature per valid failure."""

    schema: EventSchema
    failures: tuple[FailureSignature, ...]
    alpha_low: float | None = None
    alpha_high: float | None = None
    seed: int | None = None
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        failures = tuple(self.failures)
        object.__setattr__(self, "failures", failures)
        if not failures:
            raise ValueError("catalog needs at least one failure")
        e_max = self.schema.e_max
        if len(failures) >= 2**e_max:
            raise ValueError(f"f_max={len(failures)} leaves no invalid pattern for e_max={e_max}")
        lookup = {}
        for pos, f in enumerate(failures, start=1):
            if f.failure_id != pos:
                raise ValueError(f"failure ids must run 1..f_max in order, got {f.failure_id} at {pos}")
            if f.signature.shape[0] != e_max:
                raise ValueError(f"F_{pos} signature length {f.signature.shape[0]} != e_max {e_max}")
            key = f.signature.tobytes()
            if key in lookup:
                raise ValueError(f"F_{pos} duplicates the signature of F_{lookup[key]}")
            lookup[key] = pos
        object.__setattr__(self, "_lookup", lookup)

    @property
    def f_max(self) -> int:
        return len(self.failures)

    @property
    def n_classes(self) -> int:
        return self.f_max + 1

    @property
    def invalid_index(self) -> int:
        return self.f_max

    @property
    def matrix(self) -> np.ndarray:
        """Signatures stacked as an ``(f_max, e_max)`` 0/1 matrix."""
        return np.stack([f.signature for f in self.failures])

    def failure_for(self, v) -> int | None:
        """1-based id of the failure whose signature equals ``v``, else None."""
        vec = as_event_vector(v, self.schema.e_max)
        return self._lookup.get(vec.tobytes())

    def __eq__(self, other):
        if not isinstance(other, FailureCatalog):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.failures == other.failures
            and self.alpha_low == other.alpha_low
            and self.alpha_high == other.alpha_high
            and self.seed == other.seed
        )

    __hash__ = None

    @classmethod
    def from_matrix(cls, rows, schema: EventSchema | None = None, ordered_events=None,
                    timing_bits=None, **meta) -> "FailureCatalog":
        rows = np.asarray(rows)
        if rows.ndim != 2:
            raise ValueError("catalog matrix must be 2-D")
        schema = schema or EventSchema.flat(rows.shape[1])
        ordered_events = ordered_events or [None] * len(rows)
        timing_bits = timing_bits or [None] * len(rows)
        failures = tuple(
            FailureSignature(i + 1, row, chain, tbit)
            for i, (row, chain, tbit) in enumerate(zip(rows, ordered_events, timing_bits))
        )
        return cls(schema, failures, **meta)


def popcount_bounds(e_max: int, alpha_low: float, alpha_high: float) -> tuple[int, int]:
    """Integer popcount window ``[ceil(a_lo*e), floor(a_hi*e)]``."""
    if not 0 < alpha_low < alpha_high <= 1:
        raise InfeasibleCatalogError(
            f"need 0 < alpha_low < alpha_high <= 1, got {alpha_low}, {alpha_high}"
        )
    # round before ceil/floor so 0.5*50 does not turn into 25.000000000000004
    lo = math.ceil(round(alpha_low * e_max, 9))
    hi = math.floor(round(alpha_high * e_max, 9))
    lo = max(lo, 1)
    if lo > hi:
        raise InfeasibleCatalogError(
            f"alpha window [{alpha_low}, {alpha_high}] admits no popcount for e_max={e_max}"
        )
    return lo, hi


def random_catalog(schema: EventSchema, f_max: int, alpha_low: float, alpha_high: float,
                   seed: int) -> FailureCatalog:
    """Draw ``f_max`` distinct random signatures with bounded popcount.

    The popcount of each signature is drawn uniformly from the admissible
    window, then that many positions are set uniformly at random. Duplicates
    are redrawn; after ``100 * f_max`` redraws the request is declared
    infeasible.
    """
    if f_max < 1:
        raise ValueError("f_max must be >= 1")
    e_max = schema.e_max
    lo, hi = popcount_bounds(e_max, alpha_low, alpha_high)
    n_admissible = sum(math.comb(e_max, k) for k in range(lo, hi + 1))
    if n_admissible < f_max:
        raise InfeasibleCatalogError(
            f"only {n_admissible} patterns with popcount in [{lo}, {hi}] exist, need {f_max}"
        )
    if f_max >= 2**e_max:
        raise InfeasibleCatalogError(f"f_max={f_max} leaves no invalid pattern for e_max={e_max}")

    rng = np.random.default_rng(seed)
    seen: set[bytes] = set()
    rows = []
    budget = CATALOG_RETRY_FACTOR * f_max
    while len(rows) < f_max:
        k = int(rng.integers(lo, hi + 1))
        row = np.zeros(e_max, dtype=np.uint8)
        row[rng.choice(e_max, size=k, replace=False)] = 1
        key = row.tobytes()
        if key in seen:
            budget -= 1
            if budget < 0:
                raise InfeasibleCatalogError(
                    f"could not draw {f_max} distinct signatures within the retry budget"
                )
            continue
        seen.add(key)
        rows.append(row)
    return FailureCatalog.from_matrix(
        np.stack(rows), schema=schema, alpha_low=alpha_low, alpha_high=alpha_high, seed=seed
    )


def label_for(catalog: FailureCatalog, failure_id: int) -> np.ndarray:
    if not 1 <= failure_id <= catalog.f_max:
        raise ValueError(f"failure id {failure_id} outside 1..{catalog.f_max}")
    label = np.zeros(catalog.n_classes, dtype=np.uint8)
    label[failure_id - 1] = 1
    return label


def invalid_label(catalog: FailureCatalog) -> np.ndarray:
    label = np.zeros(catalog.n_classes, dtype=np.uint8)
    label[catalog.invalid_index] = 1
    return label


def is_valid_signature(catalog: FailureCatalog, v) -> bool:
    return catalog.failure_for(v) is not None


# -- catalog file -----------------------------------------------------------

def catalog_to_dict(catalog: FailureCatalog) -> dict:
    doc = {
        "format": "failpredict.catalog",
        "version": CATALOG_FORMAT_VERSION,
        "e_rel": catalog.schema.e_rel,
        "e_time": catalog.schema.e_time,
        "e_one": catalog.schema.e_one,
        "f_max": catalog.f_max,
        "alpha_low": catalog.alpha_low,
        "alpha_high": catalog.alpha_high,
        "seed": catalog.seed,
        "rows": [f.signature.tolist() for f in catalog.failures],
    }
    if any(f.ordered_events is not None for f in catalog.failures):
        doc["ordered_events"] = [
            list(f.ordered_events) if f.ordered_events is not None else None
            for f in catalog.failures
        ]
        doc["timing_bits"] = [f.timing_bit for f in catalog.failures]
    return doc


def catalog_from_dict(doc: dict) -> FailureCatalog:
    if doc.get("version", CATALOG_FORMAT_VERSION) != CATALOG_FORMAT_VERSION:
        raise ValueError(f"unsupported catalog version {doc.get('version')}")
    schema = EventSchema(doc["e_rel"], doc.get("e_time", 0), doc.get("e_one", 0))
    rows = doc["rows"]
    if "f_max" in doc and doc["f_max"] != len(rows):
        raise ValueError(f"f_max={doc['f_max']} but {len(rows)} rows given")
    return FailureCatalog.from_matrix(
        np.asarray(rows, dtype=np.uint8).reshape(len(rows), schema.e_max),
        schema=schema,
        ordered_events=doc.get("ordered_events"),
        timing_bits=doc.get("timing_bits"),
        alpha_low=doc.get("alpha_low"),
        alpha_high=doc.get("alpha_high"),
        seed=doc.get("seed"),
    )


def save_catalog(catalog: FailureCatalog, path) -> None:
    Path(path).write_text(json.dumps(catalog_to_dict(catalog), indent=1) + "\n")


def load_catalog(path) -> FailureCatalog:
    return catalog_from_dict(json.loads(Path(path).read_text()))


def popcount_histogram(catalog: FailureCatalog) -> dict[int, int]:
    counts: dict[int, int] = {}
    for f in catalog.failures:
        counts[f.popcount] = counts.get(f.popcount, 0) + 1
    return dict(sorted(counts.items()))

