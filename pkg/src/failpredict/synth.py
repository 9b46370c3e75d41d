"""Artificial, anonymous training data.

Half of the rows repeat the catalogued failure signatures; the other half
are "near by" invalid patterns produced by a single round of GA selection,
crossover and mutation. Bits are then mapped to random positive values and
min-max normalized per row.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_bits
from .schema import FailureCatalog

DATASET_FORMAT_VERSION = 1

# GA attempts allowed per requested invalid row
GA_RETRY_BUDGET = 1000


class RetryBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MappingTable:
    """Value ranges that 0-bits and 1-bits are drawn from."""

    zero_range: tuple[float, float]
    one_ranges: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        zl, zh = (float(v) for v in self.zero_range)
        object.__setattr__(self, "zero_range", (zl, zh))
        ones = np.array(self.one_ranges, dtype=np.float64)
        if ones.ndim != 2 or ones.shape[1] != 2:
            raise ValueError("one_ranges must be a sequence of (low, high) pairs")
        ones.setflags(write=False)
        object.__setattr__(self, "one_ranges", ones)
        if not 0 < zl < zh:
            raise ValueError(f"zero range must satisfy 0 < low < high, got {self.zero_range}")
        lo, hi = ones[:, 0], ones[:, 1]
        if not (lo > 0).all() or not (lo < hi).all():
            bad = int(np.flatnonzero(~((lo > 0) & (lo < hi)))[0])
            raise ValueError(f"one range {bad} must satisfy 0 < low < high, got {tuple(ones[bad])}")
        overlap = (lo <= zh) & (hi >= zl)
        if overlap.any():
            bad = int(np.flatnonzero(overlap)[0])
            raise ValueError(f"one range {bad} {tuple(ones[bad])} overlaps zero range {self.zero_range}")
        if not np.isfinite(ones).all():
            raise ValueError("one ranges must be finite")

    @property
    def e_max(self) -> int:
        return self.one_ranges.shape[0]

    @classmethod
    def linear(cls, e_max: int, zero_range=(1.5, 2.5), base: float = 5.0,
               spacing: float = 10.0, width: float = 5.0) -> "MappingTable":
        """Disjoint ranges ``[base + spacing*i, base + spacing*i + width]``."""
        start = base + spacing * np.arange(e_max, dtype=np.float64)
        return cls(zero_range, np.column_stack([start, start + width]), name="linear")

    @classmethod
    def exponential(cls, e_max: int, zero_range=(1.5, 2.5)) -> "MappingTable":
        """Ranges 5-10, 100-110, 1000-1100, ... growing tenfold per index.

        Only usable for small ``e_max``; values overflow float64 past ~300.
        """
        if e_max > 300:
            raise ValueError("exponential mapping overflows for e_max > 300")
        ranges = [(5.0, 10.0)] + [(10.0 ** (i + 1), 11.0 * 10.0 ** i) for i in range(1, e_max)]
        return cls(zero_range, np.array(ranges[:e_max]), name="exponential")

    @classmethod
    def preset(cls, name: str, e_max: int) -> "MappingTable":
        if name == "linear":
            return cls.linear(e_max)
        if name == "exponential":
            return cls.exponential(e_max)
        raise ValueError(f"unknown mapping preset {name!r}")

    def bounds(self, bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if bits.shape[-1] != self.e_max:
            raise ValueError(f"mapping table covers {self.e_max} features, got {bits.shape[-1]}")
        on = bits.astype(bool)
        low = np.where(on, self.one_ranges[:, 0], self.zero_range[0])
        high = np.where(on, self.one_ranges[:, 1], self.zero_range[1])
        return low, high

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "zero_range": list(self.zero_range),
            "one_ranges": self.one_ranges.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MappingTable":
        return cls(tuple(doc["zero_range"]), np.asarray(doc["one_ranges"]), doc.get("name", "custom"))

    def __eq__(self, other):
        if not isinstance(other, MappingTable):
            return NotImplemented
        return self.zero_range == other.zero_range and np.array_equal(self.one_ranges, other.one_ranges)

    __hash__ = None


def _onehot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(indices), n_classes), dtype=np.uint8)
    out[np.arange(len(indices)), indices] = 1
    return out


def replicate_valid(catalog: FailureCatalog, total: int) -> tuple[np.ndarray, np.ndarray]:
    """Repeat every signature ``total // f_max`` times.

    The remainder goes to the lowest failure ids, so exactly ``total`` rows
    come back. Returns ``(bits, one_hot_labels)``.
    """
    f_max = catalog.f_max
    if total < f_max:
        raise ValueError(f"total={total} is smaller than f_max={f_max}")
    per, extra = divmod(total, f_max)
    counts = np.full(f_max, per)
    counts[:extra] += 1
    ids = np.repeat(np.arange(f_max), counts)
    return catalog.matrix[ids].copy(), _onehot(ids, catalog.n_classes)


def crossover(a, b) -> np.ndarray:
    """First ``ceil(e_max/2)`` bits of ``a`` followed by the rest of ``b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"crossover needs equal-length vectors, got {a.shape} and {b.shape}")
    cut = (a.shape[0] + 1) // 2
    return np.concatenate([a[:cut], b[cut:]]).astype(np.uint8)


def mutation_count(e_max: int, rng) -> int:
    # Binomial(e_max, 1/e_max) clamped to at least one flip
    return max(1, int(rng.binomial(e_max, 1.0 / e_max)))


def mutate(v, rng=None, positions=None) -> np.ndarray:
    """Toggle ``positions`` (0-based), or a random set of them drawn from ``rng``."""
    out = np.array(v, dtype=np.uint8)
    if positions is None:
        k = mutation_count(out.shape[0], rng)
        positions = rng.choice(out.shape[0], size=k, replace=False)
    positions = np.atleast_1d(np.asarray(positions, dtype=np.int64))
    if positions.size == 0:
        raise ValueError("mutation must toggle at least one bit")
    out[positions] ^= 1
    return out


def ga_step(catalog: FailureCatalog, rng, parents=None, flip=None) -> np.ndarray:
    """One selection, crossover, mutation pass; the result may still be valid.

    ``parents`` (1-based failure ids) and ``flip`` (0-based positions) pin the
    random choices, which is how the worked example is reproduced.
    """
    if parents is None:
        i, j = rng.integers(0, catalog.f_max, size=2)
    else:
        i, j = (p - 1 for p in parents)
    child = crossover(catalog.failures[i].signature, catalog.failures[j].signature)
    return mutate(child, rng, positions=flip)


def ga_generate_invalid(catalog: FailureCatalog, count: int, rng,
                        max_attempts: int = GA_RETRY_BUDGET) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` bit vectors that are not catalogued failures.

    Each row is retried until the GA step yields a non-signature; a row
    that needs more than ``max_attempts`` tries raises RetryBudgetExceeded.
    Returns ``(bits, one_hot_labels)`` with every label set to the invalid class.
    """
    rows = np.empty((count, catalog.schema.e_max), dtype=np.uint8)
    for r in range(count):
        for _ in range(max_attempts):
            cand = ga_step(catalog, rng)
            if catalog.failure_for(cand) is None:
                rows[r] = cand
                break
        else:
            raise RetryBudgetExceeded(
                f"no invalid pattern found for row {r} after {max_attempts} GA attempts"
            )
    labels = _onehot(np.full(count, catalog.invalid_index), catalog.n_classes)
    return rows, labels


def map_features(bits, table: MappingTable, rng) -> np.ndarray:
    """Replace each bit with a uniform draw from its range (works on 1-D or 2-D input)."""
    bits = np.asarray(bits)
    low, high = table.bounds(bits)
    return rng.uniform(low, high)


def map_midpoint(bits, table: MappingTable) -> np.ndarray:
    """Deterministic mapping used at inference time: the centre of each range."""
    low, high = table.bounds(np.asarray(bits))
    return (low + high) / 2.0


def minmax_normalize(x) -> np.ndarray:
    """Min-max scale a vector, or each row of a matrix, into [0, 1].

    Constant rows map to all zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("cannot normalize an empty vector")
    lo = x.min(axis=-1, keepdims=True)
    span = x.max(axis=-1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - lo) / safe, 0.0)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Mapped and normalized rows, already permuted; the first ``s_train`` rows train."""

    features: np.ndarray
    labels: np.ndarray
    bits: np.ndarray
    f_max: int
    s_train: int
    s_test: int
    seed: int | None = None
    table: MappingTable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if not (self.labels.shape[0] == self.bits.shape[0] == n):
            raise ValueError("features, labels and bits must have the same number of rows")
        if self.s_train + self.s_test != n:
            raise ValueError(f"s_train + s_test = {self.s_train + self.s_test} != s_input = {n}")

    @property
    def s_input(self) -> int:
        return self.features.shape[0]

    @property
    def e_max(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.f_max + 1

    @property
    def X_train(self):
        return self.features[: self.s_train]

    @property
    def y_train(self):
        return self.labels[: self.s_train]

    @property
    def X_test(self):
        return self.features[self.s_train:]

    @property
    def y_test(self):
        return self.labels[self.s_train:]

    @property
    def onehot(self) -> np.ndarray:
        return _onehot(self.labels, self.n_classes)

    def header(self) -> dict:
        return {
            "format": "failpredict.dataset",
            "version": DATASET_FORMAT_VERSION,
            "e_max": self.e_max,
            "f_max": self.f_max,
            "s_train": self.s_train,
            "s_test": self.s_test,
            "seed": self.seed,
            "mapping": self.table.to_dict() if self.table is not None else None,
            "meta": self.meta,
        }

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                header=np.array(json.dumps(self.header())),
                features=self.features,
                labels=self.labels,
                bits=self.bits,
            )

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(Path(path), allow_pickle=False) as npz:
            header = json.loads(str(npz["header"]))
            if header.get("version") != DATASET_FORMAT_VERSION:
                raise ValueError(f"unsupported dataset version {header.get('version')}")
            features, labels, bits = npz["features"], npz["labels"], npz["bits"]
        if features.shape[1] != header["e_max"]:
            raise ValueError("dataset header e_max does not match the feature matrix")
        table = MappingTable.from_dict(header["mapping"]) if header.get("mapping") else None
        return cls(features, labels, bits, header["f_max"], header["s_train"], header["s_test"],
                   header.get("seed"), table, header.get("meta", {}))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.header() == other.header()
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.bits, other.bits)
        )


def build_dataset(catalog: FailureCatalog, s_input: int, test_fraction: float,
                  table: MappingTable | None = None, seed: int = 0) -> Dataset:
    """Generate, map, normalize, shuffle and split an artificial data set."""
    if s_input < 2 * catalog.f_max:
        raise ValueError(f"s_input={s_input} must be at least 2*f_max={2 * catalog.f_max}")
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    table = table or MappingTable.linear(catalog.schema.e_max)
    if table.e_max != catalog.schema.e_max:
        raise ValueError(f"mapping table covers {table.e_max} features, catalog has {catalog.schema.e_max}")
    rng = np.random.default_rng(seed)

    n_valid = s_input // 2
    valid_bits, valid_y = replicate_valid(catalog, n_valid)
    invalid_bits, invalid_y = ga_generate_invalid(catalog, s_input - n_valid, rng)
    bits = np.concatenate([valid_bits, invalid_bits])
    labels = np.concatenate([valid_y, invalid_y]).argmax(axis=1)

    features = minmax_normalize(map_features(bits, table, rng))
    order = rng.permutation(s_input)
    s_test = int(round(test_fraction * s_input))
    if not 0 < s_test < s_input:
        raise ValueError(f"test_fraction={test_fraction} leaves an empty split for s_input={s_input}")
    return Dataset(
        features[order], labels[order], bits[order], catalog.f_max,
        s_input - s_test, s_test, seed, table,
    )


class FeatureMapper(TransformerMixin, BaseEstimator):
    """Turn 0/1 event vectors into normalized real features.

    ``mode="random"`` draws from each range (training-time diversity);
    ``mode="midpoint"`` uses range centres so inference is deterministic.
    """

    def __init__(self, mapping="linear", mode="midpoint", random_state=None):
        self.mapping = mapping
        self.mode = mode
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_bits(X)
        self.n_features_in_ = X.shape[1]
        if isinstance(self.mapping, MappingTable):
            self.table_ = self.mapping
        elif isinstance(self.mapping, dict):
            self.table_ = MappingTable.from_dict(self.mapping)
        else:
            self.table_ = MappingTable.preset(self.mapping, self.n_features_in_)
        if self.table_.e_max != self.n_features_in_:
            raise ValueError(f"mapping covers {self.table_.e_max} features, X has {self.n_features_in_}")
        if self.mode not in ("random", "midpoint"):
            raise ValueError(f"mode must be 'random' or 'midpoint', got {self.mode!r}")
        self._rng = np.random.default_rng(self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "table_")
        X = check_bits(X, self.n_features_in_)
        if self.mode == "random":
            mapped = map_features(X, self.table_, self._rng)
        else:
            mapped = map_midpoint(X, self.table_)
        return minmax_normalize(mapped)

