"""Experiment configuration and the seed-averaged train/evaluate loop."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .classifier import MLPArchitecture, TrainConfig, evaluate, train
from .schema import EventSchema, random_catalog
from .synth import MappingTable, build_dataset


@dataclass(frozen=True)
class ExperimentConfig:
    f_max: int = 50
    e_rel: int = 50
    e_time: int = 0
    e_one: int = 0
    alpha_low: float = 0.5
    alpha_high: float = 0.8
    hidden_layers: int = 5
    n_epochs: int = 40
    m_batch: int = 100
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    d_thres: float = 0.5
    s_input: int = 500
    test_fraction: float = 0.1
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    delta_p: float = 1e-3
    delta_w: float = 1e-5
    mapping: str = "linear"
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        # constructing these runs the sub-module invariant checks
        self.schema
        self.train_config(self.seeds[0])
        if self.f_max < 1:
            raise ValueError("f_max must be >= 1")
        if not 0 < self.alpha_low < self.alpha_high <= 1:
            raise ValueError(f"need 0 < alpha_low < alpha_high <= 1, got {self.alpha_low}, {self.alpha_high}")
        if self.s_input < 2 * self.f_max:
            raise ValueError(f"s_input={self.s_input} must be at least 2*f_max")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.delta_p <= 0 or self.delta_w <= 0:
            raise ValueError("delta_p and delta_w must be positive")
        if self.mapping not in ("linear", "exponential"):
            raise ValueError(f"unknown mapping preset {self.mapping!r}")

    @property
    def schema(self) -> EventSchema:
        return EventSchema(self.e_rel, self.e_time, self.e_one)

    @property
    def e_max(self) -> int:
        return self.schema.e_max

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.n_epochs, self.m_batch, self.learning_rate, self.beta1, self.beta2,
                           self.epsilon, self.d_thres, seed)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        if "e_max" in doc:
            e_max = doc.pop("e_max")
            if {"e_rel", "e_time", "e_one"} & doc.keys():
                total = doc.get("e_rel", 0) + doc.get("e_time", 0) + doc.get("e_one", 0)
                if total != e_max:
                    raise ValueError(f"e_max={e_max} disagrees with e_rel+e_time+e_one={total}")
            else:
                doc["e_rel"] = e_max
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def seed_streams(seed: int) -> tuple[int, int, int]:
    """Independent (catalog, dataset, training) seeds derived from one run seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def run_seed(config: ExperimentConfig, seed: int) -> dict:
    cat_seed, data_seed, train_seed = seed_streams(seed)
    catalog = random_catalog(config.schema, config.f_max, config.alpha_low, config.alpha_high, cat_seed)
    table = MappingTable.preset(config.mapping, config.e_max)
    dataset = build_dataset(catalog, config.s_input, config.test_fraction, table, data_seed)
    arch = MLPArchitecture(config.e_max, catalog.n_classes, config.hidden_layers)
    start = time.perf_counter()
    model = train(dataset, arch, config.train_config(train_seed))
    elapsed = time.perf_counter() - start
    return {
        "seed": seed,
        "p_error": evaluate(model, dataset.X_test, dataset.y_test, config.d_thres),
        "train_p_error": evaluate(model, dataset.X_train, dataset.y_train, config.d_thres),
        "train_time_s": elapsed,
        "s_train": dataset.s_train,
        "s_test": dataset.s_test,
        "loss_trace": model.loss_trace,
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Build data, train and evaluate once per seed; failures are recorded, not raised."""
    runs = []
    for seed in sorted(config.seeds):
        try:
            runs.append(run_seed(config, seed))
        except Exception as exc:  # noqa: BLE001 - one bad seed must not abort the rest
            runs.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    ok = [r for r in runs if "error" not in r]
    errors = np.array([r["p_error"] for r in ok])
    aggregate = {
        "n_ok": len(ok),
        "n_failed": len(runs) - len(ok),
        "mean_p_error": float(errors.mean()) if len(ok) else None,
        "std_p_error": float(errors.std()) if len(ok) else None,
        "mean_train_time_s": float(np.mean([r["train_time_s"] for r in ok])) if ok else None,
    }
    return {"format": "failpredict.report", "version": 1, "config": config.to_dict(),
            "runs": runs, "aggregate": aggregate}


def run_sweep(config: ExperimentConfig, key: str, values: list) -> dict:
    points = []
    for value in values:
        report = run_experiment(config.with_overrides(**{key: value}))
        points.append({"value": value, "aggregate": report["aggregate"], "runs": report["runs"]})
    return {"format": "failpredict.sweep", "version": 1, "config": config.to_dict(),
            "sweep_key": key, "points": points}


def write_loss_traces(report: dict, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for run in report["runs"]:
        if "loss_trace" not in run:
            continue
        path = directory / f"loss_seed{run['seed']}.dat"
        lines = ["# epoch loss"] + [f"{i} {v!r}" for i, v in enumerate(run["loss_trace"], start=1)]
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written
