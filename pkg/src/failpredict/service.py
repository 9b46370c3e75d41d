"""Classification-as-a-service over anonymous bit vectors.

The endpoint only ever sees 0/1 arrays. Request bodies are never logged or
stored; the only log line per request carries the decision and tenant tag.
"""
from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .classifier import INVALID, TrainedModel, decide, forward
from .synth import MappingTable, map_midpoint, minmax_normalize

log = logging.getLogger(__name__)


def model_version(model: TrainedModel) -> str:
    h = hashlib.sha256()
    for arr in model.weights + model.biases:
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Snapshot:
    model: TrainedModel
    table: MappingTable
    d_thres: float
    version: str

    @property
    def e_max(self) -> int:
        return self.model.n_features

    @property
    def f_max(self) -> int:
        return self.model.n_classes - 1


class ModelStore:
    """Holds the current immutable snapshot; ``swap`` replaces it atomically."""

    def __init__(self, snapshot: Snapshot):
        self._snapshot = snapshot
        self._lock = threading.Lock()

    @property
    def current(self) -> Snapshot:
        return self._snapshot

    def swap(self, snapshot: Snapshot) -> Snapshot:
        with self._lock:
            old, self._snapshot = self._snapshot, snapshot
        return old


def make_snapshot(model: TrainedModel, table: MappingTable | None = None,
                  d_thres: float = 0.5) -> Snapshot:
    if table is None:
        if model.mapping is None:
            table = MappingTable.linear(model.n_features)
        else:
            table = MappingTable.from_dict(model.mapping)
    if table.e_max != model.n_features:
        raise ValueError(f"mapping covers {table.e_max} features, model expects {model.n_features}")
    if not 0 < d_thres < 1:
        raise ValueError(f"d_thres must lie in (0, 1), got {d_thres}")
    return Snapshot(model, table, d_thres, model_version(model))


class ClassifyRequest(BaseModel):
    bits: list[int]
    tenant: Optional[str] = None


class ClassifyResponse(BaseModel):
    one_hot: list[int]
    probabilities: list[float]
    decided: Union[int, str]
    argmax: int
    model_version: str
    tenant: Optional[str] = None


def classify(snapshot: Snapshot, bits) -> dict:
    """Map, normalize and classify one bit vector (midpoint mapping)."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.shape[0] != snapshot.e_max:
        raise ValueError(f"expected {snapshot.e_max} bits, got {bits.shape[-1] if bits.ndim else 0}")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    x = minmax_normalize(map_midpoint(bits.astype(np.uint8), snapshot.table))
    probs = forward(snapshot.model, x)
    decided, top = decide(probs, snapshot.d_thres)
    decided, top = int(decided[0]), int(top[0])
    one_hot = [0] * len(probs)
    one_hot[snapshot.f_max if decided == INVALID else decided] = 1
    return {
        "one_hot": one_hot,
        "probabilities": probs.tolist(),
        "decided": "INVALID" if decided == INVALID else decided,
        "argmax": top,
        "model_version": snapshot.version,
    }


def create_app(store: ModelStore | Snapshot) -> FastAPI:
    if isinstance(store, Snapshot):
        store = ModelStore(store)
    app = FastAPI(title="failpredict classifier")
    app.state.store = store

    @app.get("/v1/health")
    def health():
        snap = store.current
        return {"status": "ok", "model_version": snap.version, "e_max": snap.e_max,
                "f_max": snap.f_max, "d_thres": snap.d_thres}

    @app.post("/v1/classify", response_model=ClassifyResponse)
    def classify_endpoint(req: ClassifyRequest):
        snap = store.current
        try:
            result = classify(snap, req.bits)
        except ValueError as exc:
            return JSONResponse(status_code=422, content={
                "error": str(exc), "expected_length": snap.e_max, "model_version": snap.version,
            })
        log.info("classified tenant=%s decided=%s", req.tenant, result["decided"])
        return ClassifyResponse(tenant=req.tenant, **result)

    return app


def serve(model_path, host: str = "127.0.0.1", port: int = 8000, d_thres: float = 0.5,
          table: MappingTable | None = None) -> None:
    import uvicorn

    snapshot = make_snapshot(TrainedModel.load(model_path), table, d_thres)
    uvicorn.run(create_app(snapshot), host=host, port=port, access_log=False)
