import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient

from failpredict.classifier import MLPArchitecture, TrainConfig, train
from failpredict.service import ModelStore, classify, create_app, make_snapshot
from failpredict.synth import MappingTable, build_dataset

from golden import PRIORITY_INPUT


@pytest.fixture
def snapshot(priority_model):
    return make_snapshot(priority_model)


@pytest.fixture
def client(snapshot):
    return TestClient(create_app(snapshot))


def test_health(client, snapshot):
    body = client.get("/v1/health").json()
    assert body == {"status": "ok", "model_version": snapshot.version, "e_max": 10, "f_max": 6,
                    "d_thres": 0.5}


def test_worked_example_decides_f3(client):
    body = client.post("/v1/classify", json={"bits": PRIORITY_INPUT, "tenant": "site-a"}).json()
    assert body["decided"] == 2  # F_3
    assert body["one_hot"] == [0, 0, 1, 0, 0, 0, 0]
    assert sum(body["probabilities"]) == pytest.approx(1.0, abs=1e-9)
    assert min(body["probabilities"]) >= 0
    assert body["tenant"] == "site-a"


@pytest.mark.parametrize("bits", [[1, 0, 1], PRIORITY_INPUT + [0], [2] * 10, []])
def test_malformed_bits_rejected(client, bits):
    resp = client.post("/v1/classify", json={"bits": bits})
    assert resp.status_code == 422
    assert resp.json()["expected_length"] == 10


def test_malformed_body_rejected(client):
    assert client.post("/v1/classify", json={"vector": [1, 0]}).status_code == 422
    assert client.post("/v1/classify", content=b"not json").status_code == 422


def test_one_hot_matches_decision(client):
    rng = np.random.default_rng(0)
    for _ in range(30):
        bits = rng.integers(0, 2, 10).tolist()
        body = client.post("/v1/classify", json={"bits": bits}).json()
        hot = int(np.argmax(body["one_hot"]))
        assert sum(body["one_hot"]) == 1
        assert hot == (6 if body["decided"] == "INVALID" else body["decided"])


def test_concurrent_identical_requests(client):
    def call(_):
        return client.post("/v1/classify", json={"bits": PRIORITY_INPUT}).json()

    with ThreadPoolExecutor(max_workers=16) as pool:
        bodies = list(pool.map(call, range(100)))
    assert len(bodies) == 100
    assert {b["decided"] for b in bodies} == {2}
    assert len({tuple(b["probabilities"]) for b in bodies}) == 1


def test_payload_is_never_logged_or_written(client, caplog, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    written = []
    real_open = open

    def spy_open(file, mode="r", *args, **kwargs):
        if any(m in mode for m in "wax+"):
            written.append(file)
        return real_open(file, mode, *args, **kwargs)

    monkeypatch.setattr("builtins.open", spy_open)
    with caplog.at_level(logging.DEBUG):
        client.post("/v1/classify", json={"bits": PRIORITY_INPUT, "tenant": "t1"})
    assert written == []
    assert list(tmp_path.iterdir()) == []
    payload = str(PRIORITY_INPUT)
    compact = "".join(map(str, PRIORITY_INPUT))
    for rec in caplog.records:
        msg = rec.getMessage()
        assert payload not in msg and compact not in msg
        assert "probabilities" not in msg


def test_classify_function_is_deterministic(snapshot):
    a = classify(snapshot, PRIORITY_INPUT)
    b = classify(snapshot, np.array(PRIORITY_INPUT))
    assert a == b


def test_hot_swap(priority_catalog, priority_model):
    store = ModelStore(make_snapshot(priority_model))
    client = TestClient(create_app(store))
    v1 = client.get("/v1/health").json()["model_version"]
    ds = build_dataset(priority_catalog, 300, 0.1, seed=1)
    other = train(ds, MLPArchitecture.for_catalog(priority_catalog, 1), TrainConfig(n_epochs=2))
    old = store.swap(make_snapshot(other))
    assert old.version == v1
    v2 = client.get("/v1/health").json()["model_version"]
    assert v2 != v1
    assert client.post("/v1/classify", json={"bits": PRIORITY_INPUT}).json()["model_version"] == v2


def test_snapshot_validation(priority_model):
    with pytest.raises(ValueError):
        make_snapshot(priority_model, MappingTable.linear(4))
    with pytest.raises(ValueError):
        make_snapshot(priority_model, d_thres=1.0)
