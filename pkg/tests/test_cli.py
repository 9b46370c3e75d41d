import json
from pathlib import Path

import numpy as np
import pytest

from failpredict.cli import failure_name, main
from failpredict.prioritize import load_pairwise, principal_eigenvector, prioritized_argmax
from failpredict.schema import load_catalog, popcount_histogram
from failpredict.synth import Dataset

from golden import PAIRWISE, PRIORITY_INPUT, SOFTMAX

FIXTURES = Path(__file__).parent / "fixtures"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def config(tmp_path):
    def write(**kwargs):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(kwargs))
        return path
    return write


@pytest.fixture
def pairwise_file(tmp_path):
    path = tmp_path / "pairwise.json"
    path.write_text(json.dumps({"f_max": 6, "rows": PAIRWISE}))
    return path


def test_failure_names():
    assert failure_name(0, 6) == "F_1"
    assert failure_name(6, 6) == "F*"
    assert failure_name(-1, 6) == "INVALID"


def test_gen_catalog_table_two(capsys, tmp_path):
    out = tmp_path / "cat.json"
    doc = run_json(capsys, "gen-catalog", "--out", out, "--seed", 3)
    cat = load_catalog(out)
    assert (cat.f_max, cat.schema.e_max) == (50, 50)
    assert all(25 <= f.popcount <= 40 for f in cat.failures)
    assert doc["popcount_histogram"] == {str(k): v for k, v in popcount_histogram(cat).items()}


def test_gen_catalog_minimal(capsys, tmp_path, config):
    cfg = config(f_max=1, e_max=4, alpha_low=0.25, alpha_high=0.75, s_input=10)
    code, out, _ = run(capsys, "--config", cfg, "gen-catalog", "--out", tmp_path / "c.json")
    assert code == 0 and "f_max=1" in out
    assert load_catalog(tmp_path / "c.json").matrix.shape == (1, 4)


@pytest.mark.parametrize("alphas", [(0.8, 0.5), (0.13, 0.18)])
def test_gen_catalog_bad_alphas(capsys, tmp_path, config, alphas):
    cfg = config(f_max=10, e_max=10, alpha_low=alphas[0], alpha_high=alphas[1])
    code, _, err = run(capsys, "gen-catalog", "--config", cfg, "--out", tmp_path / "c.json")
    assert code == 1
    assert "error:" in err
    assert not (tmp_path / "c.json").exists()


def test_unknown_config_key(capsys, config):
    code, _, err = run(capsys, "gen-catalog", "--config", config(f_max=5, hidden=3))
    assert code == 1 and "hidden" in err


def test_missing_file_is_validation_error(capsys, tmp_path):
    code, _, _ = run(capsys, "synth", "--catalog", tmp_path / "missing.json")
    assert code == 1


def test_pipeline(capsys, tmp_path, config):
    cfg = config(f_max=6, e_max=12, alpha_low=0.3, alpha_high=0.7, s_input=300, n_epochs=5,
                 m_batch=32, hidden_layers=2)
    cat, ds, model = tmp_path / "cat.json", tmp_path / "ds.npz", tmp_path / "model.npz"
    assert run(capsys, "gen-catalog", "--config", cfg, "--out", cat)[0] == 0
    doc = run_json(capsys, "synth", "--config", cfg, "--catalog", cat, "--out", ds)
    assert (doc["s_train"], doc["s_test"], doc["n_invalid"]) == (270, 30, 150)
    doc = run_json(capsys, "train", "--config", cfg, "--dataset", ds, "--out", model)
    assert len(doc["loss_trace"]) == 5
    assert np.loadtxt(doc["loss_trace_path"]).shape == (5, 2)
    doc = run_json(capsys, "eval", "--config", cfg, "--model", model, "--dataset", ds)
    assert 0 <= doc["p_error"] <= 100 and doc["n"] == 30
    train_doc = run_json(capsys, "eval", "--model", model, "--dataset", ds, "--split", "train")
    assert train_doc["n"] == 270

    bits = Dataset.load(ds).bits[0]
    doc = run_json(capsys, "predict", "--model", model, "--bits", "".join(map(str, bits)))
    assert sum(doc["one_hot"]) == 1
    assert sum(doc["probabilities"]) == pytest.approx(1.0, abs=1e-9)
    doc = run_json(capsys, "predict", "--model", model, "--bits", ",".join(["0"] * 12))
    assert doc["decided_name"] in {f"F_{i}" for i in range(1, 7)} | {"F*", "INVALID"}

    code, _, err = run(capsys, "predict", "--model", model, "--bits", "0101")
    assert code == 1 and "12" in err


def test_commands_are_deterministic(capsys, tmp_path, config):
    cfg = config(f_max=4, e_max=8, alpha_low=0.3, alpha_high=0.7, s_input=100, n_epochs=3, m_batch=20,
                 hidden_layers=1)
    outputs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        run(capsys, "gen-catalog", "--config", cfg, "--out", d / "cat.json")
        run(capsys, "synth", "--config", cfg, "--catalog", d / "cat.json", "--out", d / "ds.npz")
        run(capsys, "train", "--config", cfg, "--dataset", d / "ds.npz", "--out", d / "m.npz")
        outputs.append([(d / f).read_bytes() for f in ("cat.json", "ds.npz", "m.npz")])
    assert outputs[0] == outputs[1]


def test_predict_worked_example(capsys, priority_model_path, pairwise_file):
    bits = "".join(map(str, PRIORITY_INPUT))
    doc = run_json(capsys, "predict", "--model", priority_model_path, "--bits", bits)
    assert doc["decided_name"] == "F_3"
    doc = run_json(capsys, "predict", "--model", priority_model_path, "--bits", bits,
                   "--pairwise", pairwise_file)
    weights = principal_eigenvector(load_pairwise(pairwise_file))
    expected, _ = prioritized_argmax(doc["probabilities"], weights, 1e-3, 1e-5)
    assert doc["prioritized"] == expected


def test_prioritize_worked_example(capsys, pairwise_file):
    probs = " ".join(f"{p:.8g}" for p in SOFTMAX)
    code, out, _ = run(capsys, "prioritize", "--probs", probs, "--pairwise", pairwise_file)
    assert code == 0
    assert "raw prediction: F_3" in out and "prioritized: F_5" in out
    doc = run_json(capsys, "prioritize", "--probs", probs, "--pairwise", pairwise_file)
    assert doc["raw_argmax"] == 2 and doc["prioritized"] == 4


def test_prioritize_probs_file_with_invalid_entry(capsys, tmp_path, pairwise_file):
    f = tmp_path / "p.txt"
    f.write_text("\n".join(f"{p:.8g}" for p in list(SOFTMAX) + [0.0]))
    doc = run_json(capsys, "prioritize", "--probs-file", f, "--pairwise", pairwise_file)
    assert doc["prioritized_name"] == "F_5"


def test_prioritize_rejects_bad_matrix(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"f_max": 2, "rows": [["1", "2"], ["2", "1"]]}))
    code, _, err = run(capsys, "prioritize", "--probs", "0.3 0.7", "--pairwise", bad)
    assert code == 1 and "[0][1]" in err


def test_parse_fixture(capsys):
    doc = run_json(capsys, "parse", "--log", FIXTURES / "device.log", "--event-map",
                   FIXTURES / "event_map.json", "--catalog", FIXTURES / "catalog.json",
                   "--window-span", 60000, "--step", 10000)
    assert [t[0] for t in doc["tuples"]] == [1, 4, 7, 10]
    assert doc["bits"] == [0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1, 0]


def test_parse_requires_window(capsys):
    code, _, err = run(capsys, "parse", "--log", FIXTURES / "device.log", "--event-map",
                       FIXTURES / "event_map.json", "--catalog", FIXTURES / "catalog.json")
    assert code == 1 and "window-span" in err


def test_parse_bad_log(capsys):
    code, _, err = run(capsys, "parse", "--log", FIXTURES / "bad_time.log", "--event-map",
                       FIXTURES / "event_map.json", "--catalog", FIXTURES / "catalog.json",
                       "--window-span", 1000, "--step", 1000)
    assert code == 1 and "line 2" in err


def small_experiment(config, **extra):
    return config(f_max=4, e_max=8, alpha_low=0.3, alpha_high=0.7, s_input=80, n_epochs=2, m_batch=16,
                  hidden_layers=1, seeds=[0, 1], **extra)


def test_run_experiment_report(capsys, tmp_path, config):
    cfg = small_experiment(config)
    out = tmp_path / "r.json"
    code, text, _ = run(capsys, "run-experiment", "--config", cfg, "--out", out)
    assert code == 0 and "mean P_error" in text
    report = json.loads(out.read_text())
    assert report["config"]["s_input"] == 80 and report["config"]["seeds"] == [0, 1]
    assert [r["seed"] for r in report["runs"]] == [0, 1]
    assert report["aggregate"]["n_ok"] == 2
    assert sorted(p.name for p in (tmp_path / "r_loss").iterdir()) == ["loss_seed0.dat", "loss_seed1.dat"]


def test_run_experiment_single_seed_deterministic(capsys, tmp_path, config):
    cfg = small_experiment(config)
    reports = []
    for name in ("a.json", "b.json"):
        run(capsys, "run-experiment", "--config", cfg, "--seed", 5, "--out", tmp_path / name)
        reports.append(json.loads((tmp_path / name).read_text()))
    for r in reports:
        for run_ in r["runs"]:
            run_.pop("train_time_s")
        r["aggregate"].pop("mean_train_time_s")
    assert reports[0] == reports[1]
    assert reports[0]["config"]["seeds"] == [5]


def test_run_experiment_sweep(capsys, tmp_path, config):
    out = tmp_path / "s.json"
    code, text, _ = run(capsys, "run-experiment", "--config", small_experiment(config),
                        "--sweep", "n_epochs=1,2", "--out", out)
    assert code == 0
    report = json.loads(out.read_text())
    assert [p["value"] for p in report["points"]] == [1, 2]
    assert "n_epochs=1" in text
    code, _, _ = run(capsys, "run-experiment", "--config", small_experiment(config), "--sweep", "bogus=1")
    assert code == 1


def test_run_experiment_all_seeds_failing(capsys, tmp_path, config):
    # a learning rate that blows up every seed
    cfg = small_experiment(config, learning_rate=1e300)
    code, text, _ = run(capsys, "run-experiment", "--config", cfg, "--out", tmp_path / "r.json")
    assert code == 2
    assert "FAILED" in text
