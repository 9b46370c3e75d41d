import numpy as np
import pytest

from failpredict.classifier import MLPArchitecture, TrainConfig, train
from failpredict.schema import FailureCatalog
from failpredict.synth import build_dataset

from golden import GA_EXAMPLE, PRIORITY_CATALOG

_acceptance = []


@pytest.fixture
def ga_catalog():
    """The GA walkthrough map without its duplicated F_4 row (ids shift: old F_5 is F_4)."""
    return FailureCatalog.from_matrix(np.delete(GA_EXAMPLE, 3, axis=0))


@pytest.fixture(scope="session")
def priority_catalog():
    return FailureCatalog.from_matrix(PRIORITY_CATALOG)


@pytest.fixture(scope="session")
def priority_model(priority_catalog):
    ds = build_dataset(priority_catalog, 1200, 0.1, seed=7)
    arch = MLPArchitecture.for_catalog(priority_catalog, hidden_layers=2)
    return train(ds, arch, TrainConfig(n_epochs=60, m_batch=32, seed=7))


@pytest.fixture(scope="session")
def priority_model_path(priority_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "priority.npz"
    priority_model.save(path)
    return path


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        measured = dict(report.user_properties).get("measured", "")
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, measured))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, measured in _acceptance:
        line = f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  [{measured}]" if measured else line)
