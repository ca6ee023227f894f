"""Shared long-running experiments for the acceptance suite."""

import pytest

from hyperlab import experiment as ex
from hyperlab.config import build_config

CRITERIA_LINES = []


def record_criterion(number, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: s.split("criterion ")[1]):
            terminalreporter.write_line(line)


def _run(tmp_path_factory, name, override_horizon=False, **values):
    cfg = build_config(values)
    out = tmp_path_factory.mktemp(name)
    record, cols = ex.simulate(cfg, out, override_horizon=override_horizon)
    return {"cfg": cfg, "dir": out, "record": record, "cols": cols}


HYPERDIFFUSION = {
    "flow.profile": "none", "scheme.kappa": 1.0, "initial_data.sigma": 2.0,
    "initial_data.delta": 0.5, "times.t_end": 1e4,
    "bounds.fit_window_train": [1.0, 10.0], "bounds.fit_window_test": [10.0, 1e4],
    "times.snapshot_times": [1.0, 10.0, 100.0, 1000.0, 1e4], "output.emit_snapshots": True,
}


@pytest.fixture(scope="session")
def hyperdiffusion_2d(tmp_path_factory):
    return _run(tmp_path_factory, "hyper2d", **HYPERDIFFUSION,
                **{"grid.n": 2, "grid.N": 256, "grid.L": 100.0})


@pytest.fixture(scope="session")
def hyperdiffusion_3d(tmp_path_factory):
    # L = 50 puts t = 1e4 past the diffusive horizon (5^4 = 625)
    return _run(tmp_path_factory, "hyper3d", override_horizon=True, **HYPERDIFFUSION,
                **{"grid.n": 3, "grid.N": 64, "grid.L": 50.0})


@pytest.fixture(scope="session")
def default_advected(tmp_path_factory):
    return _run(tmp_path_factory, "advected", **{
        "times.snapshot_times": [10.0, 100.0, 1000.0, 2000.0], "output.emit_snapshots": True})
