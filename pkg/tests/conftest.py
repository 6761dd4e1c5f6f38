"""Shared pipeline runs and the acceptance summary."""
import time

import pytest

from nodalknots.cli import PipelineConfig, run_pipeline

ACCEPTANCE_LINES = {}


def record(n: int, ok: bool, detail: str):
    """Store and print one acceptance line."""
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def _timed_run(config, out=None):
    t0 = time.perf_counter()
    report = run_pipeline(config, out)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def unknot_config():
    return PipelineConfig.from_json(
        {"preset": "unknot", "stability": {"trials": 0}, "outputs": {"formats": ["json", "obj"]}})


@pytest.fixture(scope="session")
def unknot_run(unknot_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("unknot")
    report, _ = _timed_run(unknot_config, out)
    return report, out


@pytest.fixture(scope="session")
def hopf_run(tmp_path_factory):
    """Full default Hopf pipeline, 20 stability trials included."""
    out = tmp_path_factory.mktemp("hopf")
    report, seconds = _timed_run(PipelineConfig(preset="hopf"), out)
    return report, out, seconds


@pytest.fixture(scope="session")
def trefoil_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("trefoil")
    report, _ = _timed_run(PipelineConfig(preset="trefoil", stability={"trials": 0}), out)
    return report, out
