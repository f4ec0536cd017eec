import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from builders import run_pipeline
from hstgcnn.experiments import fit_fixture

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=10, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fitted_default():
    """Default corpus clustered, trained and weight-fitted once per session."""
    return fit_fixture()


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """Workdir of one full default command-line run."""
    workdir = tmp_path_factory.mktemp("pipeline") / "run"
    codes = run_pipeline(workdir)
    assert codes == [0] * len(codes)
    return workdir


@pytest.fixture
def acceptance_report():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
