import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def verdicts(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_VERDICTS_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
