import numpy as np
import pytest

# Published count summaries of the motor portfolio.
N_POLICIES = 67856
N_ZERO = 63232
MEAN_CLAIMS = 0.07275
KAPPA3_SAMPLE = 0.08757


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.lines():
            terminalreporter.write_line(line)
