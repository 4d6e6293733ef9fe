import pytest

from fuzzkey.kms import default_config
from fuzzkey.probe import ConditionVector, FixedProvider
from fuzzkey.sealstore import SoftwareSealStore

# Heavy suites use the minimum legal iteration count; the default is exercised
# by the golden vector and the benchmark.
FAST_ITERATIONS = 10_000
T0 = 1_700_000_000.125


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def store(tmp_path_factory):
    return SoftwareSealStore.open(tmp_path_factory.mktemp("store") / "root.fzks")


@pytest.fixture
def here():
    return ConditionVector(25.0, 65, T0)


@pytest.fixture
def fixed(here):
    return FixedProvider(here)


# Verdict lines recorded by test_acceptance.py, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
