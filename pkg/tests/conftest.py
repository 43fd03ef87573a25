import numpy as np
import pytest

from ionnet.config import load_config


@pytest.fixture(scope="session")
def cal():
    return load_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
