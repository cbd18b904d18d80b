import numpy as np
import pytest

from oommix.autodiff.tensor import precision


@pytest.fixture
def f64():
    with precision(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion; returns ``ok``."""
    table = request.config.stash[VERDICTS]

    def record(number: int, ok: bool, detail: str) -> bool:
        table[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(table[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(VERDICTS, {})
    if table:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
