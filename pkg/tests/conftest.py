import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_verdicts = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_verdicts] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the test still asserts on its own."""
    lines = request.config.stash[_verdicts]

    def record(number, title, ok, detail=""):
        lines.append(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}"
                     + (f"  [{detail}]" if detail else ""))
        print(lines[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_verdicts]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
