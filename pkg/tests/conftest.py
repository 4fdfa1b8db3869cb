import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uapbev.basis import build_basis
from uapbev.seeding import SeedSolver

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def basis():
    return build_basis(6, 5, 0.1)


@pytest.fixture(scope="session")
def solver(basis):
    return SeedSolver(basis)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def record(number: int, checks: dict[str, bool], detail: str) -> None:
        ok = all(checks.values())
        failed = [name for name, good in checks.items() if not good]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        if failed:
            line += f" | failed: {', '.join(failed)}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
