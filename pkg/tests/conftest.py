import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from entroflow.space import grid, k2, ring

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K2():
    return k2()


@pytest.fixture(scope="session")
def ring32():
    return ring(32)


@pytest.fixture(scope="session")
def grid8():
    return grid(8)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                rows.append((props["criterion"], props["title"], outcome == "passed"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for k, title, ok in sorted(rows):
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title}")
