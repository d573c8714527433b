import numpy as np
import pytest

from safe_mbrl.sim import builtin_scenarios, run_scenario

_ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture(scope="session")
def run_cached():
    """Run a builtin scenario (with optional overrides) once per session."""
    cache = {}
    scenarios = builtin_scenarios()

    def get(name, **overrides):
        key = (name, tuple(sorted(overrides.items())))
        if key not in cache:
            cfg = scenarios[name].replace(**overrides) if overrides else scenarios[name]
            cache[key] = run_scenario(cfg)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
