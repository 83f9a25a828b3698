import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from solargrid.cli import reference_case_path  # noqa: E402
from solargrid.study import load_case, run_study  # noqa: E402


def two_bus_spec(p_mw=100.0, q_mvar=0.0, x_pu=0.1, r_pu=0.0, kv=110.0):
    return {
        "base_mva": 100.0,
        "buses": [{"id": "S", "kind": "Slack", "nominal_kv": kv}, {"id": "L", "nominal_kv": kv}],
        "branches": [{"id": "line", "from": "S", "to": "L", "r_pu": r_pu, "x_pu": x_pu}],
        "loads": [{"bus": "L", "p_mw": p_mw, "q_mvar": q_mvar}],
    }


@pytest.fixture(scope="session")
def reference_path():
    return reference_case_path()


@pytest.fixture(scope="session")
def reference_case(reference_path):
    return load_case(reference_path)


@pytest.fixture(scope="session")
def reference_report(reference_case):
    return run_study(reference_case)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def accept():
    """Record one acceptance verdict and fail the test if it is not met."""

    def _record(n: int, ok: bool, detail: str, elapsed: float | None = None):
        line = f"[ACCEPT {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
        if elapsed is not None:
            line += f"  ({elapsed:.2f} s)"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
