import pytest
from hypothesis import settings

from softlanding.model import load_params


@pytest.fixture(scope="session")
def table1():
    return load_params("paper_table1")


@pytest.fixture(scope="session")
def desk():
    return load_params("desk_default")


# numba compiles on first call, so per-example timing is meaningless
settings.register_profile("default", deadline=None)
settings.load_profile("default")


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one summary line per acceptance check; echoed after the run."""

    def report(label: str, ok: bool, detail: str) -> None:
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
