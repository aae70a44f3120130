"""Shared fixtures and the acceptance-summary hook."""

import pytest

ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def record_acceptance(name: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS.append((name, "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, verdict in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{verdict}] {name}")


@pytest.fixture(scope="session")
def maze_task():
    from bldc import worldgen

    return worldgen.generate_task("maze", 11, 11, seed=0)


@pytest.fixture(scope="session")
def small_maze():
    from bldc import worldgen

    return worldgen.generate_task("maze", 7, 7, seed=5)


@pytest.fixture(scope="session")
def keylock_task():
    from bldc import worldgen

    return worldgen.generate_task("keylock", 9, 9, seed=42, color_count=1)
