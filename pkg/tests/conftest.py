import pytest

from pdmpctl import load_fixture, make_grid

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def cycle():
    return load_fixture("cycle1d")


@pytest.fixture(scope="session")
def cycle_a0():
    return load_fixture("cycle1d-a0")


@pytest.fixture(scope="session")
def decay():
    return load_fixture("decay1d")


@pytest.fixture(scope="session")
def grid(cycle):
    return make_grid(cycle)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""
    def record(number, ok, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sweep_a0(cycle_a0):
    from pdmpctl.average import vanishing_sweep
    return vanishing_sweep(cycle_a0, x0=0.5)


@pytest.fixture(scope="session")
def sweep_cycle(cycle):
    from pdmpctl.average import vanishing_sweep
    return vanishing_sweep(cycle, x0=0.5)


@pytest.fixture(scope="session")
def sweep_decay(decay):
    from pdmpctl.average import vanishing_sweep
    return vanishing_sweep(decay, x0=0.5)
