import pytest

from ahmm.building import BuildingConfig, build_building_scenario, build_two_room_slice
from ahmm.fixtures import t4


def uniform_top(model, s0):
    dom = model.applicable[model.K][s0]
    return {p: 1.0 / len(dom) for p in dom}


def tv(p, q):
    """Total variation between two {key: prob} dicts or aligned sequences."""
    if isinstance(p, dict):
        keys = set(p) | set(q)
        return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
    return 0.5 * sum(abs(a - b) for a, b in zip(p, q))


@pytest.fixture(scope="session")
def t4_h():
    return t4()


@pytest.fixture(scope="session")
def t4_model(t4_h):
    return t4_h.compiled


@pytest.fixture(scope="session")
def building():
    return build_building_scenario()


@pytest.fixture(scope="session")
def building_slip():
    return build_building_scenario(BuildingConfig(slip=0.2))


@pytest.fixture(scope="session")
def two_room():
    return build_two_room_slice()


# acceptance lines, printed once at the end of the session

ACCEPTANCE: dict = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
