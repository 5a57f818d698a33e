import math

import pytest

from capilab.geometry import DomainSpec

# (criterion id, passed, detail) collected by test_acceptance.py
ACCEPTANCE = []


def record(cid: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((cid, bool(passed), detail))


@pytest.fixture
def half_disk():
    return DomainSpec("planar", 1.0, math.pi / 2)


@pytest.fixture
def cap60():
    return DomainSpec("planar", 1.0, math.pi / 3)


@pytest.fixture
def half_ball():
    return DomainSpec("axisymmetric", 1.0, math.pi / 2)


@pytest.fixture
def bumpy():
    return DomainSpec("planar", 1.0, math.pi / 2, [(2, 0.1)])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
