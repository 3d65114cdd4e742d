import json
import math
from importlib.resources import files

import pytest

from ormdgate import config

TWO_PI = 2 * math.pi


def load_fixture(name: str) -> dict:
    return config.validate(json.loads((files("ormdgate") / "fixtures" / name).read_text()))


@pytest.fixture(scope="session")
def type_a_config():
    return load_fixture("typeA_fig1.json")


@pytest.fixture(scope="session")
def type_c_config():
    return load_fixture("typeC_fig2.json")


@pytest.fixture(scope="session")
def type_a(type_a_config):
    return config.protocol_from_dict(type_a_config["protocol"])


@pytest.fixture(scope="session")
def type_c(type_c_config):
    return config.protocol_from_dict(type_c_config["protocol"])


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def report(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[number] = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        assert passed, detail

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
