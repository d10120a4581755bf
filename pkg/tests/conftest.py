import zlib

import numpy as np
import pytest


@pytest.fixture
def rng(request):
    """A generator keyed by the test name, so every test is reproducible."""
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


CRITERIA: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
