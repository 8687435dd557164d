import numpy as np
import pytest

from psotrack.geometry import CameraIntrinsics
from psotrack.imaging import TemplateRegion, textured_image

WIDTH, HEIGHT = 240, 200
RECT = (88, 68, 64, 64)

_criteria = {}


@pytest.fixture(scope="session")
def base():
    return textured_image(WIDTH, HEIGHT, seed=7)


@pytest.fixture(scope="session")
def region(base):
    return TemplateRegion.in_image(base, RECT)


@pytest.fixture(scope="session")
def camera():
    return CameraIntrinsics.for_image(WIDTH, HEIGHT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(number, passed, detail):
        _criteria[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        passed, detail = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
