import numpy as np
import pytest

from portanet import zoo
from portanet.builder import GraphBuilder

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def single_conv():
    """(1,8,8,4) -> 3x3 SAME conv to 8 channels."""
    b = GraphBuilder(seed=3)
    x = b.input("x", (1, 8, 8, 4))
    return b.build(b.conv(x, 8, k=3))


@pytest.fixture(scope="session")
def small_unet():
    return zoo.build(zoo.ArchSpec(depth=2, base_channels=8, input_shape=(1, 64, 64, 3), seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
