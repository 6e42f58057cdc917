import numpy as np
import pytest

from levyrank.model import Constant, Exponential, JumpMeasure, ModelSpec

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def atlas2():
    """N=2 Brownian Atlas: stationary gap is Exp(1)."""
    return ModelSpec.diagonal([1.0, 0.0], [1.0, 1.0])


@pytest.fixture
def jump2():
    """N=2, zero drift, bottom rank jumps +1 at rate 1/2."""
    return ModelSpec.diagonal([0.0, 0.0], [1.0, 1.0],
                              JumpMeasure.per_rank([(0.5, Constant(1.0)), None]))


@pytest.fixture
def jump3():
    """Stable N=3 system with an exponential and an atomic jump component."""
    return ModelSpec.diagonal(
        [1.0, 0.0, 0.0], [1.0, 1.0, 1.0],
        JumpMeasure.per_rank([(1.0, Exponential(1.0)), (0.5, Constant(1.0)), None]),
    )


@pytest.fixture
def symmetric3():
    return ModelSpec.diagonal([1.0, 0.0, -1.0], [1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (len(k), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
