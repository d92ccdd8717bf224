import numpy as np
import pytest

from shallowbound.expr import parse_expr
from shallowbound.grid import Interval, build_grid
from shallowbound.perturbation import Multiply, PerturbationOp


@pytest.fixture(scope="session")
def unit_q():
    return Interval(-1.0, 1.0)


@pytest.fixture(scope="session")
def grid128(unit_q):
    return build_grid(unit_q, 128)


@pytest.fixture(scope="session")
def bump_op(unit_q):
    """Real unit-mass bump potential on (-1, 1)."""
    return PerturbationOp(unit_q, (Multiply(parse_expr("bump(0, 1)")),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
