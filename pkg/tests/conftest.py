import numpy as np
import pytest

from geomint.maps import DiscretizationMap, cotangent_lift
from geomint.ocp import OCPDefinition, build_pontryagin, constraint_algorithm

SINGULAR_F = "0.5*x^2 + 0.5*y^2 + x*u1 + y*u2 + 0.5*u1^2"


def singular_example(f="x"):
    """The singular problem on R^2: xdot = f(x) + u1, ydot = y."""
    return OCPDefinition.from_strings([f"{f} + u1", "y"], SINGULAR_F,
                                      states=["x", "y"], controls=["u1", "u2"])


def lqr_example():
    return OCPDefinition.from_strings(["q2", "u1"], "0.5*q1^2 + 0.5*q2^2 + 0.5*u1^2",
                                      controls=["u1"])


def cascade_example():
    """dH/du2 = p2 - q1 is primary, p1 = 0 appears at level 1, u2 fixed at level 2."""
    return OCPDefinition.from_strings(["u1", "u2"], "0.5*u1^2 + q1*u2", controls=["u1", "u2"])


def deep_cascade_example():
    """Constraints at levels 0 to 3; the final set is a point."""
    return OCPDefinition.from_strings(["u1", "q1"], "0.5*u1^2 + q2*u2", controls=["u1", "u2"])


@pytest.fixture(scope="session")
def singular_system():
    sys = build_pontryagin(singular_example())
    return sys, constraint_algorithm(sys)


@pytest.fixture(scope="session")
def lqr_system():
    sys = build_pontryagin(lqr_example())
    return sys, constraint_algorithm(sys)


@pytest.fixture
def midpoint2():
    return cotangent_lift(DiscretizationMap(2, 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
