import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomint.maps import (
    DiscretizationMap, FunctionDiscretizationMap, canonical_J, cotangent_lift, lift_by_composition,
    omega_12, omega_tangent_lift, verify_discretization_properties, verify_lift_symplectomorphism,
)

thetas = st.floats(0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(thetas, st.integers(0, 1000))
def test_apply_invert_roundtrip(theta, seed):
    g = np.random.default_rng(seed)
    d = DiscretizationMap(3, theta)
    x, v = g.normal(size=3), g.normal(size=3)
    x2, v2 = d.invert(*d.apply(x, v))
    assert np.allclose(x2, x, atol=1e-14) and np.allclose(v2, v, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(thetas)
def test_discretization_axioms(theta):
    r0, rid = verify_discretization_properties(DiscretizationMap(2, theta), np.array([0.3, -1.2]))
    assert r0 == 0.0 and rid < 1e-9


def test_theta_bounds():
    with pytest.raises(ValueError):
        DiscretizationMap(2, 1.5)
    with pytest.raises(ValueError):
        DiscretizationMap(0, 0.5)


def test_midpoint_lift_closed_form():
    L = cotangent_lift(DiscretizationMap(1, 0.5))
    q0, p0, q1, p1 = L.apply_lift([1.0], [2.0], [4.0], [8.0])
    assert (q0, p0, q1, p1) == ([-1.0], [-2.0], [3.0], [6.0])


@settings(max_examples=30, deadline=None)
@given(thetas, st.integers(0, 1000))
def test_lift_inverse(theta, seed):
    g = np.random.default_rng(seed)
    L = cotangent_lift(DiscretizationMap(2, theta))
    z = g.normal(size=(4, 2))
    back = L.invert_lift(*L.apply_lift(*z))
    assert all(np.allclose(a, b, atol=1e-13) for a, b in zip(back, z))


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.5, 1.0])
def test_composition_oracle(theta, rng):
    d = DiscretizationMap(2, theta)
    L = cotangent_lift(d)
    for _ in range(20):
        z = rng.normal(size=(4, 2))
        a = np.concatenate(L.apply_lift(*z))
        b = np.concatenate(lift_by_composition(d, *z))
        assert np.max(np.abs(a - b)) < 1e-12


def test_matrix_matches_apply(rng):
    L = cotangent_lift(DiscretizationMap(2, 0.25))
    z = rng.normal(size=8)
    assert np.allclose(L.matrix() @ z, np.concatenate(L.apply_lift(*z.reshape(4, 2))))


def test_nonlinear_map_lift_is_symplectic():
    # a retraction-like map that is not in the theta family
    d = FunctionDiscretizationMap(
        1,
        lambda x, v: x - 0.5 * v,
        lambda x, v: x + 0.5 * v + 0.1 * v ** 2,
    )

    class Lift:
        n = 1

        def apply_lift(self, q, p, qd, pd):
            return lift_by_composition(d, q, p, qd, pd)

    assert verify_lift_symplectomorphism(Lift(), samples=5) < 1e-7


def test_forms():
    J = canonical_J(1)
    assert np.array_equal(J, [[0, 1], [-1, 0]])
    assert np.array_equal(omega_12(1)[:2, :2], -J)
    W = omega_tangent_lift(J)
    assert np.array_equal(W[:2, 2:], J) and np.array_equal(W[:2, :2], np.zeros((2, 2)))


def test_cotangent_lift_rejects_general_maps():
    with pytest.raises(TypeError):
        cotangent_lift(FunctionDiscretizationMap(1, lambda x, v: (x, x + v)))


def test_explicit_euler_map_values():
    d = DiscretizationMap(1, 0.0)
    assert [a.tolist() for a in d.apply([1.0], [2.0])] == [[1.0], [3.0]]
    assert [a.tolist() for a in d.invert([1.0], [3.0])] == [[1.0], [2.0]]


def test_theta_zero_lift_values():
    L = cotangent_lift(DiscretizationMap(1, 0.0))
    got = [float(a[0]) for a in L.apply_lift([1.0], [1.0], [1.0], [1.0])]
    assert got == [1.0, 0.0, 2.0, 1.0]
    oracle = [float(a[0]) for a in lift_by_composition(DiscretizationMap(1, 0.0), [1.0], [1.0], [1.0], [1.0])]
    assert oracle == got
