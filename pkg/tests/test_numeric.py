import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geomint.numeric import SingularMatrixError, fd_jacobian, lu_solve, newton, rank


def test_lu_solve_matches_numpy(rng):
    A = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b = rng.normal(size=5)
    assert np.allclose(lu_solve(A, b), np.linalg.solve(A, b), atol=1e-14)


def test_lu_solve_singular():
    with pytest.raises(SingularMatrixError):
        lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_rank_of_example_hessian():
    res = rank(np.array([[-1.0, 0.0], [0.0, 0.0]]))
    assert res.rank == 1
    assert np.allclose(res.kernel.ravel(), [0, 1])
    assert np.allclose(res.cokernel.ravel(), [0, 1])
    assert res.pivot_rows == (0,) and res.pivot_cols == (0,)


def test_rank_zero_matrix():
    res = rank(np.zeros((3, 2)))
    assert res.rank == 0 and res.kernel.shape == (2, 2) and res.cokernel.shape == (3, 3)


def test_rank_rejects_bad_tol():
    with pytest.raises(ValueError):
        rank(np.eye(2), tol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 5), st.integers(0, 10_000))
def test_rank_of_random_low_rank_products(rows, cols, r, seed):
    g = np.random.default_rng(seed)
    r = min(r, rows, cols)
    A = g.normal(size=(rows, r)) @ g.normal(size=(r, cols))
    res = rank(A)
    assert res.rank == r
    assert res.kernel.shape == (cols, cols - r)
    assert np.max(np.abs(A @ res.kernel), initial=0) < 1e-9
    assert np.max(np.abs(A.T @ res.cokernel), initial=0) < 1e-9


def test_fd_jacobian_of_polynomial():
    f = lambda x: np.array([x[0] ** 2 * x[1], np.sin(x[1])])
    x = np.array([0.7, -0.3])
    J = fd_jacobian(f, x)
    exact = np.array([[2 * x[0] * x[1], x[0] ** 2], [0.0, np.cos(x[1])]])
    assert np.allclose(J, exact, atol=1e-8)


def test_newton_cubic():
    x, rep = newton(lambda x: x ** 3 - 2, np.array([1.0]), tol=1e-13)
    assert rep.converged and abs(x[0] - 2 ** (1 / 3)) < 1e-13
    assert rep.iterations <= 8


def test_newton_analytic_jacobian():
    res = lambda z: np.array([z[0] ** 2 + z[1] ** 2 - 1, z[0] - z[1]])
    jac = lambda z: np.array([[2 * z[0], 2 * z[1]], [1.0, -1.0]])
    z, rep = newton(res, [1.0, 0.2], jacobian=jac)
    assert rep.converged and np.allclose(z, [2 ** -0.5] * 2, atol=1e-12)


def test_newton_reports_singular_jacobian():
    x, rep = newton(lambda x: np.array([x[0] ** 2 + 1.0]), np.array([0.0]),
                    jacobian=lambda x: np.array([[2 * x[0]]]))
    assert not rep.converged and "singular" in rep.message


def test_newton_reports_non_convergence():
    _, rep = newton(lambda x: np.array([x[0] ** 2 + 1.0]), np.array([1.0]), max_iter=5)
    assert not rep.converged and rep.final_residual_norm >= 1.0


def test_newton_least_squares_overdetermined_consistent():
    res = lambda z: np.array([z[0] - 1, z[1] + 2, z[0] + z[1] + 1])
    z, rep = newton(res, np.zeros(2), least_squares=True)
    assert rep.converged and np.allclose(z, [1, -2])
