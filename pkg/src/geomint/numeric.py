"""Dense linear algebra and a damped Newton solver for small systems."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError", "lu_solve", "RankResult", "rank", "null_space",
    "NewtonReport", "newton", "fd_jacobian", "DEFAULT_RANK_TOL",
]

DEFAULT_RANK_TOL = 1e-9


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def lu_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-12 * ||A||_inf``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"lu_solve needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    norm = np.abs(A).sum(axis=1).max()
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if norm == 0.0 or pivots.min() < 1e-12 * norm:
        raise SingularMatrixError(
            f"singular matrix: smallest pivot {pivots.min():.3e}, ||A||_inf = {norm:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b)


@dataclass(frozen=True)
class RankResult:
    rank: int
    kernel: np.ndarray       # columns span ker A      (cols x k)
    cokernel: np.ndarray     # columns span ker A^T    (rows x k')
    pivot_rows: tuple[int, ...]
    pivot_cols: tuple[int, ...]

    def __int__(self):
        return self.rank


def _eliminate(A: np.ndarray, tol: float):
    """Gaussian elimination with full pivoting.

    Returns the reduced row echelon form (in permuted column order), the
    column permutation, the row permutation and the rank.
    """
    M = A.copy()
    rows, cols = M.shape
    rperm = list(range(rows))
    cperm = list(range(cols))
    biggest = np.abs(M).max() if M.size else 0.0
    thresh = tol * biggest
    r = 0
    for k in range(min(rows, cols)):
        sub = np.abs(M[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= thresh or sub[i, j] == 0.0:
            break
        i += k
        j += k
        M[[k, i], :] = M[[i, k], :]
        rperm[k], rperm[i] = rperm[i], rperm[k]
        M[:, [k, j]] = M[:, [j, k]]
        cperm[k], cperm[j] = cperm[j], cperm[k]
        M[k, :] /= M[k, k]
        for ii in range(rows):
            if ii != k and M[ii, k] != 0.0:
                M[ii, :] -= M[ii, k] * M[k, :]
        r += 1
    return M, rperm, cperm, r


def _kernel_from_rref(M: np.ndarray, cperm: list[int], r: int, cols: int) -> np.ndarray:
    # In permuted coordinates the pivots are the identity block; each free
    # column gives one kernel vector.
    basis = np.zeros((cols, cols - r))
    for f in range(r, cols):
        vec = np.zeros(cols)
        vec[f] = 1.0
        vec[:r] = -M[:r, f]
        out = np.zeros(cols)
        out[cperm] = vec
        basis[:, f - r] = out
    return basis


def rank(A, tol: float = DEFAULT_RANK_TOL) -> RankResult:
    """Numerical rank plus bases of ``ker A`` and ``ker A^T``.

    Pivots smaller than ``tol`` times the largest entry of ``A`` count as zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows, cols = A.shape
    M, rperm, cperm, r = _eliminate(A, tol)
    kernel = _kernel_from_rref(M, cperm, r, cols)
    Mt, _, cperm_t, r_t = _eliminate(A.T.copy(), tol)
    cokernel = _kernel_from_rref(Mt, cperm_t, r_t, rows)
    # entries that are zero up to roundoff are snapped so that downstream
    # symbolic combinations fold cleanly
    for K in (kernel, cokernel):
        K[np.abs(K) < 1e-14] = 0.0
    return RankResult(r, kernel, cokernel, tuple(rperm[:r]), tuple(cperm[:r]))


def null_space(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    return rank(A, tol).kernel


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    final_residual_norm: float
    message: str = ""


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x, rel_step: float = 1e-7) -> np.ndarray:
    """Central finite-difference Jacobian with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x), dtype=float)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        # divide by the representable step so linear maps come out exact
        J[:, i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (xp[i] - xm[i])
    return J


def newton(
    residual: Callable[[np.ndarray], np.ndarray],
    x0,
    tol: float = 1e-12,
    max_iter: int = 50,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    least_squares: bool = False,
    fd_step: float = 1e-7,
) -> tuple[np.ndarray, NewtonReport]:
    """Damped Newton iteration with Armijo backtracking.

    Converged when ``||residual(x)||_inf <= tol``.  The step is halved up to
    30 times per iteration until the squared residual norm decreases
    sufficiently.  With ``least_squares=True`` the linearised system is solved
    in the minimum-norm least-squares sense, which admits non-square and
    rank-deficient (consistent) systems.

    Non-convergence is reported, never raised.
    """
    x = np.array(x0, dtype=float, copy=True).reshape(-1)
    r = np.asarray(residual(x), dtype=float)
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    it = 0
    while True:
        if not np.all(np.isfinite(r)):
            return x, NewtonReport(False, it, float("inf"), "non-finite residual")
        if norm <= tol:
            return x, NewtonReport(True, it, norm)
        if it >= max_iter:
            return x, NewtonReport(False, it, norm, f"no convergence after {max_iter} iterations")
        J = jacobian(x) if jacobian is not None else fd_jacobian(residual, x, fd_step)
        J = np.atleast_2d(np.asarray(J, dtype=float))
        try:
            if least_squares or J.shape[0] != J.shape[1]:
                dx = np.linalg.lstsq(J, -r, rcond=None)[0]
            else:
                dx = lu_solve(J, -r)
        except SingularMatrixError as exc:
            return x, NewtonReport(False, it, norm, f"singular Jacobian at iteration {it}: {exc}")
        merit = float(r @ r)
        alpha = 1.0
        for _ in range(31):
            x_try = x + alpha * dx
            try:
                r_try = np.asarray(residual(x_try), dtype=float)
            except ArithmeticError:
                r_try = None
            if r_try is not None and np.all(np.isfinite(r_try)):
                if float(r_try @ r_try) <= (1.0 - 1e-4 * alpha) * merit:
                    break
            alpha *= 0.5
        else:
            it += 1
            return x, NewtonReport(False, it, norm, "line search failed")
        x, r = x_try, r_try
        norm = float(np.max(np.abs(r))) if r.size else 0.0
        it += 1
