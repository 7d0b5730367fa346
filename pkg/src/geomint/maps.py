"""Discretization maps on TR^n and their cotangent lifts.

A discretization map sends a tangent vector ``(x, v)`` to a pair of nearby
points ``(x0, x1)``.  The theta family

    R_d(x, v) = (x - theta v, x + (1 - theta) v)

covers explicit Euler (theta=0), the midpoint rule (theta=1/2) and implicit
Euler (theta=1).  Its cotangent lift acts on ``(q, p, qdot, pdot)`` and swaps
the roles of theta and 1-theta on the momenta:

    q0 = q - theta qdot        p0 = p - (1 - theta) pdot
    q1 = q + (1 - theta) qdot  p1 = p + theta pdot

The closed form is checked against :func:`lift_by_composition`, which
assembles the lift from the canonical flip, the cotangent lift of the inverse
map and the sign-twisted identification of T*Q x T*Q with T*(Q x Q).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numeric import fd_jacobian, lu_solve, newton

__all__ = [
    "DiscretizationMap", "FunctionDiscretizationMap", "LiftedMap",
    "cotangent_lift", "lift_by_composition", "alpha_q", "alpha_q_inverse",
    "phi", "phi_inverse", "omega_12", "omega_tangent_lift", "canonical_J",
    "verify_lift_symplectomorphism", "verify_discretization_properties",
]


def _vec(x, n: int, what: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if a.shape != (n,):
        raise ValueError(f"{what}: expected a vector of length {n}, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class DiscretizationMap:
    n: int
    theta: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    def apply(self, x, v) -> tuple[np.ndarray, np.ndarray]:
        x, v = _vec(x, self.n, "x"), _vec(v, self.n, "v")
        return x - self.theta * v, x + (1.0 - self.theta) * v

    def invert(self, x0, x1) -> tuple[np.ndarray, np.ndarray]:
        x0, x1 = _vec(x0, self.n, "x0"), _vec(x1, self.n, "x1")
        return (1.0 - self.theta) * x0 + self.theta * x1, x1 - x0

    def jacobian(self, x=None, v=None) -> np.ndarray:
        """d(x0, x1)/d(x, v); constant for the theta family."""
        I = np.eye(self.n)
        return np.block([[I, -self.theta * I], [I, (1.0 - self.theta) * I]])


class FunctionDiscretizationMap:
    """Discretization map given by two component functions ``R1(x, v)``, ``R2(x, v)``.

    No closed-form inverse: :meth:`invert` runs Newton from ``(x0, x1 - x0)``.
    """

    def __init__(self, n: int, r1: Callable, r2: Callable):
        self.n = n
        self.r1 = r1
        self.r2 = r2

    def apply(self, x, v):
        x, v = _vec(x, self.n, "x"), _vec(v, self.n, "v")
        return np.asarray(self.r1(x, v), float), np.asarray(self.r2(x, v), float)

    def _stacked(self, xv):
        x0, x1 = self.apply(xv[: self.n], xv[self.n:])
        return np.concatenate([x0, x1])

    def invert(self, x0, x1):
        x0, x1 = _vec(x0, self.n, "x0"), _vec(x1, self.n, "x1")
        target = np.concatenate([x0, x1])
        guess = np.concatenate([x0, x1 - x0])
        xv, rep = newton(lambda z: self._stacked(z) - target, guess, tol=1e-13)
        if not rep.converged:
            raise ArithmeticError(f"could not invert discretization map: {rep.message}")
        return xv[: self.n], xv[self.n:]

    def jacobian(self, x, v) -> np.ndarray:
        return fd_jacobian(self._stacked, np.concatenate([x, v]), 1e-6)


# ---------------------------------------------------------------- the three symplectomorphisms

def alpha_q(q, v, p_q, p_v):
    """Canonical flip T*TQ -> TT*Q, (q, v, p_q, p_v) -> (q, p_v, v, p_q)."""
    return q, p_v, v, p_q


def alpha_q_inverse(q, p, qdot, pdot):
    """TT*Q -> T*TQ, (q, p, qdot, pdot) -> (q, v=qdot, p_q=pdot, p_v=p)."""
    return q, qdot, pdot, p


def phi(q0, p0, q1, p1):
    """T*Q x T*Q -> T*(Q x Q)."""
    return q0, q1, -p0, p1


def phi_inverse(q0, q1, P0, P1):
    return q0, -P0, q1, P1


def lift_by_composition(d, q, p, qdot, pdot):
    """Evaluate ``Phi^-1 o (T R_d^-1)^* o alpha_Q^-1`` numerically.

    The cotangent lift of ``R_d`` carries a covector ``a`` at ``(x, v)`` to
    the covector ``b`` at ``R_d(x, v)`` with ``DR_d^T b = a``.
    """
    n = d.n
    x, v, a_x, a_v = alpha_q_inverse(q, p, qdot, pdot)
    x0, x1 = d.apply(x, v)
    DR = d.jacobian(x, v)
    b = lu_solve(DR.T, np.concatenate([a_x, a_v]))
    return phi_inverse(x0, x1, b[:n], b[n:])


@dataclass(frozen=True)
class LiftedMap:
    base: DiscretizationMap

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def theta(self) -> float:
        return self.base.theta

    def apply_lift(self, q, p, qdot, pdot):
        n, th = self.n, self.theta
        q, p = _vec(q, n, "q"), _vec(p, n, "p")
        qdot, pdot = _vec(qdot, n, "qdot"), _vec(pdot, n, "pdot")
        return (q - th * qdot, p - (1.0 - th) * pdot,
                q + (1.0 - th) * qdot, p + th * pdot)

    def invert_lift(self, q0, p0, q1, p1):
        n, th = self.n, self.theta
        q0, p0 = _vec(q0, n, "q0"), _vec(p0, n, "p0")
        q1, p1 = _vec(q1, n, "q1"), _vec(p1, n, "p1")
        return ((1.0 - th) * q0 + th * q1, th * p0 + (1.0 - th) * p1,
                q1 - q0, p1 - p0)

    def base_point_weights(self) -> tuple[float, float, float, float]:
        """Weights (wq_k, wq_next, wp_k, wp_next) of the base point in the endpoints."""
        th = self.theta
        return 1.0 - th, th, th, 1.0 - th

    def matrix(self) -> np.ndarray:
        """The linear map (q, p, qdot, pdot) -> (q0, p0, q1, p1)."""
        n, th = self.n, self.theta
        I, Z = np.eye(n), np.zeros((n, n))
        return np.block([
            [I, Z, -th * I, Z],
            [Z, I, Z, -(1 - th) * I],
            [I, Z, (1 - th) * I, Z],
            [Z, I, Z, th * I],
        ])


def cotangent_lift(d: DiscretizationMap) -> LiftedMap:
    if not isinstance(d, DiscretizationMap):
        raise TypeError("closed-form lifts exist only for the theta family; "
                        "use lift_by_composition for general maps")
    return LiftedMap(d)


# ---------------------------------------------------------------- forms

def canonical_J(n: int) -> np.ndarray:
    """Matrix of sum_i dq_i ^ dp_i in coordinates (q, p)."""
    I, Z = np.eye(n), np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def omega_12(n: int) -> np.ndarray:
    """pr2* omega - pr1* omega on (q0, p0, q1, p1)."""
    J = canonical_J(n)
    Z = np.zeros_like(J)
    return np.block([[-J, Z], [Z, J]])


def omega_tangent_lift(W: np.ndarray) -> np.ndarray:
    """Tangent lift d_T of a constant form with matrix ``W``, on (z, zdot)."""
    Z = np.zeros_like(W)
    return np.block([[Z, W], [W, Z]])


def verify_lift_symplectomorphism(
    lift, samples: int = 10, rng: Optional[np.random.Generator] = None, fd_step: float = 1e-6
) -> float:
    """Max |M^T Omega_12 M - d_T omega| over random points, M the FD Jacobian of the lift.

    ``lift`` is anything with ``n`` and ``apply_lift``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    n = lift.n
    target = omega_tangent_lift(canonical_J(n))
    O12 = omega_12(n)

    def f(z):
        return np.concatenate(lift.apply_lift(z[:n], z[n:2 * n], z[2 * n:3 * n], z[3 * n:]))

    worst = 0.0
    for _ in range(samples):
        z = rng.uniform(-2, 2, 4 * n)
        M = fd_jacobian(f, z, fd_step)
        worst = max(worst, float(np.max(np.abs(M.T @ O12 @ M - target))))
    return worst


def verify_discretization_properties(d, x, fd_step: float = 1e-6) -> tuple[float, float]:
    """Residuals of R_d(x, 0) = (x, x) and of T_0 R^2 - T_0 R^1 = Id at ``x``."""
    x = np.asarray(x, float)
    n = x.size
    zero = np.zeros(n)
    x0, x1 = d.apply(x, zero)
    r_zero = float(max(np.max(np.abs(x0 - x)), np.max(np.abs(x1 - x))))

    def diffmap(v):
        a, b = d.apply(x, v)
        return b - a

    D = fd_jacobian(diffmap, zero, fd_step)
    r_id = float(np.max(np.abs(D - np.eye(n))))
    return r_zero, r_id
