"""Hamiltonian systems on T*R^n and the symplectic integrator built from a lifted map.

One step solves, for ``z_{k+1} = (q_{k+1}, p_{k+1})``,

    (q_{k+1} - q_k) / h =  dH/dp(qbar, pbar)
    (p_{k+1} - p_k) / h = -dH/dq(qbar, pbar)

with ``(qbar, pbar, qdot, pdot)`` the inverse lift of ``(z_k, z_{k+1})``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .config import SolverConfig
from .maps import LiftedMap
from .numeric import NewtonReport, newton

__all__ = [
    "HamiltonianSystem", "Trajectory", "IntegrationError",
    "vector_field", "symplectic_step", "step_residual", "integrate", "explicit_euler_step",
]


class HamiltonianSystem:
    """Autonomous Hamiltonian ``H(q, p)`` with cached symbolic partials."""

    def __init__(self, H, n: int, q_names: Optional[Sequence[str]] = None,
                 p_names: Optional[Sequence[str]] = None):
        self.H: ex.Expr = ex.as_expr(H)
        self.n = n
        self.q_names = tuple(q_names) if q_names else tuple(f"q{i + 1}" for i in range(n))
        self.p_names = tuple(p_names) if p_names else tuple(f"p{i + 1}" for i in range(n))
        if len(self.q_names) != n or len(self.p_names) != n:
            raise ValueError("need exactly n position and n momentum names")
        names = self.names
        if len(set(names)) != 2 * n:
            raise ValueError(f"duplicate variable names in {names}")
        extra = ex.free_vars(self.H) - set(names)
        if extra:
            raise ValueError(f"H depends on undeclared variables {sorted(extra)}")
        self.dHdq = [ex.diff(self.H, v) for v in self.q_names]
        self.dHdp = [ex.diff(self.H, v) for v in self.p_names]
        grad = self.dHdq + self.dHdp
        self.hessian = ex.jacobian(grad, names)
        self._H = ex.compile_expr(self.H, names)
        self._grad = [ex.compile_expr(g, names) for g in grad]
        self._hess = [[ex.compile_expr(e, names) for e in row] for row in self.hessian]

    @property
    def names(self) -> tuple[str, ...]:
        return self.q_names + self.p_names

    @classmethod
    def canonical(cls, H, n: int = 1) -> "HamiltonianSystem":
        """System with plain names ``q``, ``p`` for n=1, else ``q1..``, ``p1..``."""
        if n == 1:
            return cls(H, 1, ("q",), ("p",))
        return cls(H, n)

    def energy(self, q, p) -> float:
        return self._H(np.concatenate([np.atleast_1d(q), np.atleast_1d(p)]))

    def gradient(self, z) -> np.ndarray:
        return np.array([g(z) for g in self._grad])

    def hess(self, z) -> np.ndarray:
        return np.array([[f(z) for f in row] for row in self._hess])

    def field(self, z) -> np.ndarray:
        g = self.gradient(z)
        n = self.n
        return np.concatenate([g[n:], -g[:n]])


def vector_field(sys: HamiltonianSystem, q, p) -> tuple[np.ndarray, np.ndarray]:
    z = np.concatenate([np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float))])
    if z.size != 2 * sys.n:
        raise ValueError("dimension mismatch")
    f = sys.field(z)
    return f[: sys.n], f[sys.n:]


@dataclass
class Trajectory:
    h: float
    t: list = field(default_factory=list)
    q: list = field(default_factory=list)
    p: list = field(default_factory=list)
    u: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def append(self, t, q, p, u=None):
        self.t.append(float(t))
        self.q.append(np.array(q, dtype=float))
        self.p.append(np.array(p, dtype=float))
        if u is not None:
            self.u.append(np.array(u, dtype=float))

    def __len__(self):
        return len(self.t)

    @property
    def states(self) -> np.ndarray:
        """K x 2n array of (q, p) samples."""
        return np.hstack([np.array(self.q), np.array(self.p)])

    @property
    def newton_iters(self) -> list[int]:
        return [0] + [r.iterations for r in self.reports]


class IntegrationError(RuntimeError):
    def __init__(self, index: int, report: NewtonReport, trajectory: Trajectory):
        super().__init__(f"step {index} failed: {report.message or 'no convergence'} "
                         f"(residual {report.final_residual_norm:.3e})")
        self.index = index
        self.report = report
        self.trajectory = trajectory


def step_residual(sys: HamiltonianSystem, lift: LiftedMap, h: float, zk, znext) -> np.ndarray:
    n = sys.n
    qb, pb, qd, pd = lift.invert_lift(zk[:n], zk[n:], znext[:n], znext[n:])
    f = sys.field(np.concatenate([qb, pb]))
    return np.concatenate([qd, pd]) / h - f


def _step_jacobian(sys, lift, h, zk, znext):
    n = sys.n
    wq0, wq1, wp0, wp1 = lift.base_point_weights()
    qb = wq0 * zk[:n] + wq1 * znext[:n]
    pb = wp0 * zk[n:] + wp1 * znext[n:]
    Hs = sys.hess(np.concatenate([qb, pb]))
    # field = (H_p, -H_q); d(field)/d(qbar,pbar) = [[H_pq, H_pp], [-H_qq, -H_qp]]
    dF = np.vstack([Hs[n:], -Hs[:n]])
    dbar = np.diag(np.concatenate([np.full(n, wq1), np.full(n, wp1)]))
    return np.eye(2 * n) / h - dF @ dbar


def symplectic_step(sys: HamiltonianSystem, lift: LiftedMap, h: float, q, p,
                    config: SolverConfig = SolverConfig()):
    """One step of the lifted-map integrator; returns ``(q1, p1, report)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    if lift.n != sys.n:
        raise ValueError("lift and system dimensions differ")
    zk = np.concatenate([np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float))])
    guess = zk + h * sys.field(zk)
    z, rep = newton(
        lambda z1: step_residual(sys, lift, h, zk, z1), guess,
        tol=config.newton_tol, max_iter=config.max_iter,
        jacobian=lambda z1: _step_jacobian(sys, lift, h, zk, z1),
    )
    return z[: sys.n], z[sys.n:], rep


def explicit_euler_step(sys: HamiltonianSystem, h: float, q, p):
    """Plain forward Euler ``z + h X_H(z)``; not symplectic, used as a negative control."""
    zk = np.concatenate([np.atleast_1d(q), np.atleast_1d(p)]).astype(float)
    z = zk + h * sys.field(zk)
    return z[: sys.n], z[sys.n:]


def integrate(sys: HamiltonianSystem, lift: LiftedMap, h: float, steps: int, q0, p0,
              config: SolverConfig = SolverConfig()) -> Trajectory:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    traj = Trajectory(h)
    q, p = np.atleast_1d(np.asarray(q0, float)), np.atleast_1d(np.asarray(p0, float))
    traj.append(0.0, q, p)
    for k in range(steps):
        q, p, rep = symplectic_step(sys, lift, h, q, p, config)
        if not rep.converged:
            raise IntegrationError(k, rep, traj)
        traj.reports.append(rep)
        traj.append((k + 1) * h, q, p)
    return traj
