"""Numerical checks of the preservation properties.

All form checks work on constant-coefficient forms (Q = R^n), so a finite
difference Jacobian of one step tested against the form matrix is exact up
to FD noise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .maps import canonical_J
from .numeric import DEFAULT_RANK_TOL, fd_jacobian, rank

__all__ = [
    "FormMatrix", "SubspaceBasis", "LagrangianReport", "GraphCheck", "ConvergenceResult",
    "symplecticity_residual", "presymplectic_residual", "energy_drift", "constraint_drift",
    "lagrangian_check", "graph_lagrangian_check", "convergence_order", "tangent_model_of_final_dynamics",
]

log = logging.getLogger(__name__)


def FormMatrix(data) -> np.ndarray:
    """Validated antisymmetric matrix of a constant 2-form."""
    a = np.array(data, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("a form matrix must be square")
    if not np.array_equal(a, -a.T):
        raise ValueError("a form matrix must be exactly antisymmetric")
    return a


def SubspaceBasis(columns) -> np.ndarray:
    """d x r matrix whose columns span a subspace."""
    return np.atleast_2d(np.asarray(columns, dtype=float))


def _step_jacobian(step, z, fd_step):
    return fd_jacobian(lambda x: np.asarray(step(x), float), np.asarray(z, float), fd_step)


def symplecticity_residual(step: Callable, z, fd_step: float = 1e-6) -> float:
    """``||M^T J M - J||_inf`` for the FD Jacobian ``M`` of ``step`` at ``z``."""
    z = np.asarray(z, float)
    J = canonical_J(z.size // 2)
    M = _step_jacobian(step, z, fd_step)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def presymplectic_residual(step: Callable, cres, z, fd_step: float = 1e-6,
                           on_tol: float = 1e-8) -> float:
    """``||M^T Omega_f M - Omega_f||_inf`` in the chart of the final constraint manifold.

    ``step`` maps a full phase point to the next one; perturbations move
    only the free coordinates and are re-embedded onto the constraints.
    """
    z = np.asarray(z, float)
    if cres.psi:
        viol = float(np.max(np.abs(cres.psi_values(z))))
        if viol > on_tol:
            raise ValueError(f"point is off the constraint set (max |psi| = {viol:.3e})")

    def chart_step(xi):
        return cres.chart(step(cres.embed(xi, z)))

    M = _step_jacobian(chart_step, cres.chart(z), fd_step)
    W = cres.omega_f
    return float(np.max(np.abs(M.T @ W @ M - W), initial=0.0))


def energy_drift(traj, H) -> float:
    """max_k |H(z_k) - H(z_0)| for a trajectory and a Hamiltonian system or callable."""
    Z = traj.states
    energy = H.energy if hasattr(H, "energy") else H
    n = Z.shape[1] // 2
    E = np.array([energy(z[:n], z[n:]) for z in Z])
    return float(np.max(np.abs(E - E[0])))


def constraint_drift(traj, psi: Sequence, names: Sequence[str]) -> float:
    if not psi:
        return 0.0
    fns = [ex.compile_expr(c, names) for c in psi]
    return float(max(abs(f(z)) for z in traj.states for f in fns))


# ---------------------------------------------------------------- linear presymplectic geometry

@dataclass
class LagrangianReport:
    is_isotropic: bool
    dim_ok: bool
    r_expected: float
    r: int
    kernel_dim: int
    intersection_dim: int

    @property
    def is_lagrangian(self) -> bool:
        return self.is_isotropic and self.dim_ok

    def __bool__(self):
        return self.is_lagrangian


def lagrangian_check(omega, L, tol: float = 1e-12, rank_tol: float = DEFAULT_RANK_TOL) -> LagrangianReport:
    """Isotropy plus the presymplectic dimension count
    ``r = (d - dim ker omega) / 2 + dim(L cap ker omega)``.

    The isotropy tolerance is relative to ``||omega|| ||L||^2``.
    """
    W = np.asarray(omega, float)
    L = SubspaceBasis(L)
    d = W.shape[0]
    if L.shape[0] != d:
        raise ValueError(f"basis vectors have length {L.shape[0]}, form has dimension {d}")
    scale = max(1.0, np.max(np.abs(W), initial=0.0) * np.max(np.abs(L), initial=0.0) ** 2)
    iso = bool(float(np.max(np.abs(L.T @ W @ L), initial=0.0)) <= tol * scale)
    r = rank(L, rank_tol).rank if L.size else 0
    K = rank(W, rank_tol).kernel
    k = K.shape[1]
    if r and k:
        s = r + k - rank(np.hstack([L, K]), rank_tol).rank
    else:
        s = 0
    r_expected = (d - k) / 2 + s
    return LagrangianReport(iso, bool(r == r_expected), r_expected, r, k, s)


@dataclass
class GraphCheck:
    is_presymplectic: bool
    lagrangian: LagrangianReport | None

    def __bool__(self):
        return self.is_presymplectic and bool(self.lagrangian)


def graph_lagrangian_check(f, omega_M, omega_N, tol: float = 1e-10) -> GraphCheck:
    """Graph of a linear presymplectic map is Lagrangian in (M x N, omega_M - omega_N)."""
    F = np.atleast_2d(np.asarray(f, float))
    WM = np.asarray(omega_M, float)
    WN = np.asarray(omega_N, float)
    pulled = F.T @ WN @ F
    scale = max(1.0, np.max(np.abs(pulled)), np.max(np.abs(WM)))
    if np.max(np.abs(pulled - WM)) > tol * scale:
        log.info("map is not presymplectic: |f^T omega_N f - omega_M| = %.3e",
                 np.max(np.abs(pulled - WM)))
        return GraphCheck(False, None)
    m = F.shape[1]
    basis = np.vstack([np.eye(m), F])
    Z = np.zeros((WM.shape[0], WN.shape[1]))
    W = np.block([[WM, Z], [Z.T, -WN]])
    return GraphCheck(True, lagrangian_check(W, basis, tol=tol))


def tangent_model_of_final_dynamics(sys, cres, z, gauge_values=None, fd_step: float = 1e-6):
    """Tangent model of the final dynamics inside (TP^f, d_T omega_f).

    Returns ``(Omega, L)``: ``Omega`` is the matrix of the tangent lift of
    ``omega_f`` on (chart, chart velocities) and ``L`` spans the tangent space
    at ``z`` of the set of admissible velocities, parametrised by the chart
    coordinates and the gauge controls.
    """
    from .ocp import _gauge_dict
    from .maps import omega_tangent_lift

    gauge = _gauge_dict(cres, gauge_values)
    gnames = list(cres.gauge_controls)
    names = sys.phase_names
    nf = cres.dimension

    def point(params):
        xi, gv = params[:nf], params[nf:]
        zz = cres.embed(xi, z)
        gd = dict(zip(gnames, gv))
        u = cres.control_values(zz, gd)
        b = dict(zip(names, zz))
        b.update(u)
        X = np.array([ex.evaluate(e, b) for e in sys.dHdp] + [-ex.evaluate(e, b) for e in sys.dHdq])
        return np.concatenate([xi, X[list(cres.free_coords)]])

    params = np.concatenate([cres.chart(z), [gauge[g] for g in gnames]])
    L = fd_jacobian(point, params, fd_step)
    L[np.abs(L) < 1e-9] = 0.0
    return omega_tangent_lift(cres.omega_f), L


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceResult:
    slope: float
    h: np.ndarray
    errors: np.ndarray
    degenerate: bool = False


def convergence_order(run: Callable[[float], np.ndarray], h_list: Sequence[float], reference) -> ConvergenceResult:
    """Least-squares slope of log(error) against log(h).

    ``run(h)`` returns the final state of a run with step ``h``;
    ``reference`` is the exact final state or a callable of ``h``.
    """
    h = np.asarray(h_list, float)
    if h.size < 3:
        raise ValueError("need at least 3 step sizes")
    errs = []
    for hh in h:
        ref = reference(hh) if callable(reference) else reference
        errs.append(float(np.max(np.abs(np.asarray(run(hh)) - np.asarray(ref)))))
    errs = np.array(errs)
    if np.any(errs == 0.0):
        return ConvergenceResult(float("nan"), h, errs, degenerate=True)
    slope = float(np.polyfit(np.log(h), np.log(errs), 1)[0])
    return ConvergenceResult(slope, h, errs)
