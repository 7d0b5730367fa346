"""Optimal control problems: Pontryagin Hamiltonian, constraint algorithm, presymplectic integrator.

The pipeline for ``qdot = X(q, u)`` with running cost ``F(q, u)``:

1. :func:`build_pontryagin` assembles ``H = <p, X> - F`` and its partials.
2. :func:`morse_family_check` and :func:`classify_regularity` inspect the
   Jacobian of ``dH/du``.
3. :func:`constraint_algorithm` splits ``dH/du = A u + b(q, p)`` (``A``
   constant) into determined controls and state constraints, then keeps
   differentiating the constraints along the dynamics until nothing new
   appears.  The result carries the final constraint manifold, the gauge
   (undetermined) controls and the restricted 2-form.
4. :func:`presymplectic_step` / :func:`integrate_ocp` solve the discrete
   equations obtained from a lifted discretization map, with the optimality
   rows and the constraints imposed at the base point.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .config import SolverConfig
from .hamiltonian import HamiltonianSystem, IntegrationError, Trajectory
from .maps import LiftedMap, canonical_J
from .numeric import NewtonReport, lu_solve, newton, rank

__all__ = [
    "OCPDefinition", "PontryaginSystem", "ConstraintResult", "MorseReport", "Regularity",
    "ScopeError", "EmptyConstraintSetError", "OffManifoldError",
    "build_pontryagin", "morse_family_check", "classify_regularity",
    "constraint_algorithm", "presymplectic_step", "ocp_step_residual",
    "integrate_ocp", "reduced_hamiltonian", "tangency_residuals",
]


class ScopeError(ValueError):
    """The problem lies outside the class the constraint algorithm handles."""


class EmptyConstraintSetError(ArithmeticError):
    pass


class OffManifoldError(ValueError):
    pass


def _default_momenta(states: Sequence[str]) -> tuple[str, ...]:
    out = []
    for s in states:
        if s.startswith("q") and s[1:].isdigit():
            out.append("p" + s[1:])
        else:
            out.append("p_" + s)
    return tuple(out)


@dataclass(frozen=True)
class OCPDefinition:
    X: tuple
    F: ex.Expr
    states: tuple
    controls: tuple
    momenta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "X", tuple(ex.as_expr(x) for x in self.X))
        object.__setattr__(self, "F", ex.as_expr(self.F))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "controls", tuple(self.controls))
        if not self.momenta:
            object.__setattr__(self, "momenta", _default_momenta(self.states))
        if len(self.X) != len(self.states):
            raise ValueError(f"{len(self.X)} dynamics expressions for {len(self.states)} states")
        allowed = set(self.states) | set(self.controls)
        for label, e in [(f"X[{i}]", x) for i, x in enumerate(self.X)] + [("F", self.F)]:
            extra = ex.free_vars(e) - allowed
            if extra:
                raise ValueError(f"{label} depends on undeclared variables {sorted(extra)}")
        names = self.states + self.momenta + self.controls
        if len(set(names)) != len(names):
            raise ValueError(f"variable names clash: {names}")

    @classmethod
    def from_strings(cls, X: Sequence[str], F: str, states: Optional[Sequence[str]] = None,
                     controls: Optional[Sequence[str]] = None, m: Optional[int] = None):
        n = len(X)
        states = tuple(states) if states else tuple(f"q{i + 1}" for i in range(n))
        if controls is None:
            if m is None:
                raise ValueError("give either control names or m")
            controls = tuple(f"u{a + 1}" for a in range(m))
        return cls(tuple(ex.parse(x) for x in X), ex.parse(F), states, tuple(controls))

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.controls)


class PontryaginSystem:
    """``H(q, p, u) = <p, X(q, u)> - F(q, u)`` with cached partials."""

    def __init__(self, ocp: OCPDefinition):
        self.ocp = ocp
        terms: ex.Expr = ex.ZERO
        for p, x in zip(ocp.momenta, ocp.X):
            terms = ex.add(terms, ex.mul(ex.Var(p), x))
        self.H = ex.sub(terms, ocp.F)
        self.dHdq = [ex.diff(self.H, v) for v in ocp.states]
        self.dHdp = [ex.diff(self.H, v) for v in ocp.momenta]
        self.dHdu = [ex.diff(self.H, v) for v in ocp.controls]
        self.d2Hdu2 = ex.jacobian(self.dHdu, ocp.controls)
        self.morse_matrix = ex.jacobian(self.dHdu, self.names)
        names = self.names
        self._dHdu = [ex.compile_expr(e, names) for e in self.dHdu]
        self._morse = [[ex.compile_expr(e, names) for e in row] for row in self.morse_matrix]
        self._H = ex.compile_expr(self.H, names)

    n = property(lambda self: self.ocp.n)
    m = property(lambda self: self.ocp.m)
    states = property(lambda self: self.ocp.states)
    momenta = property(lambda self: self.ocp.momenta)
    controls = property(lambda self: self.ocp.controls)

    @property
    def phase_names(self) -> tuple[str, ...]:
        return self.ocp.states + self.ocp.momenta

    @property
    def names(self) -> tuple[str, ...]:
        return self.ocp.states + self.ocp.momenta + self.ocp.controls

    def energy(self, z, u) -> float:
        return self._H(np.concatenate([z, u]))

    def dHdu_at(self, w) -> np.ndarray:
        return np.array([f(w) for f in self._dHdu])

    def morse_matrix_at(self, w) -> np.ndarray:
        return np.array([[f(w) for f in row] for row in self._morse]).reshape(self.m, len(self.names))


def build_pontryagin(ocp: OCPDefinition) -> PontryaginSystem:
    return PontryaginSystem(ocp)


# ---------------------------------------------------------------- Morse family / regularity

@dataclass
class MorseReport:
    is_morse_at_samples: bool
    min_rank: int
    m: int
    ranks: list
    points: np.ndarray


def _project_critical(sys: PontryaginSystem, w, tol=1e-10):
    """Move ``w = (q, p, u)`` onto ``dH/du = 0``: first in ``u`` only, then jointly."""
    k = 2 * sys.n
    if np.max(np.abs(sys.dHdu_at(w)), initial=0.0) <= 1e-8:
        return w
    u, rep = newton(lambda u: sys.dHdu_at(np.concatenate([w[:k], u])), w[k:], tol=tol,
                    least_squares=True, max_iter=30)
    if rep.converged:
        return np.concatenate([w[:k], u])
    full, rep = newton(sys.dHdu_at, w, tol=tol, least_squares=True, max_iter=30)
    return full if rep.converged else None


def _sample_points(sys, samples, n_samples, seed):
    if samples is not None:
        return np.atleast_2d(np.asarray(samples, float))
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, (n_samples, len(sys.names)))


def morse_family_check(sys: PontryaginSystem, samples=None, n_samples: int = 8,
                       rank_tol: float = 1e-9, seed: int = 0) -> MorseReport:
    """Rank of D(dH/du) = (H_qu, H_pu, H_uu) at points of ``dH/du = 0``.

    ``samples`` are rows ``(q, p, u)``; points not already critical are
    projected by Newton, first in ``u`` and, failing that, in all variables.
    """
    pts = []
    for w in _sample_points(sys, samples, n_samples, seed):
        proj = _project_critical(sys, w)
        if proj is not None:
            pts.append(proj)
    if not pts:
        raise ArithmeticError("no sample point could be projected onto dH/du = 0")
    ranks = [rank(sys.morse_matrix_at(w), rank_tol).rank if sys.m else 0 for w in pts]
    return MorseReport(all(r == sys.m for r in ranks), min(ranks), sys.m, ranks, np.array(pts))


class Regularity(str, enum.Enum):
    REGULAR = "regular"
    SINGULAR = "singular"

    def __str__(self):
        return self.value


def hessian_uu(sys: PontryaginSystem, w) -> np.ndarray:
    names = sys.names
    binding = dict(zip(names, w))
    return np.array([[ex.evaluate(e, binding) for e in row] for row in sys.d2Hdu2]).reshape(sys.m, sys.m)


def classify_regularity(sys: PontryaginSystem, samples=None, n_samples: int = 8,
                        rank_tol: float = 1e-9, seed: int = 0) -> Regularity:
    """Regular iff d2H/du2 has full rank m at every sample."""
    if sys.m == 0:
        return Regularity.REGULAR
    for w in _sample_points(sys, samples, n_samples, seed):
        if rank(hessian_uu(sys, w), rank_tol).rank < sys.m:
            return Regularity.SINGULAR
    return Regularity.REGULAR


# ---------------------------------------------------------------- constraint algorithm

@dataclass
class ConstraintResult:
    """Outcome of the constraint algorithm.

    ``determined`` maps control names to expressions in the phase variables
    and the gauge controls.  ``constraints`` holds ``(psi, level)`` pairs.
    The restricted 2-form is expressed on ``free_coords`` (indices into the
    phase vector ``(q, p)``), which chart the final constraint manifold.
    """

    phase_names: tuple
    controls: tuple
    determined: dict
    determined_level: dict
    gauge_controls: tuple
    constraints: list
    stabilized_at: int
    free_coords: tuple
    dependent_coords: tuple
    omega_f: np.ndarray
    omega_f_kernel_dim: int
    omega_f_kernel: np.ndarray
    witness_points: np.ndarray
    optimality_rows: tuple = ()
    events: list = field(default_factory=list)

    @property
    def psi(self) -> list:
        return [c for c, _ in self.constraints]

    @property
    def dimension(self) -> int:
        return len(self.free_coords)

    @property
    def kernel_coordinates(self) -> list:
        """Names of free coordinates whose unit directions span ker omega_f (when axis-aligned)."""
        names = []
        for col in self.omega_f_kernel.T:
            nz = np.flatnonzero(np.abs(col) > 1e-12)
            if len(nz) == 1:
                names.append(self.phase_names[self.free_coords[nz[0]]])
        return names

    def psi_values(self, z) -> np.ndarray:
        b = dict(zip(self.phase_names, z))
        return np.array([ex.evaluate(c, b) for c in self.psi])

    def psi_jacobian(self, z) -> np.ndarray:
        b = dict(zip(self.phase_names, z))
        return np.array([[ex.evaluate(ex.diff(c, v), b) for v in self.phase_names]
                         for c in self.psi]).reshape(len(self.psi), len(self.phase_names))

    def project(self, z, tol: float = 1e-13) -> np.ndarray:
        """Minimum-norm Newton projection of ``z`` onto all constraints."""
        z = np.asarray(z, float)
        if not self.psi:
            return z.copy()
        out, rep = newton(self.psi_values, z, tol=tol, jacobian=self.psi_jacobian,
                          least_squares=True, max_iter=50)
        if not rep.converged:
            raise EmptyConstraintSetError(f"projection onto the constraint set failed: {rep.message}")
        return out

    def embed(self, xi, z_ref) -> np.ndarray:
        """Point of the constraint manifold with free coordinates ``xi`` near ``z_ref``."""
        z = np.array(z_ref, float)
        z[list(self.free_coords)] = xi
        if not self.dependent_coords:
            return z
        dep = list(self.dependent_coords)

        def res(y):
            zz = z.copy()
            zz[dep] = y
            return self.psi_values(zz)

        def jac(y):
            zz = z.copy()
            zz[dep] = y
            return self.psi_jacobian(zz)[:, dep]

        y, rep = newton(res, z[dep], tol=1e-14, jacobian=jac, least_squares=True)
        if not rep.converged:
            raise EmptyConstraintSetError("cannot embed chart point")
        z[dep] = y
        return z

    def chart(self, z) -> np.ndarray:
        return np.asarray(z, float)[list(self.free_coords)]

    def control_values(self, z, gauge_values) -> dict:
        b = dict(zip(self.phase_names, z))
        b.update(gauge_values)
        out = {g: float(gauge_values[g]) for g in self.gauge_controls}
        for name, e in self.determined.items():
            out[name] = ex.evaluate(e, b)
        return out

    def summary_lines(self) -> list[str]:
        lines = []
        for level in range(self.stabilized_at + 1):
            new_c = [ex.to_str(c) for c, lv in self.constraints if lv == level]
            det = [u for u, lv in self.determined_level.items() if lv == level]
            lines.append(f"level {level}: new constraints [{', '.join(new_c)}]; "
                         f"determined controls [{', '.join(det)}]")
        for u, e in self.determined.items():
            lines.append(f"{u} determined: {u} = {ex.to_str(e)}")
        for g in self.gauge_controls:
            lines.append(f"{g} gauge")
        for c, lv in self.constraints:
            lines.append(f"psi: {ex.to_str(c)} (level {lv})")
        lines.append(f"stabilized at level {self.stabilized_at}; dim P^f = {self.dimension}; "
                     f"dim ker omega_f = {self.omega_f_kernel_dim}")
        return lines


def _affine_split(dHdu: Sequence[ex.Expr], controls: Sequence[str], all_names: Sequence[str]):
    """dH/du = A u + b with A constant; raises ScopeError otherwise."""
    m = len(controls)
    A = np.zeros((m, m))
    for a, row in enumerate(ex.jacobian(dHdu, controls)):
        for c, entry in enumerate(row):
            for v in all_names:
                if not ex.is_zero(ex.diff(entry, v)):
                    raise ScopeError(
                        f"d2H/du2[{a}][{c}] = {ex.to_str(entry)} is not constant; the constraint "
                        "algorithm handles Hamiltonians affine-quadratic in u with constant d2H/du2")
            A[a, c] = ex.evaluate(entry, {v: 0.0 for v in all_names})
    zero_u = {u: ex.ZERO for u in controls}
    b = [ex.subs(e, zero_u) for e in dHdu]
    for e in b:
        if ex.free_vars(e) & set(controls):
            raise ScopeError("dH/du is not affine in the controls")
    return A, b


def _normalize_sign(c: ex.Expr, names, point) -> ex.Expr:
    binding = dict(zip(names, point))
    for v in names:
        g = ex.evaluate(ex.diff(c, v), binding)
        if abs(g) > 1e-12:
            return ex.neg(c) if g < 0 else c
    return c


def _jac_at(cs, names, z):
    b = dict(zip(names, z))
    return np.array([[ex.evaluate(ex.diff(c, v), b) for v in names] for c in cs]).reshape(len(cs), len(names))


def _project_all(cs, names, points, tol=1e-12):
    if not cs:
        return points
    out = []
    for z in points:
        res = lambda zz: np.array([ex.evaluate(c, dict(zip(names, zz))) for c in cs])
        proj, rep = newton(res, z, tol=tol, jacobian=lambda zz: _jac_at(cs, names, zz),
                           least_squares=True, max_iter=60)
        if rep.converged:
            out.append(proj)
    if not out:
        raise EmptyConstraintSetError("the constraint set is possibly empty: no witness point "
                                      "could be projected onto it")
    return np.array(out)


def constraint_algorithm(sys: PontryaginSystem, witness_points=None,
                         config: SolverConfig = SolverConfig(), max_levels: int = 50) -> ConstraintResult:
    """Run the integrability algorithm for ``H`` affine-quadratic in ``u``.

    Level 0 solves ``dH/du = 0`` on the row space of ``A = d2H/du2`` and turns
    the left null space of ``A`` into state constraints.  Each further level
    differentiates the newest constraints along the dynamics: a derivative
    that involves a gauge control determines it, one that does not is kept
    as a new constraint if it raises the rank of the constraint Jacobian at
    the witness points, and must vanish there otherwise.
    """
    names = sys.phase_names
    controls = sys.controls
    n, m = sys.n, sys.m
    A, b = _affine_split(sys.dHdu, controls, sys.names)
    tol = config.rank_tol
    events = []

    if witness_points is None:
        rng = np.random.default_rng(config.seed)
        witness = rng.uniform(-1.0, 1.0, (config.n_witness, 2 * n))
    else:
        witness = np.atleast_2d(np.asarray(witness_points, float))
    ref = witness[0].copy()

    determined: dict[str, ex.Expr] = {}
    det_level: dict[str, int] = {}
    constraints: list[tuple[ex.Expr, int]] = []
    rows: tuple = ()

    if m:
        rr = rank(A, tol)
        rows = tuple(rr.pivot_rows)
        cols = list(rr.pivot_cols)
        gauge = [u for i, u in enumerate(controls) if i not in cols]
        if cols:
            A_rc = A[np.ix_(rows, cols)]
            inv = np.linalg.inv(A_rc)
            gidx = [controls.index(g) for g in gauge]
            # rhs_j = -b_{R_j} - sum_g A_{R_j g} u_g
            rhs = []
            for j, r in enumerate(rows):
                e = ex.neg(b[r])
                for gi, g in zip(gidx, gauge):
                    if A[r, gi] != 0.0:
                        e = ex.sub(e, ex.mul(ex.Const(A[r, gi]), ex.Var(g)))
                rhs.append(e)
            for i, c in enumerate(cols):
                determined[controls[c]] = ex.linear_combination(inv[i], rhs)
                det_level[controls[c]] = 0
        for k in range(rr.cokernel.shape[1]):
            nu = rr.cokernel[:, k]
            psi = ex.linear_combination(nu, b)
            if ex.free_vars(psi):
                constraints.append((_normalize_sign(psi, names, ref), 0))
            elif abs(ex.evaluate(psi, {})) > tol:
                raise EmptyConstraintSetError(f"optimality condition reduces to {ex.to_str(psi)} = 0")
        events.append((0, [c for c, _ in constraints], list(determined)))
    else:
        gauge = []

    witness = _project_all([c for c, _ in constraints], names, witness)
    pending = [c for c, _ in constraints]
    level = 0
    last_change = 0
    while pending:
        level += 1
        if level > max_levels:
            raise ArithmeticError(f"constraint algorithm did not stabilize within {max_levels} levels")
        new_constraints = []
        new_det = []
        for psi in pending:
            dyn_q = [ex.subs(e, determined) for e in sys.dHdp]
            dyn_p = [ex.neg(ex.subs(e, determined)) for e in sys.dHdq]
            dot = ex.ZERO
            for v, f in zip(names, dyn_q + dyn_p):
                dpsi = ex.diff(psi, v)
                if not ex.is_zero(dpsi):
                    dot = ex.add(dot, ex.mul(dpsi, f))
            # coefficient of each remaining gauge control, judged at the witness points
            best, best_mag = None, 0.0
            for g in gauge:
                coef = ex.diff(dot, g)
                if ex.is_zero(coef):
                    continue
                mag = max(abs(ex.evaluate(coef, dict(zip(names, w)))) for w in witness)
                if mag > tol and mag > best_mag:
                    best, best_mag = g, mag
            if best is not None:
                coef = ex.diff(dot, best)
                if ex.free_vars(coef) & set(controls):
                    raise ScopeError("constraint derivative is not affine in the gauge controls")
                sol = ex.neg(ex.div(ex.subs(dot, {best: ex.ZERO}), coef))
                determined = {u: ex.subs(e, {best: sol}) for u, e in determined.items()}
                determined[best] = sol
                det_level[best] = level
                gauge.remove(best)
                new_det.append(best)
                last_change = level
                continue
            current = [c for c, _ in constraints] + new_constraints
            before = max(rank(_jac_at(current, names, w), tol).rank for w in witness)
            after = max(rank(_jac_at(current + [dot], names, w), tol).rank for w in witness)
            if after > before:
                new_constraints.append(_normalize_sign(dot, names, witness[0]))
                last_change = level
            else:
                vals = [abs(ex.evaluate(dot, dict(zip(names, w)))) for w in witness]
                scale = 1.0 + max(np.max(np.abs(w)) for w in witness)
                if max(vals) > 1e-7 * scale:
                    raise EmptyConstraintSetError(
                        f"level {level}: consistency condition {ex.to_str(dot)} = 0 fails on the "
                        "current constraint set; the final set is possibly empty")
        constraints.extend((c, level) for c in new_constraints)
        events.append((level, new_constraints, new_det))
        if new_constraints:
            witness = _project_all([c for c, _ in constraints], names, witness)
        pending = new_constraints

    # restricted 2-form on a coordinate chart of the final manifold
    psis = [c for c, _ in constraints]
    z0 = witness[0]
    if psis:
        G = _jac_at(psis, names, z0)
        rg = rank(G, tol)
        dependent = tuple(sorted(rg.pivot_cols))
    else:
        G = np.zeros((0, 2 * n))
        dependent = ()
    free = tuple(i for i in range(2 * n) if i not in dependent)
    T = np.zeros((2 * n, len(free)))
    for j, fi in enumerate(free):
        T[fi, j] = 1.0
        if dependent:
            Gd = G[:, list(dependent)]
            sol = np.linalg.lstsq(Gd, -G[:, fi], rcond=None)[0]
            T[list(dependent), j] = sol
    J = canonical_J(n)
    omega_f = T.T @ J @ T
    omega_f[np.abs(omega_f) < 1e-14] = 0.0
    if free:
        ro = rank(omega_f, tol)
        kdim, kernel = len(free) - ro.rank, ro.kernel
    else:
        kdim, kernel = 0, np.zeros((0, 0))

    return ConstraintResult(
        phase_names=names, controls=controls, determined=determined, determined_level=det_level,
        gauge_controls=tuple(gauge), constraints=constraints, stabilized_at=last_change,
        free_coords=free, dependent_coords=dependent, omega_f=omega_f,
        omega_f_kernel_dim=kdim, omega_f_kernel=kernel, witness_points=witness,
        optimality_rows=rows, events=events,
    )


def tangency_residuals(sys: PontryaginSystem, cres: ConstraintResult, points, gauge_values=None):
    """|D psi(z) . X(z)| for each final psi at each point, controls from ``cres``."""
    gauge_values = _gauge_dict(cres, gauge_values)
    names = sys.phase_names
    out = []
    for z in np.atleast_2d(points):
        u = cres.control_values(z, gauge_values)
        b = dict(zip(names, z))
        b.update(u)
        X = np.array([ex.evaluate(e, b) for e in sys.dHdp] + [-ex.evaluate(e, b) for e in sys.dHdq])
        if cres.psi:
            out.append(np.abs(cres.psi_jacobian(z) @ X))
    return np.array(out)


def reduced_hamiltonian(sys: PontryaginSystem, cres: ConstraintResult, gauge_values=None) -> HamiltonianSystem:
    """``H(q, p, g(q, p))`` with determined controls and fixed gauge values substituted."""
    gauge_values = _gauge_dict(cres, gauge_values)
    mapping = {u: ex.subs(e, {g: ex.Const(v) for g, v in gauge_values.items()})
               for u, e in cres.determined.items()}
    mapping.update({g: ex.Const(v) for g, v in gauge_values.items()})
    Hr = ex.subs(sys.H, mapping)
    return HamiltonianSystem(Hr, sys.n, sys.states, sys.momenta)


def _gauge_dict(cres: ConstraintResult, gauge_values) -> dict:
    if gauge_values is None:
        return {g: 0.0 for g in cres.gauge_controls}
    if isinstance(gauge_values, Mapping):
        unknown = set(gauge_values) - set(cres.gauge_controls)
        if unknown:
            raise ValueError(f"{sorted(unknown)} are not gauge controls (gauge: {cres.gauge_controls})")
        return {g: float(gauge_values.get(g, 0.0)) for g in cres.gauge_controls}
    vals = list(np.atleast_1d(gauge_values))
    if len(vals) != len(cres.gauge_controls):
        raise ValueError(f"expected {len(cres.gauge_controls)} gauge values")
    return dict(zip(cres.gauge_controls, map(float, vals)))


# ---------------------------------------------------------------- presymplectic integrator

class _Stepper:
    """Compiled residual blocks E(q, p, u) and their Jacobians for one problem."""

    def __init__(self, sys: PontryaginSystem, cres: ConstraintResult):
        self.sys, self.cres = sys, cres
        names = sys.names
        self.n, self.m = sys.n, sys.m
        self.det_names = [u for u in sys.controls if u in cres.determined]
        self.det_idx = [sys.controls.index(u) for u in self.det_names]
        self.gauge_idx = [sys.controls.index(g) for g in cres.gauge_controls]
        level0_rows = [sys.dHdu[r] for r in cres.optimality_rows]
        later = [ex.sub(ex.Var(u), cres.determined[u]) for u in self.det_names
                 if cres.determined_level[u] > 0]
        blocks = list(sys.dHdp) + list(sys.dHdq) + level0_rows + later + cres.psi
        self.n_opt = len(level0_rows) + len(later)
        self.n_psi = len(cres.psi)
        self._E = [ex.compile_expr(e, names) for e in blocks]
        self._DE = [[ex.compile_expr(ex.diff(e, v), names) for v in names] for e in blocks]

    def full_u(self, u_det, gauge: dict) -> np.ndarray:
        u = np.zeros(self.m)
        u[self.det_idx] = u_det
        for i, g in zip(self.gauge_idx, self.cres.gauge_controls):
            u[i] = gauge[g]
        return u

    def split(self, y):
        n = self.n
        return y[:n], y[n:2 * n], y[2 * n:]

    def residual(self, lift: LiftedMap, h, zk, y, gauge):
        n = self.n
        q1, p1, u_det = self.split(y)
        qb, pb, qd, pd = lift.invert_lift(zk[:n], zk[n:], q1, p1)
        w = np.concatenate([qb, pb, self.full_u(u_det, gauge)])
        E = np.array([f(w) for f in self._E])
        return np.concatenate([qd / h - E[:n], pd / h + E[n:2 * n], E[2 * n:]])

    def jacobian(self, lift: LiftedMap, h, zk, y, gauge):
        n = self.n
        q1, p1, u_det = self.split(y)
        qb, pb, _, _ = lift.invert_lift(zk[:n], zk[n:], q1, p1)
        w = np.concatenate([qb, pb, self.full_u(u_det, gauge)])
        DE = np.array([[f(w) for f in row] for row in self._DE]).reshape(len(self._E), 2 * n + self.m)
        _, wq1, _, wp1 = lift.base_point_weights()
        D = np.hstack([DE[:, :n] * wq1, DE[:, n:2 * n] * wp1,
                       DE[:, 2 * n:][:, self.det_idx]])
        sign = np.ones(len(self._E))
        sign[:n] = -1.0
        D = D * sign[:, None]
        D[:2 * n, :2 * n] += np.eye(2 * n) / h
        return D


def _stepper(sys, cres) -> _Stepper:
    cache = cres.__dict__.setdefault("_steppers", {})
    st = cache.get(id(sys))
    if st is None or st.sys is not sys:
        st = _Stepper(sys, cres)
        cache[id(sys)] = st
    return st


def ocp_step_residual(sys: PontryaginSystem, cres: ConstraintResult, lift: LiftedMap, h: float,
                      zk, znext, u, gauge_values=None) -> np.ndarray:
    """Residual of the discrete OCP equations at a candidate tuple.

    ``u`` holds the values of the determined controls in control order.
    Rows: position update, momentum update, optimality rows, constraints.
    """
    st = _stepper(sys, cres)
    y = np.concatenate([np.asarray(znext, float), np.atleast_1d(np.asarray(u, float))])
    return st.residual(lift, h, np.asarray(zk, float), y, _gauge_dict(cres, gauge_values))


def presymplectic_step(sys: PontryaginSystem, cres: ConstraintResult, lift: LiftedMap, h: float,
                       q, p, gauge_values=None, config: SolverConfig = SolverConfig()):
    """One step of the OCP integrator; returns ``(q1, p1, u_k, report)``.

    The discrete system is generally overdetermined but consistent, so it is
    solved by Gauss-Newton; convergence means every row is within tolerance.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    st = _stepper(sys, cres)
    gauge = _gauge_dict(cres, gauge_values)
    n = sys.n
    zk = np.concatenate([np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float))])
    u0 = cres.control_values(zk, gauge)
    u_full = np.array([u0[c] for c in sys.controls])
    b = dict(zip(sys.names, np.concatenate([zk, u_full])))
    X = np.array([ex.evaluate(e, b) for e in sys.dHdp] + [-ex.evaluate(e, b) for e in sys.dHdq])
    guess = np.concatenate([zk + h * X, u_full[st.det_idx]])
    y, rep = newton(
        lambda y: st.residual(lift, h, zk, y, gauge), guess,
        tol=config.newton_tol, max_iter=config.max_iter,
        jacobian=lambda y: st.jacobian(lift, h, zk, y, gauge), least_squares=True,
    )
    if not rep.converged and rep.message == "line search failed":
        rep.message = "inconsistent surplus equations (wrong constraint set?)"
    q1, p1, u_det = st.split(y)
    return q1, p1, st.full_u(u_det, gauge), rep


GaugeSchedule = Union[None, Mapping[str, float], Callable[[int, float], Mapping[str, float]]]


def integrate_ocp(sys: PontryaginSystem, cres: ConstraintResult, lift: LiftedMap, h: float,
                  steps: int, q0, p0, gauge_schedule: GaugeSchedule = None,
                  config: SolverConfig = SolverConfig(), project_tol: float = 1e-6) -> Trajectory:
    """Iterate :func:`presymplectic_step`; ``traj.u[k]`` is the control on step k."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    z = np.concatenate([np.atleast_1d(np.asarray(q0, float)), np.atleast_1d(np.asarray(p0, float))])
    if cres.psi:
        viol = np.max(np.abs(cres.psi_values(z)))
        if viol > project_tol:
            raise OffManifoldError(f"initial point off P^f_H: max |psi| = {viol:.3e}")
        z = cres.project(z)
    n = sys.n
    traj = Trajectory(h)
    traj.append(0.0, z[:n], z[n:])
    for k in range(steps):
        gauge = gauge_schedule(k, k * h) if callable(gauge_schedule) else gauge_schedule
        q1, p1, u, rep = presymplectic_step(sys, cres, lift, h, z[:n], z[n:], gauge, config)
        if not rep.converged:
            raise IntegrationError(k, rep, traj)
        traj.reports.append(rep)
        traj.u.append(u)
        z = np.concatenate([q1, p1])
        traj.append((k + 1) * h, q1, p1)
    return traj
