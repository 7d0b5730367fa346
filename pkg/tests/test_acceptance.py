"""Acceptance criteria, one PASS/FAIL line each.

Run directly (``python tests/test_acceptance.py``) or through pytest; the
summary lines are written to the terminal in both cases.
"""
import sys
import time

import numpy as np
import pytest

from geomint import expr as ex
from geomint.diagnostics import (
    constraint_drift, convergence_order, energy_drift, graph_lagrangian_check,
    lagrangian_check, presymplectic_residual, symplecticity_residual,
)
from geomint.hamiltonian import HamiltonianSystem, integrate, symplectic_step
from geomint.maps import DiscretizationMap, cotangent_lift, lift_by_composition, verify_lift_symplectomorphism
from geomint.ocp import (
    Regularity, build_pontryagin, classify_regularity, constraint_algorithm, integrate_ocp,
    morse_family_check, ocp_step_residual, presymplectic_step, reduced_hamiltonian, tangency_residuals,
)

from conftest import cascade_example, lqr_example, singular_example
from linalg_cases import (
    lagrangian_in_normal_form, non_lagrangian_in_normal_form, presymplectic_form,
    random_invertible, random_symplectic,
)

THETAS = (0.0, 0.25, 0.5, 1.0)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.2f}s < {limit}s]"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


# 1 ---------------------------------------------------------------------------

def test_criterion_1_lift_reproduction(report):
    t0 = time.perf_counter()
    q, p, qd, pd = (ex.Var(s) for s in ("q", "p", "qdot", "pdot"))
    half = ex.Const(0.5)
    closed = [q - half * qd, p - half * pd, q + half * qd, p + half * pd]
    lift = cotangent_lift(DiscretizationMap(1, 0.5))
    rng = np.random.default_rng(1)
    exact = True
    for _ in range(20):
        pt = rng.uniform(-3, 3, 4)
        got = np.concatenate(lift.apply_lift(*pt))
        want = [ex.evaluate(e, dict(zip(("q", "p", "qdot", "pdot"), pt))) for e in closed]
        exact &= bool(np.array_equal(got, want))
    # the symbolic coefficients of the linear map are exactly +-1/2
    M = lift.matrix()
    exact &= set(np.unique(M)) <= {-0.5, 0.0, 0.5, 1.0}
    worst = 0.0
    for th in THETAS:
        d = DiscretizationMap(3, th)
        L = cotangent_lift(d)
        for _ in range(100):
            z = rng.uniform(-2, 2, 12).reshape(4, 3)
            a = np.concatenate(L.apply_lift(*z))
            b = np.concatenate(lift_by_composition(d, *z))
            worst = max(worst, float(np.max(np.abs(a - b))))
    report(1, exact and worst <= 1e-12,
           f"closed-form coefficients exact={exact}; oracle max diff {worst:.2e} (tol 1e-12)",
           time.perf_counter() - t0, 1.0)


# 2 ---------------------------------------------------------------------------

class _UnswappedLift:
    """Same weights on q and p: the momenta are not swapped."""

    def __init__(self, n, theta):
        self.n, self.theta = n, theta

    def apply_lift(self, q, p, qdot, pdot):
        th = self.theta
        return q - th * qdot, p - th * pdot, q + (1 - th) * qdot, p + (1 - th) * pdot


def test_criterion_2_symplectomorphism(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = max(verify_lift_symplectomorphism(cotangent_lift(DiscretizationMap(2, th)), 10, rng)
                for th in np.linspace(0, 1, 11))
    neg = verify_lift_symplectomorphism(_UnswappedLift(2, 0.0), 10, rng)
    report(2, worst <= 1e-8 and neg >= 0.5,
           f"max residual {worst:.2e} (tol 1e-8); unswapped control {neg:.3f} (>= 0.5)",
           time.perf_counter() - t0, 1.0)


# 3 ---------------------------------------------------------------------------

def _random_cubic(rng):
    names = ["q1", "q2", "p1", "p2"]
    terms = ["0.5*p1^2", "0.5*p2^2", "0.5*q1^2", "0.5*q2^2"]
    for i, a in enumerate(names):
        for b in names[i:]:
            for c in names[names.index(b):]:
                terms.append(f"{rng.uniform(-0.1, 0.1):.6f}*{a}*{b}*{c}")
    return HamiltonianSystem(ex.parse(" + ".join(terms)), 2, ("q1", "q2"), ("p1", "p2"))


def test_criterion_3_symplectic_integrator(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    systems = {
        "oscillator": (HamiltonianSystem.canonical("0.5*p^2 + 0.5*q^2"), np.array([0.7, -0.2])),
        "pendulum": (HamiltonianSystem.canonical("0.5*p^2 - cos(q)"), np.array([1.0, 0.3])),
        "cubic": (_random_cubic(rng), np.array([0.3, -0.2, 0.1, 0.25])),
    }
    sympl = 0.0
    for sysname, (hs, z) in systems.items():
        for th in (0.0, 0.5, 1.0):
            lift = cotangent_lift(DiscretizationMap(hs.n, th))
            n = hs.n

            def step(w):
                q1, p1, rep = symplectic_step(hs, lift, 0.1, w[:n], w[n:])
                assert rep.converged, (sysname, th, rep)
                return np.concatenate([q1, p1])
            sympl = max(sympl, symplecticity_residual(step, z))

    ho = systems["oscillator"][0]
    mid = cotangent_lift(DiscretizationMap(1, 0.5))
    traj = integrate(ho, mid, 0.1, 1000, [1.0], [0.0])
    drift = energy_drift(traj, ho)

    T = 1.0
    exact = np.array([np.cos(T), -np.sin(T)])
    hs_ = [0.1, 0.05, 0.025, 0.0125]
    slopes = {}
    for th in (0.0, 0.5, 1.0):
        lift = cotangent_lift(DiscretizationMap(1, th))

        def run(h, lift=lift):
            tr = integrate(ho, lift, h, int(round(T / h)), [1.0], [0.0])
            return tr.states[-1]
        slopes[th] = convergence_order(run, hs_, exact).slope
    ok_slopes = abs(slopes[0.5] - 2) <= 0.15 and abs(slopes[0.0] - 1) <= 0.15 and abs(slopes[1.0] - 1) <= 0.15
    report(3, sympl <= 1e-6 and drift <= 1e-10 and ok_slopes,
           f"symplecticity {sympl:.2e} (tol 1e-6); midpoint drift {drift:.2e} (tol 1e-10); "
           f"slopes {slopes[0.0]:.3f}/{slopes[0.5]:.3f}/{slopes[1.0]:.3f} for theta 0/0.5/1",
           time.perf_counter() - t0, 10.0)


# 4 ---------------------------------------------------------------------------

def test_criterion_4_morse_and_regularity(report):
    t0 = time.perf_counter()
    sing = build_pontryagin(singular_example())
    lqr = build_pontryagin(lqr_example())
    morse = morse_family_check(sing)
    reg_s = classify_regularity(sing)
    reg_l = classify_regularity(lqr)
    ok = (morse.is_morse_at_samples and morse.min_rank == 2 == morse.m
          and reg_s is Regularity.SINGULAR and reg_l is Regularity.REGULAR)
    report(4, ok, f"morse rank {morse.min_rank}/{morse.m}; example {reg_s.value}; LQR {reg_l.value}",
           time.perf_counter() - t0, 1.0)


# 5 ---------------------------------------------------------------------------

def test_criterion_5_constraint_algorithm(report):
    t0 = time.perf_counter()
    sys_ = build_pontryagin(singular_example())
    c = constraint_algorithm(sys_)
    ok_example = (
        list(c.determined) == ["u1"] and c.gauge_controls == ("u2",)
        and [ex.to_str(e) for e in c.psi] == ["y"]
        and c.dimension == 3 and c.omega_f_kernel_dim == 1 and c.kernel_coordinates == ["p_y"]
        and c.determined["u1"] == ex.simplify(ex.parse("p_x - x"))
    )
    cas = build_pontryagin(cascade_example())
    cc = constraint_algorithm(cas)
    secondary = [e for e, lvl in cc.constraints if lvl == 1]
    rng = np.random.default_rng(5)
    pts = np.array([cc.project(z) for z in rng.uniform(-1, 1, (32, 4))])
    on = float(np.max(np.abs([cc.psi_values(z) for z in pts])))
    tang = float(np.max(tangency_residuals(cas, cc, pts)))
    report(5, ok_example and len(secondary) == 1 and tang <= 1e-8 and on <= 1e-12,
           f"example: u1 = {ex.to_str(c.determined['u1'])}, gauge {list(c.gauge_controls)}, "
           f"psi {[ex.to_str(e) for e in c.psi]}, dim {c.dimension}, ker {c.kernel_coordinates}; "
           f"cascade level-1 constraint {[ex.to_str(e) for e in secondary]}, tangency {tang:.1e} at 32 points",
           time.perf_counter() - t0, 2.0)


# 6 ---------------------------------------------------------------------------

def _hand_solved_step(h, x0, px0, py0, u2):
    """Hand-coded linear solve of the midpoint equations for f(x) = x."""
    # (x1 - x0)/h = xb + (pxb - xb) ; (px1 - px0)/h = -pxb + xb + (pxb - xb)
    A = np.array([[1 / h, -0.5], [0.0, 1 / h]])
    rhs = np.array([x0 / h + 0.5 * px0, px0 / h])
    x1, px1 = np.linalg.solve(A, rhs)
    u1 = (px0 + px1) / 2 - (x0 + x1) / 2
    # (py1 - py0)/h = -(py0 + py1)/2 + u2
    py1 = (py0 / h - py0 / 2 + u2) / (1 / h + 0.5)
    return x1, px1, py1, u1


def test_criterion_6_presymplectic_integrator(report):
    t0 = time.perf_counter()
    sys_ = build_pontryagin(singular_example("x"))
    c = constraint_algorithm(sys_)
    lift = cotangent_lift(DiscretizationMap(2, 0.5))
    h = 0.05
    rng = np.random.default_rng(6)
    resid = 0.0
    for _ in range(50):
        x0, px0, py0, u2 = rng.uniform(-1, 1, 4)
        x1, px1, py1, u1 = _hand_solved_step(h, x0, px0, py0, u2)
        r = ocp_step_residual(sys_, c, lift, h, [x0, 0, px0, py0], [x1, 0, px1, py1], [u1], {"u2": u2})
        resid = max(resid, float(np.max(np.abs(r))))

    z0 = ([0.3, 0.0], [0.2, 0.5])
    traj = integrate_ocp(sys_, c, lift, h, 100, *z0)
    drift = constraint_drift(traj, c.psi, sys_.phase_names)

    def step(z):
        q1, p1, _, rep = presymplectic_step(sys_, c, lift, h, z[:2], z[2:])
        assert rep.converged
        return np.concatenate([q1, p1])
    pres = max(presymplectic_residual(step, c, s) for s in traj.states[::25])

    other = integrate_ocp(sys_, c, lift, h, 100, *z0, gauge_schedule={"u2": 1.0})
    S0, S1 = traj.states, other.states
    decouple = float(np.max(np.abs(S0[:, [0, 2]] - S1[:, [0, 2]])))
    py_moves = float(np.max(np.abs(S0[:, 3] - S1[:, 3])))
    report(6, resid <= 1e-12 and drift <= 1e-10 and pres <= 1e-6 and decouple <= 1e-12 and py_moves > 1e-3,
           f"residual on hand-solved tuples {resid:.1e} (1e-12); drift {drift:.1e} (1e-10); "
           f"presymplectic {pres:.1e} (1e-6); (x, p_x) gauge difference {decouple:.1e} (1e-12)",
           time.perf_counter() - t0, 5.0)


# 7 ---------------------------------------------------------------------------

def test_criterion_7_regular_equivalence(report):
    t0 = time.perf_counter()
    sys_ = build_pontryagin(lqr_example())
    c = constraint_algorithm(sys_)
    red = reduced_hamiltonian(sys_, c)
    lift = cotangent_lift(DiscretizationMap(2, 0.5))
    q0, p0 = [1.0, -0.5], [0.3, 0.2]
    a = integrate_ocp(sys_, c, lift, 0.05, 100, q0, p0).states
    b = integrate(red, lift, 0.05, 100, q0, p0).states
    diff = float(np.max(np.abs(a - b)))
    report(7, diff <= 1e-10 and not c.psi,
           f"LQR presymplectic vs reduced symplectic max diff {diff:.1e} (tol 1e-10)",
           time.perf_counter() - t0, 5.0)


# 8 ---------------------------------------------------------------------------

def test_criterion_8_appendix_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    wrong = 0
    cases = 0
    for i in range(120):
        r = int(rng.integers(1, 4))
        k = 0 if i % 3 == 0 else int(rng.integers(1, 3))
        W, B = presymplectic_form(rng, r, k)
        Binv = np.linalg.inv(B)
        if rng.random() < 0.5:
            L, truth = lagrangian_in_normal_form(rng, r, k, int(rng.integers(0, k + 1))), True
        else:
            L, truth = non_lagrangian_in_normal_form(rng, r, k), False
        wrong += bool(lagrangian_check(W, Binv @ L, tol=1e-9)) != truth
        cases += 1
    graph_cases = 0
    for i in range(40):
        n = int(rng.integers(1, 4))
        J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
        if i % 2 == 0:
            S, truth = random_symplectic(rng, n), True
        else:
            S, truth = random_invertible(rng, 2 * n), False
        wrong += bool(graph_lagrangian_check(S, J, J, tol=1e-9)) != truth
        graph_cases += 1
    pull_cases = 0
    for _ in range(40):
        r, k = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        WN, _ = presymplectic_form(rng, r, k)
        LN = lagrangian_in_normal_form(rng, r, k, int(rng.integers(0, k + 1)))
        # L_N is Lagrangian for the normal form; map it into (R^d, W_N) first
        WN0 = np.zeros_like(WN)
        WN0[:2 * r, :2 * r] = np.block([[np.zeros((r, r)), np.eye(r)], [-np.eye(r), np.zeros((r, r))]])
        C = random_invertible(rng, 2 * r + k)
        WN = C.T @ WN0 @ C
        WN = (WN - WN.T) / 2
        LN = np.linalg.solve(C, LN)
        assert lagrangian_check(WN, LN, tol=1e-9)
        Bm = random_invertible(rng, 2 * r + k)
        WM = Bm.T @ WN @ Bm
        WM = (WM - WM.T) / 2
        wrong += not lagrangian_check(WM, np.linalg.solve(Bm, LN), tol=1e-9)
        pull_cases += 1
    report(8, wrong == 0 and cases >= 100,
           f"{cases} Lagrangian cases, {graph_cases} graph cases, {pull_cases} pullback cases; "
           f"false verdicts {wrong}",
           time.perf_counter() - t0, 2.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
