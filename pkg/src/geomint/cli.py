"""Command line front end: ``geomint check|simulate|ocp <file>``.

Exit codes: 0 success, 1 solver failure or failed check, 2 input error,
3 scope refusal.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import expr as ex
from .hamiltonian import HamiltonianSystem, IntegrationError, integrate, symplectic_step
from .maps import (DiscretizationMap, cotangent_lift, lift_by_composition, omega_tangent_lift,
                   canonical_J, verify_discretization_properties, verify_lift_symplectomorphism)
from .ocp import (EmptyConstraintSetError, OCPDefinition, OffManifoldError, Regularity, ScopeError,
                  build_pontryagin, classify_regularity, constraint_algorithm, integrate_ocp,
                  morse_family_check, presymplectic_step, tangency_residuals)
from .problem import ProblemError, ProblemFile, load_problem

log = logging.getLogger("geomint")

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_SCOPE = 0, 1, 2, 3


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return "%.17g" % x


def _write_csv(rows, header, out: Path | None, stream=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    text = buf.getvalue()
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        (stream or sys.stdout).write(text)


class _Checks:
    def __init__(self, stream):
        self.rows = []
        self.failed = False
        self.stream = stream

    def add(self, name, value, threshold, ok, detail, op="<="):
        self.rows.append((name, value, threshold, "true" if ok else "false"))
        if not ok:
            self.failed = True
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})", file=self.stream)

    def info(self, name, value, label):
        self.rows.append((name, value, None, "info"))
        print(f"{name}: {label}", file=self.stream)


def _lift_checks(pf: ProblemFile, checks: _Checks, rng):
    d = DiscretizationMap(pf.n, pf.theta)
    lift = cotangent_lift(d)
    res = verify_lift_symplectomorphism(lift, samples=10, rng=rng)
    checks.add("lift_symplecto", res, 1e-8, res <= 1e-8, f"residual {res:.2e} <= 1e-8")
    worst = 0.0
    for _ in range(10):
        z = rng.uniform(-2, 2, 4 * pf.n)
        args = np.split(z, 4)
        worst = max(worst, float(np.max(np.abs(np.concatenate(lift.apply_lift(*args))
                                               - np.concatenate(lift_by_composition(d, *args))))))
    checks.add("lift_composition", worst, 1e-12, worst <= 1e-12, f"max deviation {worst:.2e} <= 1e-12")
    r0, rid = verify_discretization_properties(d, rng.uniform(-2, 2, pf.n))
    ok = r0 == 0.0 and rid <= 1e-8
    checks.add("discretization_map", max(r0, rid), 1e-8, ok, f"zero section {r0:.1e}, T0R2 - T0R1 - Id {rid:.1e}")
    return lift


def cmd_check(pf: ProblemFile, args) -> int:
    rng = np.random.default_rng(pf.seed)
    checks = _Checks(sys.stdout)
    lift = _lift_checks(pf, checks, rng)
    if pf.kind == "hamiltonian":
        hs = HamiltonianSystem(pf.H, pf.n, pf.states, pf.momenta)
        z0 = np.concatenate([pf.q0, pf.p0])

        def step(z):
            q, p, _ = symplectic_step(hs, lift, pf.h, z[:pf.n], z[pf.n:], pf.solver)
            return np.concatenate([q, p])

        res = dg.symplecticity_residual(step, z0, pf.solver.fd_step)
        checks.add("step_symplectic", res, 1e-6, res <= 1e-6, f"residual {res:.2e} <= 1e-6")
        # graph of the Hamiltonian vector field is Lagrangian in (TT*Q, d_T omega)
        Om = omega_tangent_lift(canonical_J(pf.n))
        L = np.vstack([np.eye(2 * pf.n), dg.fd_jacobian(hs.field, z0, pf.solver.fd_step)])
        rep = dg.lagrangian_check(Om, L, tol=1e-8)
        checks.add("lagrangian", 0.0 if rep else 1.0, 0.0, bool(rep),
                   f"isotropic={rep.is_isotropic}, r={rep.r}, expected {rep.r_expected:g}")
    else:
        sysp = build_pontryagin(OCPDefinition(pf.X, pf.F, pf.states, pf.controls, pf.momenta))
        mr = morse_family_check(sysp, seed=pf.seed, rank_tol=pf.solver.rank_tol)
        checks.add("morse", mr.min_rank, pf.m, mr.is_morse_at_samples, f"rank {mr.min_rank}/{pf.m}", op=">=")
        reg = classify_regularity(sysp, seed=pf.seed, rank_tol=pf.solver.rank_tol)
        checks.info("regularity", 1.0 if reg is Regularity.REGULAR else 0.0, reg.value.upper())
        try:
            cres = constraint_algorithm(sysp, config=pf.solver)
        except ScopeError as exc:
            print(f"constraints: SCOPE ({exc})")
            _emit_check_csv(checks, pf, args)
            return EXIT_SCOPE
        checks.info("constraints", float(len(cres.psi)),
                    f"{len(cres.psi)} [{', '.join(ex.to_str(c) for c in cres.psi)}]; "
                    f"gauge [{', '.join(cres.gauge_controls)}]; dim ker omega_f = {cres.omega_f_kernel_dim}")
        gauge = _gauge_for(pf, cres)
        tang = tangency_residuals(sysp, cres, cres.witness_points, gauge)
        worst = float(np.max(tang)) if tang.size else 0.0
        checks.add("tangency", worst, 1e-8, worst <= 1e-8, f"max |Dpsi . X| = {worst:.1e} at {len(cres.witness_points)} witnesses")
        if cres.dimension:
            Om, L = dg.tangent_model_of_final_dynamics(sysp, cres, cres.witness_points[0], gauge)
            rep = dg.lagrangian_check(Om, L, tol=1e-8)
            checks.add("lagrangian", 0.0 if rep else 1.0, 0.0, bool(rep),
                       f"isotropic={rep.is_isotropic}, r={rep.r}, expected {rep.r_expected:g}")
    _emit_check_csv(checks, pf, args)
    return EXIT_SOLVER if checks.failed else EXIT_OK


def _emit_check_csv(checks, pf, args):
    if args.out:
        _write_csv(checks.rows, ["check_name", "value", "threshold", "pass"],
                   Path(args.out) / f"{pf.name}_check.csv")


def cmd_simulate(pf: ProblemFile, args) -> int:
    if pf.kind != "hamiltonian":
        print(f"error: simulate needs kind = hamiltonian, got {pf.kind}", file=sys.stderr)
        return EXIT_INPUT
    hs = HamiltonianSystem(pf.H, pf.n, pf.states, pf.momenta)
    lift = cotangent_lift(DiscretizationMap(pf.n, pf.theta))
    code = EXIT_OK
    try:
        traj = integrate(hs, lift, pf.h, pf.steps, pf.q0, pf.p0, pf.solver)
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        traj, code = exc.trajectory, EXIT_SOLVER
    iters = traj.newton_iters
    rows = [[t, *z, hs.energy(z[:pf.n], z[pf.n:]), float(iters[k])]
            for k, (t, z) in enumerate(zip(traj.t, traj.states))]
    header = ["t", *pf.states, *pf.momenta, "energy", "newton_iters"]
    out = Path(args.out) / f"{pf.name}_trajectory.csv" if args.out else None
    _write_csv(rows, header, out)
    return code


def _gauge_for(pf: ProblemFile, cres) -> dict:
    ignored = set(pf.gauge) - set(cres.gauge_controls)
    for name in sorted(ignored):
        log.warning("gauge value for %s ignored: the control is determined", name)
    return {g: pf.gauge.get(g, 0.0) for g in cres.gauge_controls}


def cmd_ocp(pf: ProblemFile, args) -> int:
    if pf.kind != "ocp":
        print(f"error: ocp needs kind = ocp, got {pf.kind}", file=sys.stderr)
        return EXIT_INPUT
    report = sys.stdout if args.out else sys.stderr
    sysp = build_pontryagin(OCPDefinition(pf.X, pf.F, pf.states, pf.controls, pf.momenta))
    reg = classify_regularity(sysp, seed=pf.seed, rank_tol=pf.solver.rank_tol)
    try:
        cres = constraint_algorithm(sysp, config=pf.solver)
    except ScopeError as exc:
        print(f"scope error: {exc}", file=sys.stderr)
        return EXIT_SCOPE
    except EmptyConstraintSetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"regularity: {reg.value.upper()}", file=report)
    print(f"constraints: {len(cres.psi)}", file=report)
    for line in cres.summary_lines():
        print(line, file=report)

    lift = cotangent_lift(DiscretizationMap(pf.n, pf.theta))
    gauge = _gauge_for(pf, cres)
    code = EXIT_OK
    try:
        traj = integrate_ocp(sysp, cres, lift, pf.h, pf.steps, pf.q0, pf.p0, gauge, pf.solver)
    except OffManifoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        traj, code = exc.trajectory, EXIT_SOLVER

    n = pf.n

    def step(z):
        q1, p1, _, rep = presymplectic_step(sysp, cres, lift, pf.h, z[:n], z[n:], gauge, pf.solver)
        return np.concatenate([q1, p1])

    psi_fns = [ex.compile_expr(c, sysp.phase_names) for c in cres.psi]
    rows = []
    worst_presym = 0.0
    for k, (t, z) in enumerate(zip(traj.t, traj.states)):
        u = traj.u[k] if k < len(traj.u) else [float("nan")] * pf.m
        presym = float("nan")
        if pf.sample_every > 0 and k % pf.sample_every == 0 and code == EXIT_OK:
            presym = dg.presymplectic_residual(step, cres, z, pf.solver.fd_step)
            worst_presym = max(worst_presym, presym)
        rows.append([t, *z, *u, *[abs(f(z)) for f in psi_fns], presym])
    print(f"max presymplectic residual: {worst_presym:.3e}", file=report)
    if psi_fns:
        drift = max(abs(f(z)) for z in traj.states for f in psi_fns)
        print(f"max constraint drift: {drift:.3e}", file=report)
    header = ["t", *pf.states, *pf.momenta, *pf.controls,
              *[f"abs_psi{i + 1}" for i in range(len(psi_fns))], "presymplectic_residual"]
    out = Path(args.out) / f"{pf.name}_ocp.csv" if args.out else None
    _write_csv(rows, header, out)
    return code


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "ocp": cmd_ocp}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geomint", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("file")
    ap.add_argument("--out", help="directory for CSV output (default: stdout)")
    ap.add_argument("--h", type=float)
    ap.add_argument("--steps", type=int)
    ap.add_argument("--theta", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        pf = load_problem(args.file)
        if args.h is not None:
            if args.h <= 0:
                raise ProblemError("--h must be positive")
            pf.h = args.h
        if args.steps is not None:
            if args.steps < 0:
                raise ProblemError("--steps must be >= 0")
            pf.steps = args.steps
        if args.theta is not None:
            if not 0 <= args.theta <= 1:
                raise ProblemError("--theta must lie in [0, 1]")
            pf.theta = args.theta
        if args.seed is not None:
            pf.seed = args.seed
            pf.solver = dataclasses.replace(pf.solver, seed=args.seed)
        return COMMANDS[args.command](pf, args)
    except ProblemError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ex.EvalDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
