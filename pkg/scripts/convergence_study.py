"""Global error against step size for the theta family on the harmonic oscillator.

    python scripts/convergence_study.py --out results/convergence.csv
"""
import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np

from geomint import HamiltonianSystem, DiscretizationMap, cotangent_lift, integrate
from geomint.diagnostics import convergence_order


@dataclass
class StudyConfig:
    thetas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    steps_sizes: tuple = (0.1, 0.05, 0.025, 0.0125, 0.00625)
    final_time: float = 1.0
    q0: float = 1.0
    p0: float = 0.0
    hamiltonian: str = "0.5*p^2 + 0.5*q^2"
    exact: tuple = field(default=None)

    def reference(self):
        if self.exact is not None:
            return np.asarray(self.exact)
        T = self.final_time
        return np.array([self.q0 * np.cos(T) + self.p0 * np.sin(T),
                         -self.q0 * np.sin(T) + self.p0 * np.cos(T)])


def run(cfg: StudyConfig):
    hs = HamiltonianSystem.canonical(cfg.hamiltonian)
    ref = cfg.reference()
    rows = []
    for th in cfg.thetas:
        lift = cotangent_lift(DiscretizationMap(1, th))

        def final_state(h):
            traj = integrate(hs, lift, h, int(round(cfg.final_time / h)), [cfg.q0], [cfg.p0])
            return traj.states[-1]
        res = convergence_order(final_state, cfg.steps_sizes, ref)
        for h, err in zip(res.h, res.errors):
            rows.append((th, h, err, res.slope))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="CSV path (default: stdout)")
    ap.add_argument("--final-time", type=float, default=StudyConfig.final_time)
    args = ap.parse_args(argv)
    rows = run(StudyConfig(final_time=args.final_time))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["theta", "h", "error", "slope"])
    for r in rows:
        w.writerow(["%.17g" % v for v in r])
    if args.out:
        fh.close()
    for th in sorted({r[0] for r in rows}):
        slope = next(r[3] for r in rows if r[0] == th)
        print(f"theta={th:<5g} observed order {slope:.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
