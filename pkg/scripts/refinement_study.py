"""Equilibrium constants, energy and support separation of the mixed problem under refinement.

Usage: python3 scripts/refinement_study.py [--a 0.5] [--levels 0.2 0.1 0.05 0.025] [--grading cosine]
"""

import argparse
import time

from eqmeasure.diagnostics import separation_report
from eqmeasure.geometry import Box, make_curve
from eqmeasure.kernel import ExternalField
from eqmeasure.measure import mass_on_curve
from eqmeasure.solver_measure import SolverConfig, solve


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    p.add_argument("--grading", choices=["uniform", "cosine"], default="cosine")
    args = p.parse_args()

    q = ExternalField.quadratic()
    print(f"{'h':>7} {'m':>5} {'I':>12} {'A_gamma':>10} {'A_0':>10} {'margin':>8} {'sep':>6} {'mu(G)':>6} "
          f"{'iters':>7} {'sec':>6}")
    for h in args.levels:
        m = int(round(4 / h))
        curve = make_curve("segment", 2 * int(round(2 / h)) + 1, start=(-1.0, 0.0), end=(1.0, 0.0))
        t0 = time.perf_counter()
        res = solve(SolverConfig(a=args.a, box=Box.centered(2.0), h=h, m=m, curve_grading=args.grading), curve, q)
        dt = time.perf_counter() - t0
        c = res.constants
        sep = separation_report(res.measure, curve)
        margin = c.A_gamma - c.A_0 if c.A_gamma is not None and c.A_0 is not None else float("nan")
        print(f"{h:7.3f} {m:5d} {res.energy:12.8f} {c.A_gamma or float('nan'):10.6f} {c.A_0 or float('nan'):10.6f} "
              f"{margin:8.5f} {sep.distance or float('nan'):6.3f} {mass_on_curve(res.measure):6.3f} "
              f"{int(res.trace[-1, 0]):7d} {dt:6.1f}")


if __name__ == "__main__":
    main()
