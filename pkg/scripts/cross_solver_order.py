"""Max-norm distance between the measure-side potential and the PSOR obstacle solution under refinement.

For the mixed problem the error is also reported on the coarsest grid's nodes, away from
which the segment tips dominate the all-node maximum.

Usage: python3 scripts/cross_solver_order.py [--a 0.0] [--levels 0.2 0.1 0.05]
"""

import argparse
import math

import numpy as np

from eqmeasure.energy import sample_field
from eqmeasure.geometry import Box, make_curve
from eqmeasure.kernel import ExternalField
from eqmeasure.obstacle import build_problem, psor_solve
from eqmeasure.solver_measure import SolverConfig, solve


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--levels", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    p.add_argument("--grading", choices=["uniform", "cosine"], default="cosine")
    p.add_argument("--omega", type=float, default=1.9)
    args = p.parse_args()

    q = ExternalField.quadratic()
    box = Box.centered(2.0)
    rows = []
    for h in args.levels:
        curve = None
        if args.a > 0:
            curve = make_curve("segment", 2 * int(round(2 / h)) + 1, start=(-1.0, 0.0), end=(1.0, 0.0))
        cfg = SolverConfig(a=args.a, box=box, h=h, m=int(round(4 / h)), curve_grading=args.grading)
        res = solve(cfg, curve, q)
        U = sample_field(res.measure, box, h, near_field="exact")
        psor = psor_solve(build_problem(curve, res.constants, q, box, h, U), omega=args.omega, tol=1e-10)
        d = np.abs(U.values - psor.field.values)
        k = int(round(args.levels[0] / h))
        i, j = np.unravel_index(np.argmax(d), d.shape)
        xs, ys = U.axes
        rows.append((h, float(d.max()), float(d[::k, ::k].max()), psor.sweeps, xs[i], ys[j]))

    print(f"{'hg':>7} {'max all':>10} {'order':>6} {'max coarse':>11} {'order':>6} {'sweeps':>7}  argmax")
    prev = None
    for h, e_all, e_c, sweeps, x, y in rows:
        o1 = o2 = ""
        if prev is not None:
            o1 = f"{math.log2(prev[1] / e_all):6.2f}"
            o2 = f"{math.log2(prev[2] / e_c):6.2f}"
        print(f"{h:7.3f} {e_all:10.3e} {o1:>6} {e_c:11.3e} {o2:>6} {sweeps:7d}  ({x:+.3f}, {y:+.3f})")
        prev = (h, e_all, e_c)


if __name__ == "__main__":
    main()
