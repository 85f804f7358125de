#!/usr/bin/env python3
"""Fitted convergence rate against beta - alpha for the heat-plus-potential problem.

    python3 scripts/rate_sweep.py --cells 32 --betas 0.25 0.5 0.75 1.0 --alpha 0.1
"""
import argparse
import csv
import sys
import time

from trotterkit.heatpot import LaplacianSpec, PotentialSpec, heat_problem
from trotterkit.propagator import DeltaMesh, convergence_report


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--cells", type=int, default=32)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0])
    ap.add_argument("--v1", default="abs_sin2")
    ap.add_argument("--amp1", type=float, default=10.0)
    ap.add_argument("--ladder", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64, 128])
    ap.add_argument("--mesh", type=int, default=8, help="Delta-mesh divisions")
    ap.add_argument("--out", help="optional CSV path")
    args = ap.parse_args(argv)

    lap = LaplacianSpec(1, args.cells)
    mesh = DeltaMesh.uniform(1.0, args.mesh)
    rows = []
    for beta in args.betas:
        if not args.alpha < beta:
            print(f"skip beta={beta}: needs alpha < beta", file=sys.stderr)
            continue
        pot = PotentialSpec(v1=args.v1, amp1=args.amp1, rho="holder", holder_beta=beta)
        p = heat_problem(lap, pot, args.alpha)
        t0 = time.perf_counter()
        rep = convergence_report(p.A, p.fam, args.alpha, beta, args.ladder, mesh=mesh)
        rows.append((beta, beta - args.alpha, rep.fitted_rate, rep.sup_errors[-1],
                     time.perf_counter() - t0))
        print(f"beta {beta:.2f}  beta-alpha {beta - args.alpha:.2f}  fitted {rep.fitted_rate:.3f}"
              f"  last error {rep.sup_errors[-1]:.3e}  ({rows[-1][-1]:.1f} s)")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "beta_minus_alpha", "fitted_rate", "last_sup_error", "seconds"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
