#!/usr/bin/env python3
"""Measured profiles of the four bound validators on a preset.

Prints, per validator, the raw measurement and the normalized ratio for each
tau so the "no divergence as tau -> 0" judgement can be inspected by eye.
"""
import argparse
import json

from trotterkit.cli import build_problem, run_bounds
from trotterkit.config import resolve
from trotterkit.propagator import ReferenceCache


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config", nargs="?", default="heat1d-default")
    ap.add_argument("--json", help="write the reports to this file")
    args = ap.parse_args(argv)

    cfg = resolve(args.config)
    p = build_problem(cfg)
    reports = run_bounds(p, ReferenceCache(p.A, p.fam, cfg.tol))
    for r in reports:
        print(f"\n{r.lemma_id}: fitted {r.fitted_constant:.6g}, "
              f"{'satisfied' if r.satisfied else 'VIOLATED'}  [{r.grid}]")
        for row in r.profile:
            print("   " + "  ".join(f"{v:.4e}" for v in row))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.as_dict() for r in reports], fh, indent=2)


if __name__ == "__main__":
    main()
