#!/usr/bin/env python3
"""Sup-errors of the four product schemes on a preset, side by side."""
import argparse

from trotterkit.cli import build_problem
from trotterkit.config import resolve
from trotterkit.propagator import DeltaMesh, ReferenceCache, SchemeKind, error_sweep, fit_rate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default="heat1d-default", help="preset or YAML file")
    ap.add_argument("--cells", type=int, help="override cells_per_axis")
    args = ap.parse_args(argv)

    cfg = resolve(args.config)
    if args.cells:
        cfg = cfg.with_overrides(cells_per_axis=args.cells)
    p = build_problem(cfg)
    mesh = DeltaMesh.uniform(cfg.horizon_T, cfg.mesh_divisions)
    ref = ReferenceCache(p.A, p.fam, cfg.tol)
    table = {s: error_sweep(p.A, p.fam, cfg.n_ladder, s, mesh, cfg.tol, reference=ref)
             for s in SchemeKind}
    print("n".rjust(6) + "".join(s.value.rjust(14) for s in SchemeKind))
    for i, n in enumerate(cfg.n_ladder):
        print(f"{n:6d}" + "".join(f"{table[s][i]:14.4e}" for s in SchemeKind))
    print("rate".rjust(6) + "".join(
        f"{fit_rate(cfg.n_ladder, table[s], cfg.window).rate:14.3f}" for s in SchemeKind))


if __name__ == "__main__":
    main()
