"""Command-line experiment runner and report emitters.

    trotterkit run heat1d-default --out results/
    trotterkit run my.yaml --threads 4 --csv-only
    trotterkit audit my.yaml
    trotterkit bounds heat1d-default
    trotterkit show-config
    trotterkit list-presets

Exit status: 0 when every enabled check passes, 1 when a check fails,
2 for configuration errors and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bounds import (BoundReport, check_defect_linear, check_lambda_alpha, check_TkA_bound,
                     check_Zbeta, harmonic_sweep)
from .config import ExperimentConfig
from .errors import (ConfigError, PhaseError, PlotDomainError, PreconditionError,
                     TrotterKitError)
from .evospace import SpaceTimeVector, TimeGrid, correspondence_check, main_equal_check
from .generators import AuditReport, audit, check_A_stability
from .heatpot import LaplacianSpec, PotentialSpec, Problem, heat_problem, scalar_problem
from .propagator import ConvergenceReport, DeltaMesh, ReferenceCache, convergence_report

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

CSV_COLUMNS = ("scheme", "n", "sup_error", "fitted_rate", "theoretical_rate",
               "C_alpha", "L_beta", "stability_M", "pass")
EVOSPACE_TOL = 1e-10


@dataclass
class RunResult:
    convergence: ConvergenceReport | None
    audit: AuditReport | None = None
    bounds: list = field(default_factory=list)
    evospace: list = field(default_factory=list)
    stability_M: float = math.nan
    timings: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    passed: bool = False

    def as_dict(self):
        return {
            "pass": self.passed,
            "checks": dict(self.checks),
            "convergence": self.convergence.as_dict() if self.convergence else None,
            "audit": self.audit.as_dict() if self.audit else None,
            "bounds": [b.as_dict() for b in self.bounds],
            "evospace": list(self.evospace),
            "stability_M": self.stability_M,
            "timings": dict(self.timings),
        }


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Generator and family described by ``cfg``; invalid physics is a config error."""
    try:
        if cfg.problem == "scalar":
            problem = scalar_problem(cfg.scalar_a, cfg.scalar_b, cfg.horizon_T, cfg.alpha)
        else:
            lap = LaplacianSpec(cfg.dimension, cfg.cells_per_axis, cfg.domain_length)
            pot = PotentialSpec(v0=cfg.v0, v1=cfg.v1, rho=cfg.rho, amp0=cfg.amp0,
                                amp1=cfg.amp1, holder_beta=cfg.beta)
            problem = heat_problem(lap, pot, cfg.alpha, cfg.horizon_T)
        problem.fam.require_rate_regime()
        return problem
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from exc


class _Phases:
    """Times each phase and tags failures with its name."""

    def __init__(self):
        self.timings = {}

    def __call__(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except (PhaseError, ConfigError):
            raise
        except (TrotterKitError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PhaseError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0


def run_bounds(problem: Problem, reference: ReferenceCache | None = None) -> list:
    """The four bound validators plus the harmonic-sum sweep."""
    A, fam = problem.A, problem.fam
    ref = reference or ReferenceCache(A, fam)
    out = [
        check_lambda_alpha(A, fam, problem.alpha, reference=ref),
        check_TkA_bound(A, fam, alpha=problem.alpha),
        check_defect_linear(A, fam, problem.alpha, reference=ref),
    ]
    if problem.alpha < problem.beta:
        out.append(check_Zbeta(A, fam, problem.alpha, min(problem.beta, 1.0), reference=ref))
    sweep = harmonic_sweep()
    out.append(BoundReport("harmonic_sums", math.nan, sweep["min_relative_margin"],
                           f"n in [2, {sweep['n_max']}], {len(sweep['betas'])} values of beta",
                           sweep["violations"] == 0, {"violations": sweep["violations"]}))
    return out


def run_evospace(problem: Problem, cfg: ExperimentConfig,
                 reference: ReferenceCache | None = None) -> list:
    A, fam = problem.A, problem.fam
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for m, k, n in cfg.evospace_triples:
        grid = TimeGrid(fam.horizon_T, m)
        me = main_equal_check(A, fam, grid, k, n, tol=cfg.tol, reference=reference)
        worst = 0.0
        for _ in range(cfg.evospace_vectors):
            f = SpaceTimeVector.random(grid, A.dim, rng)
            worst = max(worst, correspondence_check(A, fam, grid, k, n, f)
                        / (1.0 + f.norm()))
        rows.append({"m": m, "k": k, "n": n, "lhs": me.lhs, "rhs": me.rhs, "gap": me.gap,
                     "correspondence": worst,
                     "passed": bool(me.gap <= EVOSPACE_TOL * (1 + me.rhs)
                                    and worst <= EVOSPACE_TOL)})
    return rows


def run(cfg: ExperimentConfig) -> RunResult:
    """Run every enabled phase of an experiment; deterministic given ``cfg``."""
    phase = _Phases()
    problem = phase("setup", build_problem, cfg)
    A, fam = problem.A, problem.fam
    mesh = DeltaMesh.uniform(fam.horizon_T, cfg.mesh_divisions)
    stab = phase("stability", check_A_stability, A, fam, cfg.stability_n_max, mesh,
                 threads=cfg.threads)
    result = RunResult(None, stability_M=stab.M_est)
    result.checks["stability"] = bool(stab.stable)
    ref = ReferenceCache(A, fam, cfg.tol)
    if stab.stable:
        report = phase("convergence", convergence_report, A, fam, problem.alpha, problem.beta,
                       cfg.n_ladder, cfg.scheme, mesh, cfg.tol, cfg.window, cfg.slack,
                       gamma_eps=cfg.gamma_eps, threads=cfg.threads, reference=ref)
        result.convergence = report
        result.checks["rate"] = bool(report.passed)
    if cfg.audit:
        result.audit = phase("audit", audit, A, fam, problem.alpha, problem.beta,
                             n_max=cfg.stability_n_max, delta_mesh=mesh, threads=cfg.threads,
                             stability=stab)
        if result.convergence is not None:
            result.convergence.audit = result.audit
    if cfg.bounds:
        result.bounds = phase("bounds", run_bounds, problem, ref)
        result.checks["bounds"] = all(b.satisfied for b in result.bounds)
    if cfg.evospace:
        result.evospace = phase("evospace", run_evospace, problem, cfg, ref)
        result.checks["evospace"] = all(r["passed"] for r in result.evospace)
    result.timings = phase.timings
    result.passed = all(result.checks.values())
    return result


# -- emitters ----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def emit_csv(result: RunResult, path) -> Path:
    """One row per ladder entry and a final summary row (``n = all``)."""
    path = Path(path)
    rep = result.convergence
    scheme = rep.scheme.value if rep else ""
    au = result.audit
    summary = [scheme, "all", None,
               rep.fitted_rate if rep else None, rep.theoretical_rate if rep else None,
               au.C_alpha if au else None, au.L_beta if au else None,
               result.stability_M, result.passed]
    rows = []
    if rep:
        for n, e in zip(rep.n_values, rep.sup_errors):
            rows.append([scheme, int(n), float(e)] + [None] * 6)
    rows.append(summary)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in rows:
                w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


_W, _H = 560, 400
_ML, _MR, _MT, _MB = 70, 20, 20, 50


def emit_loglog_svg(result, path) -> Path:
    """Log-log plot of sup error against n with the fitted slope line.

    ``result`` is a :class:`RunResult` or a bare :class:`ConvergenceReport`.
    """
    rep = getattr(result, "convergence", result)
    if rep is None:
        raise PlotDomainError("no convergence data to plot")
    n = np.asarray(rep.n_values, float)
    e = np.asarray(rep.sup_errors, float)
    if len(n) < 2:
        raise PlotDomainError(f"log-log plot needs at least 2 points, got {len(n)}")
    if np.any(e <= 0) or np.any(n <= 0) or not np.all(np.isfinite(e)):
        raise PlotDomainError("nonpositive or non-finite errors cannot be drawn on log axes; "
                              "use --csv-only")
    lx, ly = np.log10(n), np.log10(e)
    x0, x1 = lx.min(), lx.max()
    y0, y1 = math.floor(ly.min()), math.ceil(ly.max())
    if y1 == y0:
        y1 = y0 + 1
    pad = 0.05 * (x1 - x0 or 1.0)
    x0, x1 = x0 - pad, x1 + pad

    def X(v):
        return _ML + (v - x0) / (x1 - x0) * (_W - _ML - _MR)

    def Y(v):
        return _H - _MB - (v - y0) / (y1 - y0) * (_H - _MT - _MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" height="{_H - _MT - _MB}" '
           'fill="none" stroke="black"/>']
    for d in range(y0, y1 + 1):
        out.append(f'<line x1="{_ML}" y1="{Y(d):.3f}" x2="{_W - _MR}" y2="{Y(d):.3f}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{_ML - 6}" y="{Y(d) + 4:.3f}" text-anchor="end">1e{d}</text>')
    for v, lv in zip(n, lx):
        out.append(f'<line x1="{X(lv):.3f}" y1="{_H - _MB}" x2="{X(lv):.3f}" '
                   f'y2="{_H - _MB + 5}" stroke="black"/>')
        out.append(f'<text x="{X(lv):.3f}" y="{_H - _MB + 18}" text-anchor="middle">'
                   f'{int(v)}</text>')
    out.append(f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 8}" text-anchor="middle">n</text>')
    out.append(f'<text x="14" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2:.1f})">sup error</text>')
    pts = " ".join(f"{X(a):.3f},{Y(b):.3f}" for a, b in zip(lx, ly))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{X(a):.3f}" cy="{Y(b):.3f}" r="3" fill="#1f77b4"/>')
    rate, const = rep.fitted_rate, rep.fitted_constant
    if math.isfinite(rate) and const > 0:
        fa, fb = lx.min(), lx.max()
        ya, yb = math.log10(const) - rate * fa, math.log10(const) - rate * fb
        out.append(f'<line x1="{X(fa):.3f}" y1="{Y(ya):.3f}" x2="{X(fb):.3f}" y2="{Y(yb):.3f}" '
                   'stroke="#d62728" stroke-dasharray="6 4"/>')
        label = f"slope {-rate:.2f}"
    else:
        label = "exact match"
    out.append(f'<text x="{_W - _MR - 8}" y="{_MT + 16}" text-anchor="end" '
               f'fill="#d62728">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def write_artifacts(result: RunResult, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(result, out / "results.csv")
    if not cfg.csv_only and result.convergence is not None:
        emit_loglog_svg(result, out / "convergence.svg")
    (out / "config.yaml").write_text(cfgmod.dumps(cfg))
    (out / "summary.json").write_text(json.dumps(result.as_dict(), indent=2, default=float) + "\n")
    return out


# -- command line --------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="trotterkit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [("run", "run an experiment"),
                           ("audit", "stability and assumption audit only"),
                           ("bounds", "bound validators only")]:
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="preset name or path to a YAML config")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--slack", type=float)
        sp.add_argument("--csv-only", action="store_true", default=None)
    sub.add_parser("show-config", help="print the defaults table")
    sub.add_parser("list-presets", help="list preset names")
    return p


def _load(args) -> ExperimentConfig:
    cfg = cfgmod.resolve(args.config)
    return cfg.with_overrides(out=args.out, threads=args.threads, seed=args.seed,
                              slack=args.slack, csv_only=args.csv_only)


def _cmd_run(cfg):
    result = run(cfg)
    out = write_artifacts(result, cfg)
    rep = result.convergence
    if rep is not None:
        print(f"scheme {rep.scheme.value}: fitted rate {rep.fitted_rate:.4f}, "
              f"theoretical {rep.theoretical_rate:.4f}, slack {rep.slack}")
    for name, ok in result.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(f"artifacts in {out}")
    return result.passed


def _cmd_audit(cfg):
    phase = _Phases()
    problem = phase("setup", build_problem, cfg)
    mesh = DeltaMesh.uniform(problem.fam.horizon_T, cfg.mesh_divisions)
    rep = phase("audit", audit, problem.A, problem.fam, problem.alpha, problem.beta,
                n_max=cfg.stability_n_max, delta_mesh=mesh, threads=cfg.threads)
    print(json.dumps(rep.as_dict(), indent=2))
    return rep.stable


def _cmd_bounds(cfg):
    phase = _Phases()
    problem = phase("setup", build_problem, cfg)
    reports = phase("bounds", run_bounds, problem, ReferenceCache(problem.A, problem.fam, cfg.tol))
    for b in reports:
        print(f"{b.lemma_id}: {'satisfied' if b.satisfied else 'VIOLATED'} "
              f"(fitted {b.fitted_constant:.6g}, worst ratio {b.worst_ratio:.6g})")
    return all(b.satisfied for b in reports)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "show-config":
        sys.stdout.write(cfgmod.defaults_table())
        return EXIT_PASS
    if args.command == "list-presets":
        for name in sorted(cfgmod.PRESETS):
            print(name)
        return EXIT_PASS
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"run": _cmd_run, "audit": _cmd_audit, "bounds": _cmd_bounds}[args.command]
    try:
        ok = handler(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhaseError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PlotDomainError as exc:
        print(f"numerical failure in phase 'plot': {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
