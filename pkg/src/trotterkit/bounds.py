"""Sweeps that measure the constants of the technical estimates behind the rate.

All measurements are made at propagator level: a space-time operator that is
block diagonal after a left shift has the norm of its worst block, so the
``L^2(I, X)`` quantities reduce to ``X``-norms over a mesh of ``(t, t - tau)``.

"No divergence as tau -> 0" is checked with a two-fold rule: the measured
ratio at the smallest ``tau`` may not exceed twice the ratio at the largest.
The default ``tau`` grid starts below ``1 / (2 lambda_min(A))``: for larger
steps both the splitting and the propagator are damped by
``exp(-lambda_min tau)`` and the ratio there says nothing about small ``tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .errors import InsufficientSamplingError, PreconditionError
from .generators import Generator, TimeFamily
from .linops import expm, operator_norm
from .propagator import REFERENCE_TOL, ReferenceCache

#: number of dyadic steps in the default grid ``tau_max * 2^-k``
DEFAULT_TAU_COUNT = 9
#: the default grid starts at the first ``T * 2^-k`` with ``tau * lambda_min(A)`` below this
DAMPING_LIMIT = 0.5
DEFAULT_K_LIST = (1, 2, 4, 8, 16)
DEFAULT_T_POINTS = 9
#: fraction of the Gronwall horizon formula, no closed form is known for it
DEFAULT_SIGMA_ALPHA = 0.25
TREND_FACTOR = 2.0
#: defects below this multiple of the reference tolerance are indistinguishable from zero
NOISE_FACTOR = 10.0


@dataclass
class BoundReport:
    lemma_id: str
    fitted_constant: float
    worst_ratio: float
    grid: str
    satisfied: bool
    constants: dict = field(default_factory=dict)
    profile: list = field(default_factory=list)

    def as_dict(self):
        return {
            "lemma_id": self.lemma_id, "fitted_constant": self.fitted_constant,
            "worst_ratio": self.worst_ratio, "grid": self.grid, "satisfied": self.satisfied,
            "constants": dict(self.constants),
            "profile": [list(map(float, row)) for row in self.profile],
        }


def default_tau_grid(T: float, A: Generator | None = None,
                     count: int = DEFAULT_TAU_COUNT) -> np.ndarray:
    """Dyadic grid ``T * 2^-k`` of ``count`` steps, shifted past the damped regime of ``A``."""
    k0 = 0
    if A is not None:
        lam = float(np.min(np.linalg.eigvals(A.op).real))
        while lam > 0 and T * 2.0 ** -k0 * lam > DAMPING_LIMIT:
            k0 += 1
    return np.array([T * 2.0 ** -(k0 + k) for k in range(count)])


def _tau_grid(fam, tau_grid, A=None):
    g = default_tau_grid(fam.horizon_T, A) if tau_grid is None else np.asarray(tau_grid, float)
    if g.size == 0 or np.any(g <= 0) or np.any(g > fam.horizon_T * (1 + 1e-12)):
        raise PreconditionError("tau_grid must be positive and bounded by T")
    return np.sort(g)[::-1]


def _windows(fam, tau, t_points):
    """Pairs ``(t, t - tau)`` with start times spread over ``[0, T - tau]``."""
    starts = np.linspace(0.0, max(fam.horizon_T - tau, 0.0), t_points)
    return [(float(s + tau), float(s)) for s in starts]


def _prefetch(ref, fam, taus, t_points):
    ref.prefetch([p for tau in taus for p in _windows(fam, tau, t_points)])


def _trend_ok(ratios_by_tau, defects=None, floor=0.0) -> bool:
    # ratios_by_tau is ordered from largest to smallest tau; defects at the
    # reference noise level say nothing about the trend and are skipped
    ratios = np.asarray(ratios_by_tau, float)
    if defects is not None:
        ratios = ratios[np.asarray(defects, float) > floor]
    if len(ratios) < 2:
        return True
    return bool(ratios[-1] <= TREND_FACTOR * ratios[0] + 1e-300)


def _grid_text(taus, t_points, extra=""):
    return (f"tau in {len(taus)} values [{taus.min():.6g}, {taus.max():.6g}], "
            f"{t_points} start times per tau{extra}")


def check_lambda_alpha(A: Generator, fam: TimeFamily, alpha: float, tau_grid=None,
                       t_points: int = DEFAULT_T_POINTS, tol: float = REFERENCE_TOL,
                       reference: ReferenceCache | None = None, q=2) -> BoundReport:
    """Fit ``Lambda_alpha = max tau^alpha ||A^alpha U(t, t - tau)||``."""
    taus = _tau_grid(fam, tau_grid, A)
    ref = reference or ReferenceCache(A, fam, tol)
    _prefetch(ref, fam, taus, t_points)
    Apow = A.power(alpha).pos
    profile = []
    for tau in taus:
        worst = max(float(operator_norm(Apow @ ref(t, s), q)) for t, s in _windows(fam, tau, t_points))
        profile.append((tau, tau ** alpha * worst))
    vals = [v for _, v in profile]
    fitted = max(vals)
    return BoundReport("lambda_alpha", fitted, fitted, _grid_text(taus, t_points),
                       bool(np.all(np.isfinite(vals))), {"Lambda_alpha": fitted}, profile)


def _tk_product(A, fam, cache, s, tau, k):
    ea = cache.setdefault(("a", tau), expm(A.op, tau))
    P = A.op.copy()
    for j in range(1, k + 1):
        P = expm(fam(s + j * tau), tau) @ (ea @ P)
    return P


def check_TkA_bound(A: Generator, fam: TimeFamily, tau_grid=None, k_list=DEFAULT_K_LIST,
                    alpha: float | None = None, t_points: int = 5, q=2) -> BoundReport:
    """Fit ``||T(tau)^k A|| <= c1 / tau^alpha + c2 / (k tau)``.

    ``(c1, c2)`` come from nonnegative least squares on the measured values,
    then both are scaled by the worst measured/bound ratio so the bound holds
    on the whole grid.  Products reaching past ``T`` vanish (nilpotent regime).
    """
    alpha = fam.declared_alpha if alpha is None else alpha
    taus = _tau_grid(fam, tau_grid, A)
    T = fam.horizon_T
    cache = {}
    rows = []
    for tau in taus:
        for k in k_list:
            if k < 1:
                raise PreconditionError("k must be >= 1")
            span = k * tau
            # T(tau)^k vanishes once k tau >= T: its output lives on {t >= k tau}
            if span >= T * (1 - 1e-12):
                meas = 0.0
            else:
                starts = np.linspace(0.0, max(T - span, 0.0), t_points)
                meas = max(float(operator_norm(_tk_product(A, fam, cache, float(s), tau, k), q))
                           for s in starts)
            rows.append((tau, k, meas))
    rows = np.array(rows)
    design = np.column_stack([rows[:, 0] ** -alpha, 1.0 / (rows[:, 1] * rows[:, 0])])
    coef, _ = nnls(design, rows[:, 2])
    shape = design @ coef
    if np.all(shape == 0):
        ratio = 0.0 if np.all(rows[:, 2] == 0) else math.inf
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rows[:, 2] > 0, rows[:, 2] / shape, 0.0)
        ratio = float(np.max(r))
    c1, c2 = (coef * ratio).tolist() if math.isfinite(ratio) else (math.inf, math.inf)
    return BoundReport(
        "TkA", ratio, ratio,
        _grid_text(taus, t_points, f", k in {list(k_list)}"),
        bool(math.isfinite(ratio) and math.isfinite(c1) and math.isfinite(c2)),
        {"c1": c1, "c2": c2, "c1_nnls": float(coef[0]), "c2_nnls": float(coef[1])},
        rows.tolist())


def _defects(A, fam, ref, taus, t_points, left, right, q):
    """``max_t ||left (exp(-tau B(t)) exp(-tau A) - U(t, t - tau)) right||`` per ``tau``."""
    out = []
    for tau in taus:
        ea = expm(A.op, tau)
        worst = 0.0
        for t, s in _windows(fam, tau, t_points):
            D = expm(fam(t), tau) @ ea - ref(t, s)
            if left is not None:
                D = left @ D
            if right is not None:
                D = D @ right
            worst = max(worst, float(operator_norm(D, q)))
        out.append(worst)
    return np.array(out)


def check_defect_linear(A: Generator, fam: TimeFamily, alpha: float, tau_grid=None,
                        t_points: int = DEFAULT_T_POINTS, tol: float = REFERENCE_TOL,
                        reference: ReferenceCache | None = None, q=2) -> BoundReport:
    """Fit ``c`` in ``||(T(tau) - U) A^-alpha|| <= c tau`` and ``||A^-1 (T(tau) - U)|| <= c tau``."""
    taus = _tau_grid(fam, tau_grid, A)
    ref = reference or ReferenceCache(A, fam, tol)
    _prefetch(ref, fam, taus, t_points)
    d1 = _defects(A, fam, ref, taus, t_points, None, A.power(alpha).neg, q)
    d2 = _defects(A, fam, ref, taus, t_points, A.inverse, None, q)
    ratios = np.maximum(d1, d2) / taus
    fitted = float(ratios.max())
    ok = bool(np.all(np.isfinite(ratios))
              and _trend_ok(ratios, np.maximum(d1, d2), NOISE_FACTOR * tol))
    profile = list(zip(taus.tolist(), d1.tolist(), d2.tolist(), ratios.tolist()))
    return BoundReport("defect_linear", fitted, fitted, _grid_text(taus, t_points), ok,
                       {"c": fitted}, profile)


def check_Zbeta(A: Generator, fam: TimeFamily, alpha: float, beta: float, tau_grid=None,
                t_points: int = DEFAULT_T_POINTS, tol: float = REFERENCE_TOL,
                reference: ReferenceCache | None = None, q=2) -> BoundReport:
    """Fit ``Z(beta)`` in ``||A^-1 (T(tau) - U) A^-beta|| <= Z tau^(1+beta)``."""
    if not alpha < beta <= 1:
        raise PreconditionError(f"need alpha < beta <= 1, got alpha={alpha}, beta={beta}")
    taus = _tau_grid(fam, tau_grid, A)
    ref = reference or ReferenceCache(A, fam, tol)
    _prefetch(ref, fam, taus, t_points)
    d = _defects(A, fam, ref, taus, t_points, A.inverse, A.power(beta).neg, q)
    ratios = d / taus ** (1.0 + beta)
    fitted = float(ratios.max())
    ok = bool(np.all(np.isfinite(ratios)) and _trend_ok(ratios, d, NOISE_FACTOR * tol))
    return BoundReport("Zbeta", fitted, fitted, _grid_text(taus, t_points), ok,
                       {"Z_beta": fitted}, list(zip(taus.tolist(), d.tolist(), ratios.tolist())))


# -- appendix: Gronwall-type probe and harmonic sums ---------------------------

def _weakly_singular_integral(ts: np.ndarray, F: np.ndarray, i: int, alpha: float) -> float:
    """``int_0^{t_i} F(s) (t_i - s)^-alpha ds`` with ``F`` piecewise linear.

    Product trapezoid rule: the kernel is integrated exactly on each panel.
    On ``[0, t_0]`` ``F`` is frozen at ``F(t_0)``.
    """
    t = ts[i]
    a = 1.0 - alpha

    def moments(lo, hi):
        # int_lo^hi (t-s)^-alpha ds and int_lo^hi s (t-s)^-alpha ds
        u_lo, u_hi = t - lo, t - hi
        m0 = (u_lo ** a - u_hi ** a) / a
        m1u = (u_lo ** (a + 1) - u_hi ** (a + 1)) / (a + 1)
        return m0, t * m0 - m1u

    m0, _ = moments(0.0, ts[0])
    total = F[0] * m0
    for k in range(i):
        lo, hi = ts[k], ts[k + 1]
        m0, m1 = moments(lo, hi)
        slope = (F[k + 1] - F[k]) / (hi - lo)
        total += (F[k] - slope * lo) * m0 + slope * m1
    return float(total)


@dataclass
class GronwallResult:
    holds: bool
    t0: float
    bound: float
    hypothesis_holds: bool = True
    empirical_t0: float = 0.0
    sigma_alpha: float = DEFAULT_SIGMA_ALPHA


def gronwall_probe(samples, c1: float, c2: float, alpha: float,
                   sigma_alpha: float = DEFAULT_SIGMA_ALPHA, min_samples: int = 8
                   ) -> GronwallResult:
    """Check the Gronwall-type implication on sampled data.

    ``samples`` maps ``t -> F(t)`` (a dict or a pair of arrays).  The
    hypothesis ``F(t) <= c1 t^-alpha + c2 int_0^t F(s)(t-s)^-alpha ds`` is
    tested at every sample; the conclusion ``F(t) t^alpha <= 2 c1`` is tested
    on ``(0, t0)``, ``t0 = sigma_alpha * min(1/c2, (1/c2)^(1/(1-alpha)))``.
    ``empirical_t0`` is the largest sample time up to which the conclusion
    holds without interruption.
    """
    if not 0 < alpha < 1:
        raise PreconditionError("alpha must lie in (0, 1)")
    if c1 <= 0 or c2 <= 0:
        raise PreconditionError("c1 and c2 must be positive")
    if isinstance(samples, dict):
        ts, F = zip(*sorted(samples.items()))
    else:
        ts, F = samples
    ts, F = np.asarray(ts, float), np.asarray(F, float)
    order = np.argsort(ts)
    ts, F = ts[order], F[order]
    if np.any(ts <= 0):
        raise PreconditionError("sample times must be positive")
    t0 = sigma_alpha * min(1.0 / c2, (1.0 / c2) ** (1.0 / (1.0 - alpha)))
    below = ts < t0
    if below.sum() < min_samples:
        raise InsufficientSamplingError(
            f"need at least {min_samples} samples below t0={t0:.6g}, got {int(below.sum())}")
    hyp = np.array([
        F[i] <= c1 * ts[i] ** -alpha + c2 * _weakly_singular_integral(ts, F, i, alpha)
        * (1 + 1e-12) + 1e-300
        for i in range(len(ts))
    ])
    concl = F * ts ** alpha <= 2.0 * c1 * (1 + 1e-12)
    hypothesis_holds = bool(np.all(hyp[below]))
    holds = (not hypothesis_holds) or bool(np.all(concl[below]))
    bad = np.flatnonzero(~concl)
    empirical = float(ts[-1]) if bad.size == 0 else float(ts[bad[0] - 1]) if bad[0] > 0 else 0.0
    return GronwallResult(holds, t0, 2.0 * c1, hypothesis_holds, empirical, sigma_alpha)


@dataclass
class HarmonicResult:
    ineq1: tuple
    ineq2: tuple
    both_hold: bool


def harmonic_sum_checks(n: int, beta: float) -> HarmonicResult:
    """Exact sums ``sum_{m<n} m^-beta`` and ``sum_{m<n} 1/((n-m) m^beta)`` against their bounds."""
    if n < 2 or not 0 <= beta < 1:
        raise PreconditionError("need n >= 2 and beta in [0, 1)")
    lhs1 = math.fsum(m ** -beta for m in range(1, n))
    rhs1 = n ** (1 - beta) / (1 - beta)
    lhs2 = math.fsum(1.0 / ((n - m) * m ** beta) for m in range(1, n))
    rhs2 = 2.0 / ((1 - beta) * n ** beta) + math.log(n) / n ** beta
    return HarmonicResult((lhs1, rhs1), (lhs2, rhs2), lhs1 <= rhs1 and lhs2 <= rhs2)


def harmonic_sweep(n_max: int = 10_000, betas=None) -> dict:
    """Both harmonic inequalities for every ``2 <= n <= n_max`` and each ``beta``.

    Returns the number of violations and the smallest relative margin seen.
    """
    betas = np.round(np.arange(1, 20) * 0.05, 2) if betas is None else np.asarray(betas)
    m = np.arange(1, n_max, dtype=float)
    n = np.arange(2, n_max + 1, dtype=float)
    recip = 1.0 / m
    violations = 0
    margin = math.inf
    for beta in betas:
        pw = m ** -beta
        lhs1 = np.cumsum(pw)[: len(n)]            # sum_{m=1}^{n-1}
        rhs1 = n ** (1 - beta) / (1 - beta)
        # sum_{m=1}^{n-1} (1/(n-m)) m^-beta is a full convolution of 1/j and m^-beta
        lhs2 = np.convolve(recip, pw)[: len(n)]
        rhs2 = 2.0 / ((1 - beta) * n ** beta) + np.log(n) / n ** beta
        violations += int(np.sum(lhs1 > rhs1) + np.sum(lhs2 > rhs2))
        margin = min(margin, float(np.min((rhs1 - lhs1) / rhs1)),
                     float(np.min((rhs2 - lhs2) / rhs2)))
    return {"violations": violations, "min_relative_margin": margin,
            "n_max": n_max, "betas": [float(b) for b in betas]}
