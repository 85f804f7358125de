"""Generators, time-dependent families and numeric audits of their assumptions.

The constants audited here (relative bound ``C_alpha``, Hoelder constant
``L_beta``, adjoint bound ``C_1*`` and the A-stability constant) are essential
suprema in the continuous theory.  Here every one of them is a maximum over a
declared mesh, hence a lower bound of the true value.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import MeshError, PreconditionError
from .linops import as_square, dual_exponent, expm, frac_power, operator_norm
from .parallel import parallel_map

#: uniform points in [0, T] used for single-time audits
DEFAULT_T_POINTS = 65
#: default largest step count for the A-stability sweep
DEFAULT_N_MAX = 64
#: stability cap is this multiple of the free-semigroup bound
STABILITY_CAP_FACTOR = 10.0


class ClassBoundWarning(UserWarning):
    """A sampled ``exp(-tau B(t))`` exceeds its declared class bound ``M e^(w tau)``."""


@dataclass(frozen=True, eq=False)
class Generator:
    """A matrix ``A`` standing in for a generator of class G(M, gamma)."""

    op: np.ndarray
    class_M: float = 1.0
    class_gamma: float = 0.0
    holomorphic: bool = True

    def __post_init__(self):
        op = as_square(self.op, "generator")
        object.__setattr__(self, "op", op)
        if self.class_M < 1:
            raise PreconditionError(f"class_M must be >= 1, got {self.class_M}")
        if self.holomorphic:
            ev = np.linalg.eigvals(op)
            if np.any(ev.real <= 0):
                raise PreconditionError(
                    "holomorphic generator needs a spectrum in Re > 0; "
                    f"min Re(lambda) = {ev.real.min():.6g}")

    @property
    def dim(self) -> int:
        return self.op.shape[0]

    @cached_property
    def _powers(self):
        return {}

    def power(self, alpha: float):
        """Cached ``frac_power(op, alpha)``."""
        key = float(alpha)
        if key not in self._powers:
            self._powers[key] = frac_power(self.op, key)
        return self._powers[key]

    @cached_property
    def inverse(self) -> np.ndarray:
        try:
            return np.linalg.inv(self.op)
        except np.linalg.LinAlgError as exc:
            raise PreconditionError("generator is singular") from exc

    def semigroup(self, tau: float) -> np.ndarray:
        return expm(self.op, tau)


@dataclass(frozen=True, eq=False)
class TimeFamily:
    """A map ``t -> B(t)`` on ``[0, T]`` with declared regularity exponents.

    ``class_M``/``class_omega`` optionally declare the common semigroup class
    of the ``B(t)``; with ``strict_class`` set, :func:`check_family_class`
    turns violations into errors instead of warnings.
    """

    horizon_T: float
    sampler: Callable[[float], np.ndarray]
    declared_beta: float = 1.0
    declared_alpha: float = 0.0
    dim: int | None = None
    class_M: float | None = None
    class_omega: float = 0.0
    strict_class: bool = False
    name: str = ""

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise PreconditionError("horizon_T must be positive")
        if not 0 < self.declared_beta <= 1:
            raise PreconditionError("declared_beta must lie in (0, 1]")
        if not 0 <= self.declared_alpha < 1:
            raise PreconditionError("declared_alpha must lie in [0, 1)")

    def __call__(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon_T * (1 + 1e-12):
            raise PreconditionError(f"t={t} outside [0, {self.horizon_T}]")
        B = as_square(self.sampler(t), "B(t)")
        if self.dim is not None and B.shape[0] != self.dim:
            raise PreconditionError(f"B({t}) has dimension {B.shape[0]}, expected {self.dim}")
        return B

    def scaled(self, c: float) -> "TimeFamily":
        s = self.sampler
        return TimeFamily(self.horizon_T, lambda t: c * np.asarray(s(t)),
                          self.declared_beta, self.declared_alpha, self.dim,
                          name=f"{c}*{self.name}")

    def require_rate_regime(self):
        if not self.declared_alpha < self.declared_beta:
            raise PreconditionError(
                f"rate machinery needs alpha < beta, got alpha={self.declared_alpha}, "
                f"beta={self.declared_beta}")


def constant_family(B, T: float = 1.0, **kwargs) -> TimeFamily:
    B = as_square(B, "B")
    return TimeFamily(T, lambda t: B, dim=B.shape[0], **kwargs)


@dataclass
class StabilityResult:
    stable: bool
    M_est: float
    cap: float
    n_max: int
    attained: tuple = ()


@dataclass
class AuditReport:
    """Grid maxima of the assumption constants (lower bounds of the ess-sups)."""

    C_alpha: float
    L_beta: float
    C_1_star: float
    stability_M: float
    grids_used: dict = field(default_factory=dict)
    # measurability and domain assumptions hold trivially for matrices
    vacuous_assumptions: tuple = ("A2", "A4")
    stable: bool = True

    def as_dict(self):
        return {
            "C_alpha": self.C_alpha, "L_beta": self.L_beta, "C_1_star": self.C_1_star,
            "stability_M": self.stability_M, "stable": self.stable,
            "grids_used": self.grids_used,
            "vacuous_assumptions": list(self.vacuous_assumptions),
        }


def default_t_grid(T: float, points: int = DEFAULT_T_POINTS) -> np.ndarray:
    return np.linspace(0.0, T, points)


def default_pair_grid(T: float, points: int = DEFAULT_T_POINTS) -> np.ndarray:
    """All pairs ``t > s`` from the uniform ``points``-grid (64*65/2 by default)."""
    g = default_t_grid(T, points)
    i, j = np.triu_indices(points, k=1)
    return np.column_stack([g[j], g[i]])


def relative_bound_Calpha(A: Generator, fam: TimeFamily, alpha: float, t_grid=None,
                          q=2, threads: int = 1) -> float:
    """``max_t ||B(t) A^-alpha||`` over ``t_grid``."""
    t_grid = default_t_grid(fam.horizon_T) if t_grid is None else np.asarray(t_grid, float)
    neg = A.power(alpha).neg
    vals = parallel_map(lambda t: float(operator_norm(fam(t) @ neg, q)), t_grid, threads)
    return max(vals, default=0.0)


def holder_constant_Lbeta(A: Generator, fam: TimeFamily, alpha: float, beta: float,
                          pair_grid=None, q=2, threads: int = 1) -> float:
    """``max ||A^-1 (B(t) - B(s)) A^-alpha|| / |t - s|^beta`` over sampled pairs."""
    pairs = default_pair_grid(fam.horizon_T) if pair_grid is None else np.asarray(pair_grid, float)
    pairs = pairs.reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise MeshError("pair mesh contains a coincident pair t == s")
    left = A.inverse
    right = A.power(alpha).neg
    cache = {}

    def B(t):
        if t not in cache:
            cache[t] = fam(t)
        return cache[t]

    for t in np.unique(pairs):
        B(float(t))

    def quotient(pair):
        t, s = float(pair[0]), float(pair[1])
        D = left @ (B(t) - B(s)) @ right
        return float(operator_norm(D, q)) / abs(t - s) ** beta

    return max(parallel_map(quotient, pairs, threads), default=0.0)


def adjoint_bound_C1star(A: Generator, fam: TimeFamily, t_grid=None, q=2,
                         threads: int = 1) -> float:
    """``max_t ||B(t)^H (A^H)^-1||`` measured in the dual exponent of ``q``."""
    t_grid = default_t_grid(fam.horizon_T) if t_grid is None else np.asarray(t_grid, float)
    try:
        inv_adj = np.linalg.inv(A.op.conj().T)
    except np.linalg.LinAlgError as exc:
        raise PreconditionError("generator is singular") from exc
    qd = dual_exponent(q)
    vals = parallel_map(lambda t: float(operator_norm(fam(t).conj().T @ inv_adj, qd)),
                        t_grid, threads)
    return max(vals, default=0.0)


class _FactorCache:
    """Memoizes ``exp(-h A)`` and ``exp(-h B(t))`` during a sweep."""

    def __init__(self, A: Generator, fam: TimeFamily):
        self.A = A
        self.fam = fam
        self._a = {}
        self._b = {}

    def a(self, h):
        if h not in self._a:
            self._a[h] = expm(self.A.op, h)
        return self._a[h]

    def b(self, h, t):
        key = (h, t)
        if key not in self._b:
            self._b[key] = expm(self.fam(t), h)
        return self._b[key]


def _product_norm(cache: _FactorCache, t: float, s: float, n: int, m: int, q) -> float:
    # || prod_{j=1..m} exp(-h B(s + j h)) exp(-h A) ||, h = (t - s)/n, j ascending right-to-left
    h = (t - s) / n
    ea = cache.a(h)
    P = np.eye(cache.A.dim)
    for j in range(1, m + 1):
        P = cache.b(h, s + j * h) @ (ea @ P)
    return float(operator_norm(P, q))


def _delta_pairs(mesh, T):
    if mesh is None:
        from .propagator import DeltaMesh
        mesh = DeltaMesh.uniform(T)
    return np.asarray(getattr(mesh, "points", mesh), dtype=float).reshape(-1, 2)


def check_A_stability(A: Generator, fam: TimeFamily, n_max: int = DEFAULT_N_MAX,
                      delta_mesh=None, q=2, cap=None, threads: int = 1) -> StabilityResult:
    """Largest product norm ``||prod_j G_j(t,s;n)||`` over the mesh and ``n <= n_max``.

    ``cap`` defaults to ten times ``max(1, sup ||exp(-(t-s) A)||)`` on the mesh.
    """
    if n_max < 1:
        raise PreconditionError("n_max must be >= 1")
    pairs = _delta_pairs(delta_mesh, fam.horizon_T)
    cache = _FactorCache(A, fam)
    if cap is None:
        free = max((float(operator_norm(cache.a(float(t - s)), q)) for t, s in pairs),
                   default=1.0)
        cap = STABILITY_CAP_FACTOR * max(1.0, free)

    def worst_at(pair):
        t, s = float(pair[0]), float(pair[1])
        if t == s:
            return 1.0, 1
        best, best_n = -1.0, 1
        for n in range(1, n_max + 1):
            v = _product_norm(cache, t, s, n, n, q)
            if v > best:
                best, best_n = v, n
        return best, best_n

    results = parallel_map(worst_at, pairs, threads)
    k = int(np.argmax([r[0] for r in results]))
    M_est = results[k][0]
    where = (float(pairs[k][0]), float(pairs[k][1]), results[k][1])
    return StabilityResult(M_est <= cap, M_est, float(cap), n_max, where)


def check_stability_powers(A: Generator, fam: TimeFamily, tau: float, n: int, m: int,
                           s=None, q=2, s_points: int = 17) -> float:
    """Norm of the ``m``-fold factor product with step ``tau/n``.

    With ``s`` given the product starts at ``s``; otherwise the maximum over
    ``s_points`` admissible start times is returned.  Products that run past
    ``T`` vanish in the evolution space, so they contribute 0.
    """
    if n < 1 or m < 1:
        raise PreconditionError("m and n must be >= 1")
    T = fam.horizon_T
    if not 0 <= tau <= T:
        raise PreconditionError(f"tau must lie in [0, {T}]")
    if tau == 0:
        return 1.0
    span = m * tau / n
    if span > T * (1 + 1e-12):
        return 0.0
    cache = _FactorCache(A, fam)
    starts = [float(s)] if s is not None else np.linspace(0.0, max(T - span, 0.0), s_points)
    # the product helper takes (t, s, n, m) with h = (t - s)/n
    return max(_product_norm(cache, s0 + tau, s0, n, m, q) for s0 in starts)


def check_family_class(fam: TimeFamily, tau_grid, t_grid=None, q=2) -> float:
    """Largest ``||exp(-tau B(t))|| / (M e^(omega tau))`` on the grids.

    Values above 1 mean the declared class is violated; this warns, or raises
    when the family is ``strict_class``.
    """
    if fam.class_M is None:
        return 0.0
    t_grid = default_t_grid(fam.horizon_T) if t_grid is None else t_grid
    worst = 0.0
    for t in t_grid:
        B = fam(float(t))
        for tau in tau_grid:
            bound = fam.class_M * math.exp(fam.class_omega * tau)
            worst = max(worst, float(operator_norm(expm(B, tau), q)) / bound)
    if worst > 1 + 1e-12:
        msg = f"family exceeds its declared class bound by a factor {worst:.6g}"
        if fam.strict_class:
            raise PreconditionError(msg)
        warnings.warn(msg, ClassBoundWarning, stacklevel=2)
    return worst


def audit(A: Generator, fam: TimeFamily, alpha: float, beta: float, *, t_points=None,
          pair_points=None, n_max: int = DEFAULT_N_MAX, delta_mesh=None, q=2,
          threads: int = 1, stability: StabilityResult | None = None) -> AuditReport:
    """Run all assumption audits and collect them in one report.

    A ``stability`` result computed earlier on the same mesh is reused.
    """
    T = fam.horizon_T
    t_points = t_points or DEFAULT_T_POINTS
    pair_points = pair_points or DEFAULT_T_POINTS
    t_grid = default_t_grid(T, t_points)
    pairs = default_pair_grid(T, pair_points)
    stab = stability or check_A_stability(A, fam, n_max, delta_mesh, q, threads=threads)
    return AuditReport(
        C_alpha=relative_bound_Calpha(A, fam, alpha, t_grid, q, threads),
        L_beta=holder_constant_Lbeta(A, fam, alpha, beta, pairs, q, threads),
        C_1_star=adjoint_bound_C1star(A, fam, t_grid, q, threads),
        stability_M=stab.M_est,
        stable=stab.stable,
        grids_used={
            "t_grid": f"uniform {t_points} points on [0, {T}]",
            "pair_grid": f"all t > s pairs of a uniform {pair_points}-point grid "
                         f"({len(pairs)} pairs)",
            "stability": f"n = 1..{n_max} on {len(_delta_pairs(delta_mesh, T))} mesh pairs",
            "norm_q": q,
        },
    )
