"""Trotter product approximants of a propagator and their error sweeps.

The four product schemes are

* ``Un``       ``prod_{j=1..n} exp(-h B(s+jh)) exp(-h A)``
* ``UnPrime``  ``prod_{j=0..n-1} exp(-h A) exp(-h B(s+jh))``
* ``Vn``       ``prod_{j=1..n} exp(-h C(s+jh))``
* ``VnPrime``  ``prod_{j=0..n-1} exp(-h C(s+jh))``

with ``h = (t-s)/n``, ``C(t) = A + B(t)`` and factors with larger ``j``
applied later (further left).  The exact propagator is approximated by an
adaptive fourth-order integrator that shares no code with the products.
"""
from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateFitError, IndexContractError, IntegrationError,
                     MeshError, PreconditionError)
from .generators import Generator, TimeFamily
from .linops import expm, operator_norm
from .parallel import parallel_map

DEFAULT_LADDER = (2, 4, 8, 16, 32, 64, 128, 256)
DEFAULT_WINDOW = 0.5
DEFAULT_MESH_DIVISIONS = 16
REFERENCE_TOL = 1e-10
#: ``beta = 1`` runs compare against ``gamma - alpha`` with ``gamma = 1 - GAMMA_EPS``
GAMMA_EPS = 0.05


class SchemeKind(str, enum.Enum):
    Un = "Un"
    UnPrime = "UnPrime"
    Vn = "Vn"
    VnPrime = "VnPrime"

    @property
    def index_range(self):
        return (1, 0) if self in (SchemeKind.Un, SchemeKind.Vn) else (0, -1)

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ValueError(
                f"unknown scheme {value!r}; allowed: {[s.value for s in cls]}") from None


@dataclass(frozen=True, eq=False)
class DeltaMesh:
    """Finite sample of ``{(t, s): s <= t}`` in ``[0, T]^2``.

    ``s = 0`` is admitted: at finite dimension both the products and the
    propagator extend continuously to the closed triangle.
    """

    horizon_T: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        T = self.horizon_T
        bad = (pts[:, 1] < 0) | (pts[:, 1] > pts[:, 0]) | (pts[:, 0] > T * (1 + 1e-12))
        if np.any(bad):
            raise MeshError(f"mesh points outside the triangle 0 <= s <= t <= {T}: "
                            f"{pts[bad][:3].tolist()}")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, T: float = 1.0, divisions: int = DEFAULT_MESH_DIVISIONS) -> "DeltaMesh":
        """Tensor grid ``{T i / divisions}^2`` filtered to ``0 < s <= t``."""
        g = T * np.arange(divisions + 1) / divisions
        pts = [(t, s) for s in g[1:] for t in g[1:] if s <= t]
        return cls(T, np.array(pts))

    def __len__(self):
        return len(self.points)

    def describe(self) -> str:
        return f"{len(self)} pairs in [0, {self.horizon_T}]^2"


# -- products ----------------------------------------------------------------

def _check_pair(fam, t, s):
    if not 0 <= s <= t <= fam.horizon_T * (1 + 1e-12):
        raise PreconditionError(f"(t, s) = ({t}, {s}) is not in the triangle")


def trotter_step(A: Generator, fam: TimeFamily, t: float, s: float, n: int, j: int,
                 scheme=SchemeKind.Un) -> np.ndarray:
    """The single factor ``G_j(t, s; n)`` of the chosen scheme."""
    scheme = SchemeKind.parse(scheme)
    _check_pair(fam, t, s)
    lo = scheme.index_range[0]
    if n < 1 or not lo <= j <= n - 1 + lo:
        raise IndexContractError(
            f"j={j} outside [{lo}, {n - 1 + lo}] for scheme {scheme.value} with n={n}")
    h = (t - s) / n
    r = s + j * h
    if scheme is SchemeKind.Un:
        return expm(fam(r), h) @ expm(A.op, h)
    if scheme is SchemeKind.UnPrime:
        return expm(A.op, h) @ expm(fam(r), h)
    return expm(A.op + fam(r), h)


class _Products:
    """Builds ordered products while memoizing ``exp(-h A)`` by step size."""

    def __init__(self, A: Generator, fam: TimeFamily):
        self.A = A
        self.fam = fam
        self._ea = {}
        self._lock = threading.Lock()

    def ea(self, h):
        E = self._ea.get(h)
        if E is None:
            E = expm(self.A.op, h)
            with self._lock:
                self._ea[h] = E
        return E

    def product(self, t, s, n, scheme, start=None) -> np.ndarray:
        """Ordered product over ``n`` factors (``n = 0`` gives the identity)."""
        P = np.eye(self.A.dim)
        if n == 0 or t == s:
            return P
        h = (t - s) / n
        lo = scheme.index_range[0]
        if scheme is SchemeKind.Un:
            EA = self.ea(h)
            for j in range(1, n + 1):
                P = expm(self.fam(s + j * h), h) @ (EA @ P)
        elif scheme is SchemeKind.UnPrime:
            EA = self.ea(h)
            for j in range(0, n):
                P = EA @ (expm(self.fam(s + j * h), h) @ P)
        else:
            for j in range(lo, n + lo):
                P = expm(self.A.op + self.fam(s + j * h), h) @ P
        return P


def trotter_product(A: Generator, fam: TimeFamily, t: float, s: float, n: int,
                    scheme=SchemeKind.Un) -> np.ndarray:
    """The approximant ``U_n(t, s)`` (or ``U'_n``, ``V_n``, ``V'_n``)."""
    scheme = SchemeKind.parse(scheme)
    _check_pair(fam, t, s)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    return _Products(A, fam).product(t, s, n, scheme)


# -- reference propagator ----------------------------------------------------

def _integrate(A: Generator, fam: TimeFamily, s: float, targets, tol: float,
               max_steps: int = 10_000_000, h_factor: float = 1.0):
    """Solve ``dW/dt = -(A + B(t)) W``, ``W(s) = I`` and return ``W`` at each target.

    Classical RK4 with step doubling: every step is taken once with ``h`` and
    twice with ``h/2``; the difference controls ``h`` and is used for local
    extrapolation.
    """
    targets = sorted(set(float(x) for x in targets))
    out = {}
    dim = A.dim
    W = np.eye(dim)
    t = float(s)
    Aop = A.op
    cache = {}

    def C(r):
        M = cache.get(r)
        if M is None:
            M = Aop + fam(min(r, fam.horizon_T))
            if len(cache) > 8:
                cache.clear()
            cache[r] = M
        return M

    def rk4(r, Y, h):
        k1 = -C(r) @ Y
        Cm = C(r + 0.5 * h)
        k2 = -Cm @ (Y + 0.5 * h * k1)
        k3 = -Cm @ (Y + 0.5 * h * k2)
        k4 = -C(r + h) @ (Y + h * k3)
        return Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    norm_c = np.abs(C(t)).sum(axis=1).max()
    h = h_factor * min(0.1, 1.0 / max(norm_c, 1e-12))
    steps = 0
    for target in targets:
        if target <= t:
            out[target] = W.copy()
            continue
        while t < target:
            last = False
            if t + h >= target:
                h_try = target - t
                last = True
            else:
                h_try = h
            coarse = rk4(t, W, h_try)
            half = rk4(t, W, 0.5 * h_try)
            fine = rk4(t + 0.5 * h_try, half, 0.5 * h_try)
            diff = fine - coarse
            err = np.abs(diff).max() / 15.0
            scale = tol * max(1.0, np.abs(fine).max())
            if not np.isfinite(err):
                err = math.inf
            if err <= scale:
                W = fine + diff / 15.0
                t = target if last else t + h_try
                grow = 4.0 if err == 0 else min(4.0, 0.9 * (scale / err) ** 0.2)
                if not last or grow < 1.0:
                    h = h_try * max(grow, 0.2)
            else:
                h = h_try * max(0.2, 0.9 * (scale / err) ** 0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(t, f"step size underflow (h={h:.3g})")
            steps += 1
            if steps > max_steps:
                raise IntegrationError(t, f"step budget of {max_steps} exhausted")
        out[target] = W.copy()
    return out


def reference_propagator(A: Generator, fam: TimeFamily, t: float, s: float,
                         tol: float = REFERENCE_TOL) -> np.ndarray:
    """High-accuracy ``U(t, s)`` from adaptive integration of the matrix ODE."""
    _check_pair(fam, t, s)
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    if t == s:
        return np.eye(A.dim)
    return _integrate(A, fam, s, [t], tol)[float(t)]


def reference_cross_check(A: Generator, fam: TimeFamily, t: float, s: float,
                          tol: float = REFERENCE_TOL) -> float:
    """Discrepancy between the reference at ``tol`` and at ``tol / 32`` (doubled resolution)."""
    U1 = reference_propagator(A, fam, t, s, tol)
    U2 = reference_propagator(A, fam, t, s, tol / 32.0)
    return float(np.abs(U1 - U2).max())


class ReferenceCache:
    """Memoized reference propagators keyed by ``(t, s)``.

    With ``chain`` set (default) a batch of requests is served by integrating
    each gap between consecutive requested times once, from the identity, and
    composing the pieces with the propagator law ``U(t,r) U(r,s) = U(t,s)``.
    Otherwise requests sharing a start time share one integration that stops
    at every requested ``t``.  Writes happen under a lock; reads do not.
    """

    def __init__(self, A: Generator, fam: TimeFamily, tol: float = REFERENCE_TOL,
                 chain: bool = True):
        self.A, self.fam, self.tol, self.chain = A, fam, tol, chain
        self._store = {}
        self._segments = {}
        self._lock = threading.Lock()

    def _missing(self, pairs):
        todo = []
        for t, s in np.asarray(pairs, dtype=float).reshape(-1, 2):
            key = (float(t), float(s))
            if key[0] > key[1] and key not in self._store:
                todo.append(key)
        return todo

    def prefetch(self, pairs, threads: int = 1):
        todo = self._missing(pairs)
        if not todo:
            return
        if self.chain:
            self._prefetch_chained(todo, threads)
        else:
            self._prefetch_direct(todo, threads)

    def _prefetch_direct(self, todo, threads):
        by_start = {}
        for t, s in todo:
            by_start.setdefault(s, []).append(t)

        def run(item):
            s, ts = item
            res = _integrate(self.A, self.fam, s, ts, self.tol)
            with self._lock:
                for t, W in res.items():
                    self._store[(t, s)] = W

        parallel_map(run, sorted(by_start.items()), threads)

    def _prefetch_chained(self, todo, threads):
        knots = sorted({x for pair in todo for x in pair})
        gaps = [(a, b) for a, b in zip(knots[:-1], knots[1:])
                if (b, a) not in self._segments]

        def run(gap):
            a, b = gap
            W = _integrate(self.A, self.fam, a, [b], self.tol)[b]
            with self._lock:
                self._segments[(b, a)] = W

        parallel_map(run, gaps, threads)
        index = {x: i for i, x in enumerate(knots)}
        for s in sorted({s for _, s in todo}):
            wanted = {t for t, s2 in todo if s2 == s}
            P = np.eye(self.A.dim)
            i = index[s]
            t_max = max(wanted)
            while knots[i] < t_max:
                P = self._segments[(knots[i + 1], knots[i])] @ P
                i += 1
                if knots[i] in wanted:
                    with self._lock:
                        self._store[(knots[i], s)] = P.copy()

    def __call__(self, t, s):
        key = (float(t), float(s))
        W = self._store.get(key)
        if W is None:
            if key[0] == key[1]:
                return np.eye(self.A.dim)
            self.prefetch([key])
            W = self._store[key]
        return W


# -- errors and rates --------------------------------------------------------

@dataclass
class RateFit:
    rate: float
    constant: float
    points_used: int = 0


def fit_rate(n_values, sup_errors, window: float = DEFAULT_WINDOW) -> RateFit:
    """Least-squares fit of ``log(err) = log(C) - rate * log(n)`` on the tail.

    Uses the last ``ceil(window * count)`` points, widened to 3 points when
    fewer would be selected.
    """
    n = np.asarray(n_values, dtype=float)
    e = np.asarray(sup_errors, dtype=float)
    if n.shape != e.shape:
        raise DegenerateFitError("n_values and sup_errors differ in length")
    count = len(n)
    k = max(int(math.ceil(window * count)), min(3, count))
    if k < 3:
        raise DegenerateFitError(f"rate fit needs at least 3 points, got {k}")
    n, e = n[-k:], e[-k:]
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise DegenerateFitError(
            "nonpositive error in the fit window; the approximation is exact here, "
            "treat it as an exact match instead of fitting a rate")
    slope, intercept = np.polyfit(np.log(n), np.log(e), 1)
    return RateFit(float(-slope), float(math.exp(intercept)), k)


def theoretical_rate(alpha: float, beta: float, gamma_eps: float = GAMMA_EPS) -> float:
    """``beta - alpha``; at ``beta = 1`` the guaranteed order is ``gamma - alpha``, ``gamma = 1 - eps``."""
    if beta >= 1.0:
        return (1.0 - gamma_eps) - alpha
    return beta - alpha


def sup_error(A: Generator, fam: TimeFamily, n: int, scheme=SchemeKind.Un, mesh=None,
              tol: float = REFERENCE_TOL, q=2, reference: ReferenceCache | None = None,
              threads: int = 1) -> float:
    """``max_{(t,s) in mesh} ||U_n(t,s) - U(t,s)||``."""
    return error_sweep(A, fam, [n], scheme, mesh, tol, q, reference, threads)[0]


def error_sweep(A: Generator, fam: TimeFamily, n_values, scheme=SchemeKind.Un, mesh=None,
                tol: float = REFERENCE_TOL, q=2, reference: ReferenceCache | None = None,
                threads: int = 1) -> list:
    """Sup-errors for each ``n``, sharing one set of reference propagators."""
    scheme = SchemeKind.parse(scheme)
    mesh = mesh or DeltaMesh.uniform(fam.horizon_T)
    if len(mesh) == 0:
        raise MeshError("mesh is empty")
    ref = reference or ReferenceCache(A, fam, tol)
    pairs = [(float(t), float(s)) for t, s in mesh.points if t > s]
    ref.prefetch(pairs, threads)
    prods = _Products(A, fam)
    out = []
    for n in n_values:
        def err(pair, n=n):
            t, s = pair
            return float(operator_norm(prods.product(t, s, n, scheme) - ref(t, s), q))
        out.append(max(parallel_map(err, pairs, threads), default=0.0))
    return out


def strong_errors(A: Generator, fam: TimeFamily, n_values, vectors, scheme=SchemeKind.Un,
                  mesh=None, tol: float = REFERENCE_TOL,
                  reference: ReferenceCache | None = None) -> np.ndarray:
    """``max_mesh ||(U_n - U) x||_2`` for each ``n`` (rows) and vector ``x`` (columns)."""
    scheme = SchemeKind.parse(scheme)
    mesh = mesh or DeltaMesh.uniform(fam.horizon_T)
    ref = reference or ReferenceCache(A, fam, tol)
    X = np.asarray(vectors, dtype=float).reshape(-1, A.dim).T
    pairs = [(float(t), float(s)) for t, s in mesh.points if t > s]
    ref.prefetch(pairs)
    prods = _Products(A, fam)
    out = np.zeros((len(n_values), X.shape[1]))
    for i, n in enumerate(n_values):
        for t, s in pairs:
            D = (prods.product(t, s, n, scheme) - ref(t, s)) @ X
            out[i] = np.maximum(out[i], np.linalg.norm(D, axis=0))
    return out


@dataclass
class ConvergenceReport:
    scheme: SchemeKind
    n_values: list
    sup_errors: list
    fitted_rate: float
    fitted_constant: float
    theoretical_rate: float
    mesh: DeltaMesh
    window: float = DEFAULT_WINDOW
    slack: float = 0.15
    exact_match: bool = False
    passed: bool = False
    audit: object = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "scheme": self.scheme.value,
            "n_values": list(map(int, self.n_values)),
            "sup_errors": list(map(float, self.sup_errors)),
            "fitted_rate": self.fitted_rate,
            "fitted_constant": self.fitted_constant,
            "theoretical_rate": self.theoretical_rate,
            "mesh": self.mesh.describe(),
            "window": self.window,
            "slack": self.slack,
            "exact_match": self.exact_match,
            "passed": self.passed,
            "audit": self.audit.as_dict() if self.audit is not None else None,
            "notes": list(self.notes),
        }


def convergence_report(A: Generator, fam: TimeFamily, alpha: float, beta: float,
                       n_values=DEFAULT_LADDER, scheme=SchemeKind.Un, mesh=None,
                       tol: float = REFERENCE_TOL, window: float = DEFAULT_WINDOW,
                       slack: float = 0.15, exact_floor: float = 1e-8,
                       gamma_eps: float = GAMMA_EPS, q=2, threads: int = 1,
                       reference: ReferenceCache | None = None) -> ConvergenceReport:
    """Sweep the ladder, fit the rate, and compare with the guaranteed order.

    When every error sits below ``exact_floor`` the approximation is exact to
    working accuracy; the fit is skipped and the run passes as an exact match.
    """
    scheme = SchemeKind.parse(scheme)
    mesh = mesh or DeltaMesh.uniform(fam.horizon_T)
    errors = error_sweep(A, fam, n_values, scheme, mesh, tol, q, reference, threads)
    theo = theoretical_rate(alpha, beta, gamma_eps)
    report = ConvergenceReport(scheme, list(n_values), errors, math.nan, math.nan, theo,
                               mesh, window, slack)
    if errors and max(errors) <= exact_floor:
        report.exact_match = True
        report.fitted_rate = math.inf
        report.fitted_constant = 0.0
        report.passed = True
        report.notes.append(f"all errors below {exact_floor:g}: exact match, no rate fit")
        return report
    fit = fit_rate(n_values, errors, window)
    report.fitted_rate, report.fitted_constant = fit.rate, fit.constant
    report.passed = fit.rate >= theo - slack
    return report


def cocycle_check(A: Generator, fam: TimeFamily, t: float, s: float, n: int, k: int,
                  scheme=SchemeKind.Un) -> float:
    """``||U_n(t,s) - U_{n-k}(t, r) U_k(r, s)||`` with ``r = s + k (t-s)/n``.

    The splitting is an identity of the products, so the result is rounding noise.
    """
    scheme = SchemeKind.parse(scheme)
    _check_pair(fam, t, s)
    if not 0 <= k <= n:
        raise PreconditionError(f"k must lie in [0, n], got k={k}, n={n}")
    prods = _Products(A, fam)
    r = s + k * (t - s) / n
    full = prods.product(t, s, n, scheme)
    split = prods.product(t, r, n - k, scheme) @ prods.product(r, s, k, scheme)
    return float(operator_norm(full - split, 2))
