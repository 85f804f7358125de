"""Diffusion with a time-dependent potential: ``du/dt = Lap u - V(t, x) u``.

The Dirichlet Laplacian is discretized by the standard 3-point (1D) or
5-point (2D) stencil on the interior nodes of a box; the potential becomes
a diagonal matrix family ``B(t) = diag(V(t, x_i))``.

Guidance on exponent choices for the continuous problem (not computed here):
for ``X = L^q(Omega)`` in dimension 3 one takes ``alpha in (0, 1/2)``,
``q in (3, 3/(2 alpha))``, a spatial integrability index ``rho >= 3/(2 alpha)``
for ``V(t, .)`` and a Hoelder index ``beta in (alpha, 1)`` in time.  The
discretized problem runs at ``q = 2`` and only the time-convergence order is
reproduced.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, StabilityError
from .generators import Generator, TimeFamily, audit, check_A_stability
from .propagator import (DEFAULT_LADDER, DEFAULT_WINDOW, REFERENCE_TOL, ConvergenceReport,
                         DeltaMesh, ReferenceCache, SchemeKind, convergence_report)


class TruncationWarning(UserWarning):
    """The heat kernel reaches beyond the sampled grid."""


# -- Laplacian -----------------------------------------------------------------

@dataclass(frozen=True)
class LaplacianSpec:
    dimension: int = 1
    cells_per_axis: int = 64
    domain_length: float = 1.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise PreconditionError("dimension must be 1 or 2")
        if self.cells_per_axis < 2:
            raise PreconditionError("cells_per_axis must be >= 2")
        if not self.domain_length > 0:
            raise PreconditionError("domain_length must be positive")

    @property
    def h(self) -> float:
        return self.domain_length / (self.cells_per_axis + 1)

    def nodes(self) -> np.ndarray:
        """Interior node coordinates, shape ``(N**d, d)`` in row-major order."""
        x = self.h * np.arange(1, self.cells_per_axis + 1)
        if self.dimension == 1:
            return x[:, None]
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def laplacian_1d(N: int, L: float = 1.0) -> np.ndarray:
    h = L / (N + 1)
    return (2.0 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)) / h ** 2


def build_laplacian(spec: LaplacianSpec) -> Generator:
    """The generator ``A = -Lap`` with homogeneous Dirichlet conditions (SPD)."""
    T1 = laplacian_1d(spec.cells_per_axis, spec.domain_length)
    if spec.dimension == 1:
        op = T1
    else:
        eye = np.eye(spec.cells_per_axis)
        op = np.kron(T1, eye) + np.kron(eye, T1)
    return Generator(op, class_M=1.0, class_gamma=0.0, holomorphic=True)


# -- potentials ----------------------------------------------------------------

def _prod_sin(x, k=1.0):
    return np.prod(np.sin(k * math.pi * x), axis=1)


SPATIAL_PROFILES = {
    "zero": lambda x: np.zeros(len(x)),
    "one": lambda x: np.ones(len(x)),
    "sin": lambda x: _prod_sin(x),
    "sin_clipped": lambda x: np.maximum(_prod_sin(x), 0.0),
    "abs_sin2": lambda x: np.abs(_prod_sin(x, 2.0)),
    # rough profile: indicator of the left half of the box in the first coordinate
    "step": lambda x: (x[:, 0] < 0.5).astype(float),
}


def _rho(name: str, beta: float):
    if name == "const":
        return lambda t: 1.0
    if name == "holder":
        return lambda t: max(t, 0.0) ** beta
    if name == "linear":
        return lambda t: t
    if name == "cos":
        return lambda t: math.cos(2 * math.pi * t)
    raise PreconditionError(f"unknown time profile {name!r}; allowed: const, holder, linear, cos")


TIME_PROFILES = ("const", "holder", "linear", "cos")


@dataclass(frozen=True)
class PotentialSpec:
    """``V(t, x) = amp0 v0(x) + amp1 rho(t) v1(x)`` or a tabulated ``V``.

    Tabulated potentials give ``times`` (ascending) and ``values`` of shape
    ``(len(times), n_nodes)``; ``V`` is linearly interpolated in time.
    """

    kind: str = "separable"
    v0: str = "zero"
    v1: str = "sin"
    rho: str = "holder"
    amp0: float = 0.0
    amp1: float = 1.0
    holder_beta: float = 0.75
    nonneg_real_part: bool = True
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("separable", "tabulated"):
            raise PreconditionError("kind must be 'separable' or 'tabulated'")
        if not 0 < self.holder_beta <= 1:
            raise PreconditionError("holder_beta must lie in (0, 1]")
        if self.kind == "separable":
            for name in (self.v0, self.v1):
                if name not in SPATIAL_PROFILES:
                    raise PreconditionError(
                        f"unknown spatial profile {name!r}; allowed: {sorted(SPATIAL_PROFILES)}")
            _rho(self.rho, self.holder_beta)

    def evaluator(self, nodes: np.ndarray):
        """Return ``t -> V(t, nodes)`` as a 1-D array."""
        if self.kind == "tabulated":
            times = np.asarray(self.times, float)
            vals = np.asarray(self.values, float)
            if vals.shape != (len(times), len(nodes)):
                raise PreconditionError(
                    f"tabulated values need shape {(len(times), len(nodes))}, got {vals.shape}")

            def V(t):
                return np.array([np.interp(t, times, vals[:, i]) for i in range(vals.shape[1])])
            return V
        base = self.amp0 * SPATIAL_PROFILES[self.v0](nodes)
        bump = self.amp1 * SPATIAL_PROFILES[self.v1](nodes)
        rho = _rho(self.rho, self.holder_beta)
        return lambda t: base + rho(t) * bump


def build_potential_family(spec: PotentialSpec, lap: LaplacianSpec, T: float = 1.0,
                           alpha: float = 0.0, check_points: int = 65) -> TimeFamily:
    """Diagonal family ``B(t) = diag(V(t, x_i))`` on ``[0, T]``.

    With ``nonneg_real_part`` set, ``V`` is sampled on a uniform time grid and
    a negative value is rejected.
    """
    V = spec.evaluator(lap.nodes())
    if spec.nonneg_real_part:
        for t in np.linspace(0.0, T, check_points):
            v = V(float(t))
            if np.min(np.real(v)) < 0:
                raise PreconditionError(
                    f"potential has negative real part {np.min(np.real(v)):.6g} at t={t}")
    dim = lap.cells_per_axis ** lap.dimension
    return TimeFamily(T, lambda t: np.diag(V(t)), declared_beta=spec.holder_beta,
                      declared_alpha=alpha, dim=dim, class_M=1.0 if spec.nonneg_real_part else None,
                      name=f"V[{spec.kind}]")


# -- Gauss-Weierstrass kernel ----------------------------------------------------

def heat_kernel_1d(t: float, x) -> np.ndarray:
    return (4.0 * math.pi * t) ** -0.5 * np.exp(-np.asarray(x) ** 2 / (4.0 * t))


def kernel_mass(t: float, h: float, d: int = 1, cutoff: float = 40.0) -> float:
    """Trapezoid mass ``sum_j h^d K_t(x_j)`` of the kernel on a free-space lattice."""
    if t <= 0 or h <= 0:
        raise PreconditionError("t and h must be positive")
    r = int(math.ceil(math.sqrt(cutoff * 4.0 * t) / h))
    one = h * heat_kernel_1d(t, h * np.arange(-r, r + 1)).sum()
    return float(one ** d)


def gauss_weierstrass_apply(t: float, u, h: float, d: int = 1, periodic: bool = False,
                            deficit_tol: float = 1e-6) -> np.ndarray:
    """Convolve grid samples ``u`` with the free-space heat kernel at time ``t``.

    ``u`` holds samples on a uniform grid of spacing ``h`` (shape ``(N,)*d``);
    it is taken to vanish outside the grid unless ``periodic`` is set, in which
    case the kernel is wrapped around.  The kernel factorizes, so the 1D
    trapezoid convolution is applied along each axis.  If the kernel mass
    that falls outside the grid at a point where ``u`` is non-negligible
    exceeds ``deficit_tol`` a :class:`TruncationWarning` reports the deficit.
    """
    if t <= 0:
        raise PreconditionError("t must be positive")
    u = np.asarray(u, dtype=float)
    if u.ndim != d:
        raise PreconditionError(f"u must have {d} axes")
    out = u
    worst_deficit = 0.0
    for axis in range(d):
        N = u.shape[axis]
        idx = np.arange(N)
        if periodic:
            offs = idx[:, None] - idx[None, :]
            r = int(math.ceil(math.sqrt(40.0 * 4.0 * t) / (N * h))) + 1
            K = sum(heat_kernel_1d(t, h * (offs + w * N)) for w in range(-r, r + 1))
        else:
            K = heat_kernel_1d(t, h * (idx[:, None] - idx[None, :]))
            mass = h * K.sum(axis=1)
            active = np.abs(np.moveaxis(u, axis, 0)).reshape(N, -1).max(axis=1)
            active = active > 1e-12 * max(np.abs(u).max(), 1e-300)
            if active.any():
                worst_deficit = max(worst_deficit, float(np.max(1.0 - mass[active])))
        out = np.moveaxis(np.tensordot(h * K, np.moveaxis(out, axis, 0), axes=1), 0, axis)
    if worst_deficit > deficit_tol:
        warnings.warn(f"kernel truncated by the grid: mass deficit {worst_deficit:.3g}",
                      TruncationWarning, stacklevel=2)
    return out


# -- experiments -------------------------------------------------------------------

@dataclass
class Problem:
    """A generator, a family and the exponents used to judge its rate."""

    A: Generator
    fam: TimeFamily
    alpha: float
    beta: float
    label: str = ""


def scalar_problem(a: float = 1.0, b: float = 1.0, T: float = 1.0, alpha: float = 0.1) -> Problem:
    """``A = (a)``, ``B(t) = (b t)``: Lipschitz in time, closed-form propagator."""
    A = Generator(np.array([[a]]))
    fam = TimeFamily(T, lambda t: np.array([[b * t]]), declared_beta=1.0,
                     declared_alpha=alpha, dim=1, name="b*t")
    return Problem(A, fam, alpha, 1.0, "scalar")


def heat_problem(lap: LaplacianSpec, pot: PotentialSpec, alpha: float, T: float = 1.0) -> Problem:
    A = build_laplacian(lap)
    fam = build_potential_family(pot, lap, T, alpha)
    return Problem(A, fam, alpha, pot.holder_beta, "heat")


@dataclass
class ExperimentResult:
    report: ConvergenceReport
    problem: Problem
    reference: ReferenceCache
    stability: object = None
    timings: dict = field(default_factory=dict)


def run_problem(problem: Problem, n_ladder=DEFAULT_LADDER, mesh: DeltaMesh | None = None,
                scheme=SchemeKind.Un, tol: float = REFERENCE_TOL, window: float = DEFAULT_WINDOW,
                slack: float = 0.15, stability_n_max: int = 64, with_audit: bool = True,
                threads: int = 1, gamma_eps: float = 0.05) -> ExperimentResult:
    """Stability audit, error sweep over the ladder and rate comparison."""
    A, fam = problem.A, problem.fam
    mesh = mesh or DeltaMesh.uniform(fam.horizon_T)
    timings = {}
    t0 = time.perf_counter()
    stab = check_A_stability(A, fam, stability_n_max, mesh, threads=threads)
    timings["stability"] = time.perf_counter() - t0
    if not stab.stable:
        raise StabilityError(stab)
    ref = ReferenceCache(A, fam, tol)
    t0 = time.perf_counter()
    report = convergence_report(A, fam, problem.alpha, problem.beta, n_ladder, scheme, mesh,
                                tol, window, slack, gamma_eps=gamma_eps, threads=threads,
                                reference=ref)
    timings["sweep"] = time.perf_counter() - t0
    if with_audit:
        t0 = time.perf_counter()
        report.audit = audit(A, fam, problem.alpha, problem.beta, n_max=stability_n_max,
                             delta_mesh=mesh, threads=threads, stability=stab)
        timings["audit"] = time.perf_counter() - t0
    return ExperimentResult(report, problem, ref, stab, timings)


def run_convergence_experiment(lap: LaplacianSpec, pot: PotentialSpec, alpha: float,
                               n_ladder=DEFAULT_LADDER, mesh: DeltaMesh | None = None,
                               scheme=SchemeKind.Un, T: float = 1.0, **kwargs) -> ConvergenceReport:
    """End-to-end heat-plus-potential run; the report carries the audit."""
    if not alpha < pot.holder_beta:
        raise PreconditionError("alpha must be below the Hoelder exponent of the potential")
    problem = heat_problem(lap, pot, alpha, T)
    return run_problem(problem, n_ladder, mesh, scheme, **kwargs).report
