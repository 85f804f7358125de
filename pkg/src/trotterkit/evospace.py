"""Discrete model of ``L^p(I, X)`` and the evolution semigroups acting on it.

Functions on ``I = [0, T]`` are stored as one state vector per cell of a
uniform grid, sampled at cell midpoints.  Shifts move whole cells, so every
time shift must be an integer number of cells.

Operators act on sample arrays of shape ``(m, dim)`` or, batched, ``(m, dim, r)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridCompatibilityError, PreconditionError, UnsupportedRegimeError
from .generators import Generator, TimeFamily
from .linops import NormEstimate, expm, operator_norm
from .propagator import REFERENCE_TOL, ReferenceCache, _Products, SchemeKind


@dataclass(frozen=True)
class TimeGrid:
    horizon_T: float
    m: int

    def __post_init__(self):
        if self.m < 1 or not self.horizon_T > 0:
            raise PreconditionError("TimeGrid needs m >= 1 and T > 0")
        if self.dt * self.m != self.horizon_T:
            raise PreconditionError(
                f"T={self.horizon_T} is not exactly m*dt in floating point for m={self.m}")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.m

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.dt

    def cells(self, tau: float) -> int:
        """Number of cells in a shift of length ``tau``; must be a whole number."""
        k = round(tau / self.dt)
        if abs(k * self.dt - tau) > 1e-12 * max(1.0, tau):
            raise GridCompatibilityError(
                f"shift tau={tau} is not a multiple of dt={self.dt}; refine the grid")
        return int(k)


@dataclass(frozen=True, eq=False)
class SpaceTimeVector:
    grid: TimeGrid
    samples: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[0] != self.grid.m:
            raise PreconditionError(f"need {self.grid.m} samples, got {arr.shape[0]}")
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("samples must be finite")
        if not 1 <= self.p < np.inf:
            raise PreconditionError("p must lie in [1, inf)")
        object.__setattr__(self, "samples", arr)

    def norm(self) -> float:
        cell = np.linalg.norm(self.samples, axis=1)
        return float((self.grid.dt * np.sum(cell ** self.p)) ** (1.0 / self.p))

    def like(self, samples) -> "SpaceTimeVector":
        return SpaceTimeVector(self.grid, samples, self.p)

    @classmethod
    def random(cls, grid: TimeGrid, dim: int, rng, p: float = 2.0) -> "SpaceTimeVector":
        return cls(grid, rng.standard_normal((grid.m, dim)), p)


def _shift(arr: np.ndarray, k: int) -> np.ndarray:
    """Move samples ``k`` cells toward later times (``k < 0``: earlier), zero-filling."""
    out = np.zeros_like(arr)
    m = arr.shape[0]
    if abs(k) >= m:
        return out
    if k >= 0:
        out[k:] = arr[: m - k]
    else:
        out[: m + k] = arr[-k:]
    return out


def _blockwise(blocks: np.ndarray, arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return np.einsum("mij,mj->mi", blocks, arr)
    return np.matmul(blocks, arr)


def _constant(E: np.ndarray, arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 2:
        return arr @ E.T
    return np.matmul(E, arr)


def right_shift(f: SpaceTimeVector, k: int) -> SpaceTimeVector:
    """``(S f)(t) = f(t - k dt)``, zero on the first ``k`` cells."""
    if k < 0:
        raise PreconditionError("shift length must be nonnegative")
    return f.like(_shift(f.samples, k))


def left_shift(f: SpaceTimeVector, k: int) -> SpaceTimeVector:
    """``(L f)(t) = f(t + k dt)``, zero on the last ``k`` cells."""
    if k < 0:
        raise PreconditionError("shift length must be nonnegative")
    return f.like(_shift(f.samples, -k))


@dataclass(eq=False)
class BlockOperator:
    """A linear map on space-time samples.

    ``structure`` is one of ``blockDiagonal``, ``shifted`` or ``general``;
    block-diagonal operators also carry their ``blocks`` array ``(m, dim, dim)``.
    """

    grid: TimeGrid
    dim: int
    action: Callable[[np.ndarray], np.ndarray]
    structure: str = "general"
    blocks: np.ndarray | None = None

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return self.action(np.asarray(samples))

    def __call__(self, f: SpaceTimeVector) -> SpaceTimeVector:
        return f.like(self.apply(f.samples))

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        a, b = self.action, other.action
        return BlockOperator(self.grid, self.dim, lambda x: a(b(x)), "general")

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        a, b = self.action, other.action
        return BlockOperator(self.grid, self.dim, lambda x: a(x) - b(x), "general")

    def dense(self) -> np.ndarray:
        """Matrix of the operator in the cell-major basis, size ``m*dim``."""
        m, d = self.grid.m, self.dim
        basis = np.eye(m * d).reshape(m, d, m * d)
        return self.apply(basis).reshape(m * d, m * d)

    def induced_norm(self, p: float = 2.0, samples: int = 200, seed: int = 0):
        """Induced ``L^p(I, l^2)`` norm.

        Exact at ``p = 2``: the largest block norm for block-diagonal operators,
        the spectral norm of the assembled matrix otherwise.  Other ``p`` give a
        randomized lower bound flagged with ``is_estimate``.
        """
        if p == 2:
            if self.structure == "blockDiagonal" and self.blocks is not None:
                return NormEstimate(max(float(operator_norm(b, 2)) for b in self.blocks))
            return NormEstimate(float(np.linalg.norm(self.dense(), 2)))
        rng = np.random.default_rng(seed)
        best = 0.0
        for _ in range(samples):
            f = SpaceTimeVector.random(self.grid, self.dim, rng, p)
            nf = f.norm()
            if nf > 0:
                best = max(best, self(f).norm() / nf)
        return NormEstimate(best, is_estimate=True, iterations=samples)


def shift_operator(grid: TimeGrid, dim: int, k: int) -> BlockOperator:
    """Right shift by ``k`` cells (``k < 0``: left shift by ``-k``)."""
    return BlockOperator(grid, dim, lambda x: _shift(x, k), "shifted")


def _family_blocks(source, grid: TimeGrid) -> np.ndarray:
    if isinstance(source, TimeFamily):
        return np.stack([source(float(t)) for t in grid.midpoints])
    C = np.asarray(source)
    if C.ndim == 0:
        C = C.reshape(1, 1)
    return np.broadcast_to(C, (grid.m,) + C.shape).copy()


def block_diagonal(blocks: np.ndarray, grid: TimeGrid) -> BlockOperator:
    blocks = np.asarray(blocks)
    return BlockOperator(grid, blocks.shape[1], lambda x: _blockwise(blocks, x),
                         "blockDiagonal", blocks)


def induced_multiplication(source, grid: TimeGrid) -> BlockOperator:
    """``(C f)(t_i) = C(t_i) f(t_i)`` for a family (midpoint samples) or a constant matrix."""
    return block_diagonal(_family_blocks(source, grid), grid)


def evo_K0_semigroup(A: Generator, grid: TimeGrid, k: int) -> BlockOperator:
    """``f -> S(k dt) exp(-k dt A) f``: cellwise decay followed by a ``k``-cell shift."""
    if k < 0:
        raise PreconditionError("k must be nonnegative")
    E = expm(A.op, k * grid.dt)
    return BlockOperator(grid, A.dim, lambda x: _shift(_constant(E, x), k), "shifted")


def _check_divisible(k_total, n):
    if n < 1 or k_total % n:
        raise GridCompatibilityError(
            f"k_total={k_total} is not divisible by n={n}; refine the grid so each "
            "Trotter step spans a whole number of cells")


def evo_trotter(A: Generator, fam: TimeFamily, grid: TimeGrid, k_total: int,
                n: int) -> BlockOperator:
    """``(exp(-sigma B) exp(-sigma K0))^n`` with ``sigma = (k_total / n) dt``."""
    _check_divisible(k_total, n)
    step = k_total // n
    sigma = step * grid.dt
    EA = expm(A.op, sigma)
    EB = np.stack([expm(fam(float(t)), sigma) for t in grid.midpoints])

    def action(x):
        for _ in range(n):
            x = _blockwise(EB, _shift(_constant(EA, x), step))
        return x

    return BlockOperator(grid, A.dim, action, "shifted" if k_total else "blockDiagonal")


def _reference(A, fam, tol, reference):
    return reference if reference is not None else ReferenceCache(A, fam, tol)


def evo_reference(A: Generator, fam: TimeFamily, grid: TimeGrid, k: int,
                  tol: float = REFERENCE_TOL, reference: ReferenceCache | None = None
                  ) -> BlockOperator:
    """``(exp(-tau K) f)(t_i) = U(t_i, t_i - tau) f(t_i - tau)`` assembled from reference blocks."""
    if k < 0:
        raise PreconditionError("k must be nonnegative")
    ref = _reference(A, fam, tol, reference)
    mids = grid.midpoints
    pairs = [(mids[i], mids[i - k]) for i in range(k, grid.m)]
    ref.prefetch(pairs)
    blocks = np.zeros((grid.m, A.dim, A.dim))
    for i in range(k, grid.m):
        blocks[i] = ref(mids[i], mids[i - k])
    return BlockOperator(grid, A.dim, lambda x: _blockwise(blocks, _shift(x, k)), "shifted")


def correspondence_check(A: Generator, fam: TimeFamily, grid: TimeGrid, k: int, n: int,
                         f: SpaceTimeVector, scheme=SchemeKind.Un) -> float:
    """Largest cellwise gap between the space-time product and ``U_n(t_i, t_i - tau) f(t_i - tau)``."""
    _check_divisible(k, n)
    lhs = evo_trotter(A, fam, grid, k, n).apply(f.samples)
    mids = grid.midpoints
    prods = _Products(A, fam)
    rhs = np.zeros_like(lhs)
    for i in range(k, grid.m):
        rhs[i] = prods.product(mids[i], mids[i - k], n, SchemeKind.parse(scheme)) @ f.samples[i - k]
    return float(np.linalg.norm(lhs - rhs, axis=1).max())


@dataclass
class MainEqualResult:
    lhs: float
    rhs: float
    gap: float
    is_estimate: bool = False


def main_equal_check(A: Generator, fam: TimeFamily, grid: TimeGrid, k: int, n: int,
                     p: float = 2.0, q: float = 2.0, estimate: bool = False,
                     tol: float = REFERENCE_TOL, reference: ReferenceCache | None = None
                     ) -> MainEqualResult:
    """Compare the space-time error norm with the largest propagator error.

    ``lhs`` is the induced norm of ``L(tau) (product - exp(-tau K))`` computed on
    the assembled space-time matrix; ``rhs`` is
    ``max_i ||U_n(t_i + tau, t_i) - U(t_i + tau, t_i)||_2`` computed directly.
    """
    if (p != 2 or q != 2) and not estimate:
        raise UnsupportedRegimeError(
            "exact norm identity only at p = q = 2; pass estimate=True for a lower bound")
    _check_divisible(k, n)
    ref = _reference(A, fam, tol, reference)
    if k == 0 or k >= grid.m:
        return MainEqualResult(0.0, 0.0, 0.0)
    diff = evo_trotter(A, fam, grid, k, n) - evo_reference(A, fam, grid, k, reference=ref)
    S = shift_operator(grid, A.dim, -k) @ diff
    lhs = S.induced_norm(p)
    mids = grid.midpoints
    prods = _Products(A, fam)
    rhs = 0.0
    for i in range(grid.m - k):
        t, s = mids[i + k], mids[i]
        D = prods.product(t, s, n, SchemeKind.Un) - ref(t, s)
        rhs = max(rhs, float(operator_norm(D, q)))
    return MainEqualResult(float(lhs), rhs, abs(float(lhs) - rhs),
                           is_estimate=getattr(lhs, "is_estimate", False))
