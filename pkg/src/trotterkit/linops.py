"""Dense linear-operator kernels.

Matrix exponentials ``exp(-tau A)``, fractional powers ``A^{+-alpha}``, induced
operator norms and the holomorphic-semigroup probe ``sup tau^a ||A^a exp(-tau A)||``.
Everything here is a pure function of its inputs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

from .errors import NumericOverflowError, PreconditionError

#: tolerance attached to "holds to tolerance" statements about exponentials
EXPM_TOL = 1e-10
#: tolerance attached to fractional-power identities
FRAC_TOL = 1e-8

# Degree-13 diagonal Pade approximant and its backward-error threshold
# (Higham 2005, "The scaling and squaring method for the matrix exponential revisited").
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


class ConditioningWarning(UserWarning):
    """A similarity transform used in a matrix function is ill-conditioned."""


def as_square(M, name="matrix") -> np.ndarray:
    """Validate ``M`` as a finite square 2-D array and return it as ndarray."""
    arr = np.asarray(M)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise PreconditionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} contains NaN or Inf entries")
    if not np.iscomplexobj(arr):
        arr = arr.astype(float, copy=False)
    return arr


def _is_diagonal(M: np.ndarray) -> bool:
    n = M.shape[0]
    if n == 1:
        return True
    # a strided view of all off-diagonal entries
    return not np.any(M.reshape(-1)[:-1].reshape(n - 1, n + 1)[:, 1:])


def _pade13(M: np.ndarray) -> np.ndarray:
    b = _PADE13
    ident = np.eye(M.shape[0], dtype=M.dtype)
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M2 @ M4
    U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
             + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
    V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
         + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    return np.linalg.solve(V - U, V + U)


def expm(A, tau: float = 1.0) -> np.ndarray:
    """Return ``exp(-tau A)`` by scaling and squaring with a [13/13] Pade approximant.

    ``tau == 0`` returns the identity exactly; diagonal inputs are exponentiated
    entrywise.

    Raises
    ------
    NumericOverflowError
        If the approximant or one of the squarings produces non-finite values.
    """
    A = as_square(A, "A")
    tau = float(tau)
    if tau < 0 or not math.isfinite(tau):
        raise PreconditionError(f"tau must be finite and nonnegative, got {tau}")
    n = A.shape[0]
    if tau == 0.0:
        return np.eye(n, dtype=A.dtype)
    M = -tau * A
    if _is_diagonal(M):
        with np.errstate(over="ignore"):
            d = np.exp(np.diagonal(M))
        if not np.all(np.isfinite(d)):
            raise NumericOverflowError("diagonal exponential")
        return np.diag(d)

    norm1 = np.linalg.norm(M, 1)
    s = 0
    if norm1 > _THETA13:
        s = int(math.ceil(math.log2(norm1 / _THETA13)))
    with np.errstate(over="ignore", invalid="ignore"):
        R = _pade13(M / 2.0 ** s)
        if not np.all(np.isfinite(R)):
            raise NumericOverflowError("Pade evaluation", f"scaled by 2^-{s}")
        for k in range(s):
            R = R @ R
            if not np.all(np.isfinite(R)):
                raise NumericOverflowError(
                    "squaring", f"squaring step {k + 1} of {s}")
    return R


# -- fractional powers -------------------------------------------------------

def _sqrt_triu(T: np.ndarray) -> np.ndarray:
    """Principal square root of an upper triangular matrix (Bjorck-Hammarling).

    Works superdiagonal by superdiagonal; the denominators ``r_ii + r_jj`` have
    positive real part whenever the spectrum does, so confluent eigenvalues are fine.
    """
    n = T.shape[0]
    R = np.zeros_like(T)
    diag = np.sqrt(np.diagonal(T))
    R[np.diag_indices(n)] = diag
    for d in range(1, n):
        i = np.arange(n - d)
        j = i + d
        # entries on superdiagonals >= d are still zero, so the full row-column
        # product only picks up the strictly interior terms i < k < j
        inner = np.einsum("ik,ki->i", R[: n - d, :], R[:, d:])
        R[i, j] = (T[i, j] - inner) / (diag[i] + diag[j])
    return R


def _binary_digits(alpha: float, bits: int = 53):
    digits = []
    frac = alpha
    for _ in range(bits):
        frac *= 2.0
        if frac >= 1.0:
            digits.append(1)
            frac -= 1.0
        else:
            digits.append(0)
        if frac == 0.0:
            break
    return digits


def _triu_power(T: np.ndarray, alpha: float) -> np.ndarray:
    """``T^alpha`` for upper triangular ``T`` and ``alpha`` in [0, 1].

    Uses the binary expansion of ``alpha``: ``T^alpha`` is the product of the
    repeated square roots ``T^(2^-k)`` over the set bits ``k``.  All factors are
    functions of ``T`` and therefore commute.
    """
    n = T.shape[0]
    if alpha == 0.0:
        return np.eye(n, dtype=T.dtype)
    if alpha == 1.0:
        return T.copy()
    out = np.eye(n, dtype=T.dtype)
    root = T
    for bit in _binary_digits(alpha):
        root = _sqrt_triu(root)
        if bit:
            out = out @ root
    return out


@dataclass(frozen=True)
class FracPower:
    """The pair ``(A^-alpha, A^alpha)``; unpacks as ``neg, pos = frac_power(A, a)``."""

    neg: np.ndarray
    pos: np.ndarray
    alpha: float
    condition: float = 1.0
    warnings: tuple = field(default_factory=tuple)

    def __iter__(self):
        yield self.neg
        yield self.pos


def _check_positive_spectrum(A: np.ndarray, eigvals=None):
    ev = np.linalg.eigvals(A) if eigvals is None else eigvals
    if np.any(ev.real <= 0):
        raise PreconditionError(
            "fractional powers need every eigenvalue to have positive real part; "
            f"min Re(lambda) = {ev.real.min():.6g}")
    return ev


def _real_if_real(X: np.ndarray, A: np.ndarray) -> np.ndarray:
    if not np.iscomplexobj(A):
        return X.real.copy()
    return X


def frac_power(A, alpha: float, cond_limit: float = 1e10) -> FracPower:
    """Fractional powers ``A^-alpha`` and ``A^alpha`` via the complex Schur form.

    Parameters
    ----------
    A : array_like
        Square matrix whose eigenvalues all have positive real part.
    alpha : float
        Exponent in [0, 1].  ``alpha = 0`` gives identities, ``alpha = 1``
        gives ``(A^-1, A)``.
    cond_limit : float
        Above this 2-norm condition number of ``A^alpha`` a
        :class:`ConditioningWarning` is emitted and recorded on the result.
    """
    A = as_square(A, "A")
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise PreconditionError(f"alpha must lie in [0, 1], got {alpha}")
    n = A.shape[0]
    if alpha == 0.0:
        ident = np.eye(n, dtype=A.dtype)
        return FracPower(ident, ident.copy(), alpha)
    T, Z = sla.schur(A.astype(complex), output="complex")
    _check_positive_spectrum(A, np.diagonal(T))
    P = _triu_power(T, alpha)
    Pinv = sla.solve_triangular(P, np.eye(n, dtype=complex))
    pos = _real_if_real(Z @ P @ Z.conj().T, A)
    neg = _real_if_real(Z @ Pinv @ Z.conj().T, A)
    cond = float(np.linalg.cond(P))
    notes = ()
    if cond > cond_limit:
        msg = f"A^alpha is ill-conditioned (cond={cond:.3g})"
        warnings.warn(msg, ConditioningWarning, stacklevel=2)
        notes = (msg,)
    return FracPower(neg, pos, alpha, cond, notes)


def frac_power_eig(A, alpha: float, cond_limit: float = 1e8) -> FracPower:
    """Fractional powers through an eigendecomposition (diagonalizable ``A`` only)."""
    A = as_square(A, "A")
    alpha = float(alpha)
    w, V = np.linalg.eig(A)
    _check_positive_spectrum(A, w)
    cond = float(np.linalg.cond(V))
    notes = ()
    if cond > cond_limit:
        msg = f"eigenvector matrix is ill-conditioned (cond={cond:.3g})"
        warnings.warn(msg, ConditioningWarning, stacklevel=2)
        notes = (msg,)
    Vinv = np.linalg.inv(V)
    pos = _real_if_real((V * w ** alpha) @ Vinv, A)
    neg = _real_if_real((V * w ** (-alpha)) @ Vinv, A)
    return FracPower(neg, pos, alpha, cond, notes)


def _neg_power_quad(A: np.ndarray, alpha: float, nodes: int) -> np.ndarray:
    # A^-a = 1/Gamma(a) int_0^inf t^(a-1) exp(-tA) dt, with t = (1-s)/s and the
    # (1-s)^(a-1) endpoint factor absorbed into a Gauss-Jacobi rule on [0, 1].
    x, w = roots_jacobi(nodes, alpha - 1.0, 0.0)
    s = 0.5 * (1.0 + x)
    acc = np.zeros_like(A, dtype=float if not np.iscomplexobj(A) else complex)
    for si, wi in zip(s, w):
        weight = wi * 2.0 ** (-alpha) * si ** (-1.0 - alpha)
        if weight == 0.0:
            continue
        acc += weight * expm(A, (1.0 - si) / si)
    return acc / gamma_fn(alpha)


def frac_power_quad(A, alpha: float, nodes: int = 400, scale=None) -> FracPower:
    """Fractional powers from Gauss-Jacobi quadrature of the Balakrishnan integral.

    An independent oracle for :func:`frac_power`; it only uses :func:`expm`.
    ``A`` is rescaled by ``scale`` (default: geometric mean of the extreme
    eigenvalue moduli) so that the quadrature sees a spectrum centred near 1.
    """
    A = as_square(A, "A")
    alpha = float(alpha)
    n = A.shape[0]
    ident = np.eye(n, dtype=A.dtype)
    if alpha == 0.0:
        return FracPower(ident, ident.copy(), alpha)
    ev = _check_positive_spectrum(A)
    if scale is None:
        mods = np.abs(ev)
        scale = float(np.sqrt(mods.min() * mods.max()))
    As = A / scale
    if alpha == 1.0:
        neg = np.linalg.inv(A)
        return FracPower(neg, A.copy(), alpha)
    neg = _neg_power_quad(As, alpha, nodes) * scale ** (-alpha)
    # A^a = A * A^-(1-a)
    pos = A @ (_neg_power_quad(As, 1.0 - alpha, nodes) * scale ** (alpha - 1.0))
    return FracPower(neg, pos, alpha)


# -- norms -------------------------------------------------------------------

class NormEstimate(float):
    """A float carrying ``is_estimate``; general-q norms are lower-bound estimates."""

    is_estimate: bool

    def __new__(cls, value, is_estimate=False, iterations=0):
        obj = super().__new__(cls, value)
        obj.is_estimate = is_estimate
        obj.iterations = iterations
        return obj


def check_q(q) -> float:
    q = float(q)
    if q in (1.0, 2.0) or math.isinf(q):
        return q
    if not 1.0 < q < math.inf:
        raise PreconditionError(f"norm exponent must be 1, 2, inf or lie in (1, inf), got {q}")
    return q


def dual_exponent(q: float) -> float:
    q = check_q(q)
    if q == 1.0:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def _dual_vector(y: np.ndarray, p: float) -> np.ndarray:
    # the vector z with ||z||_p' = 1 and z^H y = ||y||_p
    ny = np.linalg.norm(y, p)
    if ny == 0:
        return np.zeros_like(y)
    a = np.abs(y)
    phase = np.where(a > 0, y / np.where(a > 0, a, 1), 0)
    return phase * (a / ny) ** (p - 1.0)


def _qnorm_estimate(M: np.ndarray, q: float, maxiter: int = 100, rtol: float = 1e-12):
    # Higham's power method for the matrix q-norm; each iterate is a lower bound.
    qd = dual_exponent(q)
    n = M.shape[1]
    x = np.ones(n, dtype=M.dtype) / n ** (1.0 / q)
    est = 0.0
    it = 0
    for it in range(1, maxiter + 1):
        y = M @ x
        est_new = float(np.linalg.norm(y, q))
        z = M.conj().T @ _dual_vector(y, q)
        zq = np.linalg.norm(z, qd)
        if est_new <= est * (1 + rtol) or zq <= np.real(np.vdot(z, x)) * (1 + rtol):
            est = max(est, est_new)
            break
        est = est_new
        x = _dual_vector(z, qd)
    return est, it


def operator_norm(M, q=2):
    """Induced ``l^q -> l^q`` operator norm.

    ``q`` in {1, 2, inf} is exact.  Any other ``q`` in (1, inf) returns a
    power-iteration lower bound with ``is_estimate`` set on the result.
    """
    M = np.asarray(M)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    q = check_q(q)
    if M.size == 0:
        return NormEstimate(0.0)
    if q == 1.0:
        return NormEstimate(np.abs(M).sum(axis=0).max())
    if math.isinf(q):
        return NormEstimate(np.abs(M).sum(axis=1).max())
    if q == 2.0:
        if M.shape == (1, 1):
            return NormEstimate(abs(M[0, 0]))
        return NormEstimate(np.linalg.norm(M, 2))
    est, it = _qnorm_estimate(M, q)
    return NormEstimate(est, is_estimate=True, iterations=it)


# -- holomorphic estimate ----------------------------------------------------

class HolomorphicProbe(NamedTuple):
    M_alpha_est: float
    attained_at: float


def holomorphic_bound_probe(A, alpha: float, tau_grid, q=2) -> HolomorphicProbe:
    """Grid maximum of ``tau^alpha ||A^alpha exp(-tau A)||``.

    The true constant is a supremum over all ``tau > 0``; a grid maximum is
    only a lower bound for it.
    """
    A = as_square(A, "A")
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.size == 0 or np.any(tau_grid <= 0):
        raise PreconditionError("tau_grid must be a nonempty set of positive times")
    Apow = frac_power(A, alpha).pos
    best, where = -1.0, float(tau_grid[0])
    for tau in tau_grid:
        val = tau ** alpha * operator_norm(Apow @ expm(A, tau), q)
        if val > best:
            best, where = float(val), float(tau)
    return HolomorphicProbe(best, where)
