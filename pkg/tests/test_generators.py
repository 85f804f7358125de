import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trotterkit.errors import MeshError, PreconditionError
from trotterkit.generators import (ClassBoundWarning, Generator, TimeFamily, adjoint_bound_C1star,
                                   audit, check_A_stability, check_family_class,
                                   check_stability_powers, constant_family, default_pair_grid,
                                   holder_constant_Lbeta, relative_bound_Calpha)
from trotterkit.linops import frac_power
from trotterkit.propagator import DeltaMesh

from conftest import random_spd


def scalar_family(fn, T=1.0, **kw):
    return TimeFamily(T, lambda t: np.array([[fn(t)]]), dim=1, **kw)


def test_generator_checks_spectrum_and_class():
    with pytest.raises(PreconditionError):
        Generator(np.diag([1.0, -1.0]))
    with pytest.raises(PreconditionError):
        Generator(np.eye(2), class_M=0.5)
    # without the holomorphic flag any square matrix is accepted
    Generator(np.diag([1.0, -1.0]), holomorphic=False)


def test_time_family_contract():
    fam = constant_family(np.eye(2), T=1.0)
    with pytest.raises(PreconditionError):
        fam(1.5)
    bad = TimeFamily(1.0, lambda t: np.eye(3), dim=2)
    with pytest.raises(PreconditionError):
        bad(0.5)
    with pytest.raises(PreconditionError):
        TimeFamily(1.0, lambda t: np.eye(2), declared_beta=0.5,
                   declared_alpha=0.6).require_rate_regime()


# -- C_alpha -------------------------------------------------------------------

def test_Calpha_exact_cancellation(rng):
    A = Generator(random_spd(rng, 5))
    fam = constant_family(A.power(0.4).pos)
    assert relative_bound_Calpha(A, fam, 0.4) == pytest.approx(1.0, abs=1e-10)


def test_Calpha_zero_family():
    A = Generator(np.diag([1.0, 2.0]))
    assert relative_bound_Calpha(A, constant_family(np.zeros((2, 2))), 0.5) == 0.0


def test_Calpha_scalar():
    A = Generator(np.array([[2.0]]))
    assert relative_bound_Calpha(A, scalar_family(lambda t: t), 0.5) == pytest.approx(
        2 ** -0.5, rel=1e-14)


@given(st.floats(0.1, 10.0), st.floats(0.05, 0.95))
def test_Calpha_scale_covariance(c, alpha):
    A = Generator(np.array([[2.0, 0.5], [0.0, 3.0]]))
    fam = TimeFamily(1.0, lambda t: np.array([[t, 1.0], [0.0, math.sin(3 * t)]]), dim=2)
    base = relative_bound_Calpha(A, fam, alpha)
    assert relative_bound_Calpha(A, fam.scaled(c), alpha) == pytest.approx(c * base, rel=1e-12)


def test_Calpha_mesh_refinement_monotone():
    A = Generator(np.array([[2.0]]))
    fam = scalar_family(lambda t: math.sin(7 * t) ** 2)
    coarse = np.linspace(0, 1, 9)
    fine = np.linspace(0, 1, 65)
    assert relative_bound_Calpha(A, fam, 0.3, fine) >= relative_bound_Calpha(A, fam, 0.3, coarse)


# -- L_beta ---------------------------------------------------------------------

def test_Lbeta_constant_family_is_zero():
    A = Generator(np.diag([1.0, 3.0]))
    assert holder_constant_Lbeta(A, constant_family(np.ones((2, 2))), 0.3, 0.7) == 0.0


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_Lbeta_linear_scalar_is_one(alpha):
    A = Generator(np.array([[1.0]]))
    val = holder_constant_Lbeta(A, scalar_family(lambda t: t), alpha, 1.0)
    assert val == pytest.approx(1.0, rel=1e-12)


def test_Lbeta_sqrt_attained_at_zero():
    A = Generator(np.array([[1.0]]))
    val = holder_constant_Lbeta(A, scalar_family(math.sqrt), 0.2, 0.5)
    assert val == pytest.approx(1.0, rel=1e-12)


def test_Lbeta_rejects_coincident_pair():
    A = Generator(np.array([[1.0]]))
    with pytest.raises(MeshError):
        holder_constant_Lbeta(A, scalar_family(lambda t: t), 0.2, 0.5,
                              pair_grid=[[0.5, 0.5], [0.7, 0.2]])


def test_Lbeta_exponent_ordering():
    A = Generator(np.array([[2.0, 0.3], [0.0, 1.0]]))
    fam = TimeFamily(1.0, lambda t: np.array([[t ** 0.8, 0.0], [t, 1.0]]), dim=2)
    pairs = default_pair_grid(1.0, 17)
    small = holder_constant_Lbeta(A, fam, 0.1, 0.3, pairs)
    large = holder_constant_Lbeta(A, fam, 0.1, 0.8, pairs)
    assert small <= large


# -- C_1* ----------------------------------------------------------------------

def test_C1star_diagonal():
    A = Generator(np.diag([1.0, 2.0]))
    assert adjoint_bound_C1star(A, constant_family(np.diag([3.0, 8.0]))) == pytest.approx(4.0)


def test_C1star_zero_and_adjoint_symmetry(rng):
    A = Generator(random_spd(rng, 4) + 0.2 * rng.standard_normal((4, 4)))
    assert adjoint_bound_C1star(A, constant_family(np.zeros((4, 4)))) == 0.0
    fam = TimeFamily(1.0, lambda t: np.cos(t) * np.arange(16.0).reshape(4, 4), dim=4)
    grid = np.linspace(0, 1, 65)
    direct = max(np.linalg.norm(np.linalg.inv(A.op) @ fam(t), 2) for t in grid)
    assert adjoint_bound_C1star(A, fam, grid) == pytest.approx(direct, rel=1e-12)


def test_C1star_singular_generator():
    A = Generator(np.array([[0.0, 1.0], [0.0, 0.0]]), holomorphic=False)
    with pytest.raises(PreconditionError):
        adjoint_bound_C1star(A, constant_family(np.eye(2)))


# -- stability -------------------------------------------------------------------

def test_stability_contractions(rng):
    A = Generator(random_spd(rng, 6))
    S = rng.standard_normal((6, 6))
    fam = TimeFamily(1.0, lambda t: (1 + t) * S @ S.T + t * (S - S.T), dim=6)
    res = check_A_stability(A, fam, n_max=16)
    assert res.stable and res.M_est <= 1 + 1e-12


def test_stability_zero_family_is_free_semigroup():
    A = Generator(np.array([[2.0, 1.0], [-1.0, 2.0]]))
    fam = constant_family(np.zeros((2, 2)))
    mesh = DeltaMesh.uniform(1.0, 4)
    free = max(np.linalg.norm(A.semigroup(t - s), 2) for t, s in mesh.points)
    assert check_A_stability(A, fam, 8, mesh).M_est == pytest.approx(free, rel=1e-12)


def test_stability_expansive_scalar():
    A = Generator(np.array([[1.0]]))
    mesh = DeltaMesh(1.0, [(t, s) for t in np.linspace(0, 1, 5) for s in np.linspace(0, 1, 5)
                           if s < t])
    mild = check_A_stability(A, constant_family([[-0.5]]), 8, mesh)
    assert mild.M_est == pytest.approx(1.0, abs=1e-12) or mild.M_est < 1.0
    strong = check_A_stability(A, constant_family([[-2.0]]), 8, mesh)
    assert strong.M_est == pytest.approx(math.e, rel=1e-12)
    assert strong.attained[:2] == (1.0, 0.0)


def test_stability_powers():
    A = Generator(np.array([[1.0, 0.4], [0.0, 2.0]]))
    fam = TimeFamily(1.0, lambda t: np.diag([t, 1 - t]), dim=2)
    assert check_stability_powers(A, fam, 0.0, 3, 3) == 1.0
    # m = n reproduces the sweep's product norm at the same pair
    mesh = DeltaMesh(1.0, [(0.75, 0.25)])
    n = 5
    sweep = check_A_stability(A, fam, n, mesh).M_est
    direct = max(check_stability_powers(A, fam, 0.5, k, k, s=0.25) for k in range(1, n + 1))
    assert direct == pytest.approx(sweep, rel=1e-14)
    # a product that would run past T vanishes
    assert check_stability_powers(A, fam, 0.8, 2, 3) == 0.0


@given(st.integers(1, 8), st.integers(1, 8), st.floats(0.01, 1.0))
def test_stability_powers_contraction(n, m, tau):
    A = Generator(np.diag([1.0, 4.0]))
    fam = TimeFamily(1.0, lambda t: np.array([[t, 0.0], [0.0, 2 * t]]), dim=2)
    assert check_stability_powers(A, fam, tau, n, m, s_points=3) <= 1 + 1e-12


def test_family_class_warns_or_raises():
    fam = constant_family([[-1.0]], class_M=1.0)
    with pytest.warns(ClassBoundWarning):
        check_family_class(fam, [0.5])
    strict = constant_family([[-1.0]], class_M=1.0, strict_class=True)
    with pytest.raises(PreconditionError):
        check_family_class(strict, [0.5])
    ok = constant_family([[1.0]], class_M=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_family_class(ok, [0.5, 1.0]) <= 1.0


def test_audit_report():
    A = Generator(np.array([[1.0]]))
    rep = audit(A, scalar_family(lambda t: t), 0.2, 1.0, t_points=9, pair_points=9, n_max=4,
                delta_mesh=DeltaMesh.uniform(1.0, 4))
    d = rep.as_dict()
    assert d["vacuous_assumptions"] == ["A2", "A4"]
    assert rep.L_beta == pytest.approx(1.0)
    assert rep.stable and rep.stability_M <= 1.0
    assert all(v >= 0 for v in (rep.C_alpha, rep.L_beta, rep.C_1_star, rep.stability_M))
    assert "9" in d["grids_used"]["t_grid"]


def test_generator_power_cache_matches_frac_power(rng):
    A = Generator(random_spd(rng, 4))
    np.testing.assert_array_equal(A.power(0.3).neg, frac_power(A.op, 0.3).neg)
    assert A.power(0.3) is A.power(0.3)
