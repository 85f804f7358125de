import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trotterkit.errors import PreconditionError
from trotterkit.generators import check_A_stability
from trotterkit.heatpot import (LaplacianSpec, PotentialSpec, TruncationWarning, build_laplacian,
                                build_potential_family, gauss_weierstrass_apply, heat_kernel_1d,
                                heat_problem, kernel_mass, run_convergence_experiment,
                                scalar_problem)
from trotterkit.propagator import DeltaMesh, convergence_report, trotter_product

# -- Laplacian -----------------------------------------------------------------------


def test_laplacian_two_nodes():
    A = build_laplacian(LaplacianSpec(1, 2))
    np.testing.assert_allclose(A.op, 9.0 * np.array([[2.0, -1.0], [-1.0, 2.0]]), rtol=1e-15)


@pytest.mark.parametrize("N", [4, 17, 64])
def test_laplacian_spectrum(N):
    h = 1.0 / (N + 1)
    k = np.arange(1, N + 1)
    expected = (2.0 / h ** 2) * (1.0 - np.cos(k * math.pi * h))
    eig = np.sort(np.linalg.eigvalsh(build_laplacian(LaplacianSpec(1, N)).op))
    np.testing.assert_allclose(eig, expected, rtol=1e-10)


def test_laplacian_2d_is_spd_kronecker_sum():
    A = build_laplacian(LaplacianSpec(2, 5)).op
    assert np.array_equal(A, A.T)
    eig1 = np.linalg.eigvalsh(build_laplacian(LaplacianSpec(1, 5)).op)
    expected = np.sort((eig1[:, None] + eig1[None, :]).ravel())
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(A)), expected, rtol=1e-12)
    assert expected[0] > 0


def test_laplacian_spec_validation():
    with pytest.raises(PreconditionError):
        LaplacianSpec(3, 8)
    with pytest.raises(PreconditionError):
        LaplacianSpec(1, 1)


# -- potentials ------------------------------------------------------------------------

def test_zero_potential():
    lap = LaplacianSpec(1, 8)
    fam = build_potential_family(PotentialSpec(v1="zero"), lap)
    assert not np.any(fam(0.3))


def test_clipped_sin_is_nonnegative_and_diagonal():
    lap = LaplacianSpec(1, 9)
    fam = build_potential_family(PotentialSpec(v1="sin_clipped", rho="const", amp1=2.0), lap)
    B = fam(0.5)
    x = lap.nodes()[:, 0]
    np.testing.assert_allclose(np.diag(B), 2.0 * np.maximum(np.sin(math.pi * x), 0), rtol=1e-15)
    assert np.array_equal(B, np.diag(np.diag(B)))


def test_holder_profile_in_time():
    lap = LaplacianSpec(1, 4)
    fam = build_potential_family(PotentialSpec(v0="one", amp0=1.0, v1="one", amp1=3.0,
                                               holder_beta=0.5), lap)
    np.testing.assert_allclose(np.diag(fam(0.25)), 1.0 + 3.0 * 0.5, rtol=1e-15)
    assert fam.declared_beta == 0.5


def test_negative_potential_rejected():
    lap = LaplacianSpec(1, 8)
    with pytest.raises(PreconditionError, match="negative"):
        build_potential_family(PotentialSpec(v1="sin", rho="cos"), lap)
    # allowed once the non-negativity flag is dropped
    build_potential_family(PotentialSpec(v1="sin", rho="cos", nonneg_real_part=False), lap)


def test_unknown_profile_rejected():
    with pytest.raises(PreconditionError):
        PotentialSpec(v1="gauss")
    with pytest.raises(PreconditionError):
        PotentialSpec(rho="square")


def test_tabulated_potential_interpolates():
    lap = LaplacianSpec(1, 3)
    pot = PotentialSpec(kind="tabulated", times=(0.0, 1.0),
                        values=((0.0, 0.0, 0.0), (2.0, 4.0, 6.0)))
    np.testing.assert_allclose(np.diag(build_potential_family(pot, lap)(0.25)), [0.5, 1.0, 1.5])


# -- Gauss-Weierstrass kernel --------------------------------------------------------

@pytest.mark.parametrize("t", [1e-5, 1e-4, 1e-3, 1e-2])
def test_kernel_mass(t):
    assert abs(kernel_mass(t, 1.0 / 257) - 1.0) <= 1e-6


def test_kernel_peak():
    assert heat_kernel_1d(1 / (4 * math.pi), 0.0) == pytest.approx(1.0, rel=1e-15)


def test_kernel_semigroup_property():
    # K_t * K_s = K_{t+s}; independent of the free-space lattice sum
    h, s, t = 0.01, 2e-3, 3e-3
    x = h * np.arange(-200, 201)
    out = gauss_weierstrass_apply(t, heat_kernel_1d(s, x), h)
    np.testing.assert_allclose(out, heat_kernel_1d(t + s, x), atol=1e-9)


def test_periodic_constant_is_preserved():
    N = 64
    out = gauss_weierstrass_apply(0.01, np.ones(N), 1.0 / N, periodic=True)
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


def test_2d_kernel_factorizes():
    h = 0.01
    x = h * np.arange(-150, 151)
    u = np.outer(heat_kernel_1d(1e-3, x), heat_kernel_1d(2e-3, x))
    out = gauss_weierstrass_apply(4e-3, u, h, d=2)
    expected = np.outer(heat_kernel_1d(5e-3, x), heat_kernel_1d(6e-3, x))
    np.testing.assert_allclose(out, expected, atol=1e-9)


def test_truncation_warning():
    with pytest.warns(TruncationWarning):
        gauss_weierstrass_apply(0.05, np.ones(16), 1.0 / 17)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        x = np.linspace(-1, 1, 201)
        gauss_weierstrass_apply(1e-4, heat_kernel_1d(1e-4, x), x[1] - x[0])


@given(st.floats(1e-4, 1e-2))
def test_kernel_is_positive_and_contractive(t):
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 1, 40)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        out = gauss_weierstrass_apply(t, u, 1.0 / 41)
    assert np.all(out >= 0) and out.max() <= u.max() * (1 + 1e-12)


# -- propagator-level behaviour ------------------------------------------------------

def small_heat(N=12, **pot):
    spec = dict(v0="one", amp0=1.0, v1="sin", amp1=4.0, rho="holder", holder_beta=0.75)
    spec.update(pot)
    return heat_problem(LaplacianSpec(1, N), PotentialSpec(**spec), alpha=0.25)


def test_nonnegative_potential_is_contractive():
    p = small_heat(16, v0="zero", v1="abs_sin2", amp1=10.0)
    res = check_A_stability(p.A, p.fam, 16, DeltaMesh.uniform(1.0, 6))
    assert res.stable and res.M_est <= 1 + 1e-12


def test_zero_potential_is_exact():
    p = small_heat(v0="zero", v1="zero")
    rep = convergence_report(p.A, p.fam, 0.25, 0.75, [2, 4, 8], mesh=DeltaMesh.uniform(1.0, 4))
    assert rep.exact_match and rep.passed


def test_time_independent_potential_rate():
    p = small_heat(rho="const")
    rep = convergence_report(p.A, p.fam, 0.25, 1.0, [4, 8, 16, 32, 64],
                             mesh=DeltaMesh.uniform(1.0, 6))
    assert rep.fitted_rate >= 0.85


def test_reflection_symmetry():
    # sin(pi x) is symmetric about the midpoint, so the product commutes with the flip
    p = small_heat(11)
    U = trotter_product(p.A, p.fam, 1.0, 0.0, 8)
    J = np.eye(11)[::-1]
    np.testing.assert_allclose(J @ U @ J, U, atol=1e-14)


def test_rate_requires_ordering():
    with pytest.raises(PreconditionError):
        run_convergence_experiment(LaplacianSpec(1, 8), PotentialSpec(holder_beta=0.5), 0.5)


def test_scalar_problem():
    p = scalar_problem()
    assert p.beta == 1.0 and p.fam(0.5)[0, 0] == 0.5


@pytest.mark.slow
def test_rate_is_grid_independent():
    pot = PotentialSpec(v0="one", amp0=1.0, v1="sin", amp1=4.0)
    ladder = [4, 8, 16, 32, 64]
    rates = []
    for N in (32, 64):
        p = heat_problem(LaplacianSpec(1, N), pot, 0.25)
        rates.append(convergence_report(p.A, p.fam, 0.25, 0.75, ladder,
                                        mesh=DeltaMesh.uniform(1.0, 6)).fitted_rate)
    assert abs(rates[0] - rates[1]) <= 0.1
