import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fbh.domain import build_domain, time_grid
from fbh.errors import CapabilityError, ConfigurationError
from fbh.heat_kernel import (analytic_bound, analytic_bound_max, build_kernel_table,
                             build_slab_table, cell_kernel, fit_singular_exponent, gaussian,
                             interval_images, interval_kernel, interval_modes,
                             interval_time_integral, kernel_parametrix, kernel_spectral,
                             neumann_images, parametrix_terms, resolvent, robin_eigensystem,
                             robin_kernel_1d, singular_boundary_integral, split_gradient,
                             verify_kernel_bounds)
from fbh.heat_kernel.spectral import SWITCH

XS = np.linspace(0.0, 1.0, 4001)


# --------------------------------------------------------------------------
# eigenpairs
# --------------------------------------------------------------------------

@pytest.mark.parametrize("beta", [0.1, 1.0, 5.0])
def test_modes_orthonormal(beta):
    phi = interval_modes(beta, 8)(XS)
    gram = np.trapezoid(phi[:, None] * phi[None], XS, axis=-1)
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-6)


@pytest.mark.parametrize("beta", [0.3, 1.0, 7.0])
def test_modes_satisfy_the_robin_condition(beta):
    m = interval_modes(beta, 10)
    left = -m.derivative(np.array(0.0)) + beta * m(np.array(0.0))
    right = m.derivative(np.array(1.0)) + beta * m(np.array(1.0))
    np.testing.assert_allclose(left, 0.0, atol=1e-10)
    np.testing.assert_allclose(right, 0.0, atol=1e-10)


def test_eigenvalues_positive_increasing_and_bracketed():
    m = interval_modes(2.0, 20)
    lam = m.eigenvalues
    assert np.all(lam > 0) and np.all(np.diff(lam) > 0)
    n = np.arange(20)
    assert np.all((m.k > n * np.pi) & (m.k < (n + 1) * np.pi))


def test_dirichlet_and_neumann_limits():
    big = interval_modes(1e8, 5)
    np.testing.assert_allclose(big.k, np.pi * np.arange(1, 6), rtol=1e-6)
    small = interval_modes(1e-10, 5)
    np.testing.assert_allclose(small.k, np.pi * np.arange(5), atol=1e-4)


def test_eigenvalues_match_finite_differences():
    beta, n = 1.5, 500
    h = 1.0 / n
    # vertex-centred FD of -1/2 u'' with ghost points eliminated by the Robin condition
    main = np.full(n + 1, 1.0 / h ** 2)
    main[0] += beta / h
    main[-1] += beta / h
    off = np.full(n, -0.5 / h ** 2)
    A = np.diag(main) + np.diag(off, 1) + np.diag(off, -1)
    A[0, 1] = A[-1, -2] = -1.0 / h ** 2
    fd = np.sort(np.linalg.eigvals(A).real)[:4]
    np.testing.assert_allclose(fd, interval_modes(beta, 4).eigenvalues, rtol=1e-4)


def test_rectangle_eigensystem_sorted_tensor_products():
    d = build_domain("rectangle", 1.0, 2)
    eig = robin_eigensystem(d, 30)
    lam1 = eig.modes.eigenvalues
    assert np.all(np.diff(eig.eigenvalues) >= 0)
    np.testing.assert_allclose(eig.eigenvalues, lam1[eig.pairs[:, 0]] + lam1[eig.pairs[:, 1]])
    assert eig.eigenvalues[0] == pytest.approx(2 * lam1[0])


# --------------------------------------------------------------------------
# spectral kernel
# --------------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_kernel_mass_at_most_one_and_symmetric(t):
    x = np.linspace(0, 1, 9)
    mass = [quad(lambda y: interval_kernel(1.0, t, xi, y), 0, 1, limit=200)[0] for xi in x]
    assert np.all(np.array(mass) <= 1.0 + 1e-10)
    K = interval_kernel(1.0, t, x[:, None], x[None])
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    # positive up to the absolute accuracy of the truncated eigen-sum
    assert np.all(K > -1e-11)
    assert np.all(K[np.abs(x[:, None] - x[None]) < 0.3] > 0)


def test_mass_decreases_in_time():
    m = [quad(lambda y: interval_kernel(1.0, t, 0.3, y), 0, 1)[0] for t in (0.05, 0.2, 0.8)]
    assert m[0] > m[1] > m[2]


def test_long_time_decay_follows_the_first_mode():
    lam = interval_modes(1.0, 1).eigenvalues[0]
    t = np.array([2.0, 4.0, 6.0])
    p = interval_kernel(1.0, t, 0.2, 0.0)
    slope = np.polyfit(t, np.log(p), 1)[0]
    assert slope == pytest.approx(-lam, rel=1e-4)


def test_small_beta_approaches_neumann_equilibrium():
    # second Neumann mode contributes 2 exp(-pi^2 t / 2): 1e-4 at t = 2
    assert interval_kernel(1e-6, 2.0, 0.3, 0.9) == pytest.approx(1.0, abs=1e-3)


def test_chapman_kolmogorov():
    s, t, x, y = 0.03, 0.05, 0.2, 0.0
    lhs = quad(lambda z: interval_kernel(1.0, s, x, z) * interval_kernel(1.0, t, z, y), 0, 1,
               limit=200, epsabs=1e-12)[0]
    assert lhs == pytest.approx(interval_kernel(1.0, s + t, x, y), rel=1e-8)


def test_image_formula_equals_eigen_sum_at_short_lag():
    y = np.linspace(0, 1, 7)
    for t in (0.002, 0.005, SWITCH):
        np.testing.assert_allclose(interval_images(1.0, t, y[:, None], y[None]),
                                   interval_kernel(1.0, t, y[:, None], y[None], tail_tol=1e-15),
                                   rtol=1e-9, atol=1e-12)
    lo = robin_kernel_1d(1.0, SWITCH * (1 - 1e-9), 0.1, 0.0)
    hi = robin_kernel_1d(1.0, SWITCH * (1 + 1e-9), 0.1, 0.0)
    assert lo == pytest.approx(hi, rel=1e-7)


def test_neumann_images_match_cosine_series():
    np.testing.assert_allclose(neumann_images(0.07, 0.3, 0.8),
                               interval_kernel(0.0, 0.07, 0.3, 0.8, tail_tol=1e-15), rtol=1e-10)


def test_time_integrals_and_resolvent():
    beta, x, y = 1.0, 0.3, 0.0
    f = lambda v: 2.0 * v * robin_kernel_1d(beta, v * v, x, y)  # noqa: E731
    total = quad(f, 0.0, 1.0, epsabs=1e-13, limit=200)[0] + interval_time_integral(beta, 1.0, 200.0, x, y)
    assert total == pytest.approx(resolvent(beta, x, y), abs=1e-9)
    slab = interval_time_integral(beta, 0.1, 0.3, x, y)
    assert slab == pytest.approx(quad(lambda t: interval_kernel(beta, t, x, y), 0.1, 0.3)[0], rel=1e-10)
    with pytest.raises(ConfigurationError):
        interval_time_integral(beta, 0.3, 0.1, x, y)


def test_rectangle_kernel_factorizes():
    d = build_domain("rectangle", 2.0, 2)
    eig = robin_eigensystem(d, 400)
    x, y = np.array([0.3, 0.6]), np.array([0.5, 0.0])
    v = kernel_spectral(eig, 0.2, x, y)
    assert v == pytest.approx(interval_kernel(2.0, 0.2, 0.3, 0.5) * interval_kernel(2.0, 0.2, 0.6, 0.0))


def test_spectral_kernel_refuses_too_few_modes():
    from fbh.errors import NumericalError
    eig = robin_eigensystem(build_domain("interval", 1.0), 3)
    with pytest.raises(NumericalError):
        kernel_spectral(eig, 1e-4, 0.5, 0.0)
    with pytest.raises(ConfigurationError):
        kernel_spectral(eig, 0.0, 0.5, 0.0)


# --------------------------------------------------------------------------
# parametrix
# --------------------------------------------------------------------------

@pytest.mark.parametrize("beta", [0.5, 1.0])
@pytest.mark.parametrize("x", [0.0, 0.3, 1.0])
def test_parametrix_agrees_with_spectral(beta, x):
    d = build_domain("interval", beta)
    for t in (0.02, 0.06):
        p = kernel_parametrix(d, t, x, 0.0)
        assert p == pytest.approx(robin_kernel_1d(beta, t, x, 0.0), rel=1e-4)


def test_parametrix_without_corrections_is_twice_the_gaussian():
    d = build_domain("interval", 1.0)
    assert kernel_parametrix(d, 0.05, 0.2, 0.0, n_terms=0) == pytest.approx(2 * gaussian(0.05, 0.2))


def test_zero_beta_parametrix_matches_images():
    d = build_domain("interval", 1.0)
    for x in (0.0, 0.4, 1.0):
        assert kernel_parametrix(d, 0.08, x, 1.0, beta=0.0) == pytest.approx(
            neumann_images(0.08, x, 1.0), abs=1e-10)


def test_parametrix_terms_shrink():
    terms = parametrix_terms(1.0, 0.05, 0.0, 0.0)
    mags = np.abs(terms[1:])
    assert np.all(mags[1:] / mags[:-1] < 0.5)


def test_parametrix_input_checks():
    d = build_domain("interval", 1.0)
    with pytest.raises(ConfigurationError):
        kernel_parametrix(d, 0.3, 0.2, 0.0)
    with pytest.raises(ConfigurationError):
        kernel_parametrix(d, 0.05, 0.2, 0.5)
    with pytest.raises(ConfigurationError):
        kernel_parametrix(d, 0.05, 0.2, 0.0, n_terms=7)
    with pytest.raises(CapabilityError):
        kernel_parametrix(build_domain("rectangle", 1.0, 2), 0.05, [0.2, 0.3], [0.5, 0.0])


# --------------------------------------------------------------------------
# tables and estimates
# --------------------------------------------------------------------------

def test_kernel_table_rows_and_methods():
    d = build_domain("interval", 1.0)
    spectral = build_kernel_table(d, [0.03, 0.08], points=[0.0, 0.5])
    par = build_kernel_table(d, [0.03, 0.08], points=[0.0, 0.5], method="parametrix")
    assert spectral.values.shape == (2, 2, 2)
    np.testing.assert_allclose(par.values, spectral.values, rtol=1e-4)
    rows = spectral.rows()
    assert len(rows) == 8 and rows[0][0] == "spectral"
    with pytest.raises(ConfigurationError):
        build_kernel_table(d, [0.0])


@pytest.mark.parametrize("kind", ["interval", "rectangle"])
def test_kernel_estimates_hold_with_finite_constants(kind):
    d = build_domain(kind, 1.0, 4)
    table = build_kernel_table(d, np.geomspace(0.01, 0.2, 5))
    for mode in ("upper", "lower"):
        rep = verify_kernel_bounds(table, mode)
        assert rep.satisfied and np.isfinite(rep.constant) and rep.constant > 0
    g = verify_kernel_bounds(table, "gradient")
    gauss, alg = split_gradient(g)
    assert gauss.satisfied and alg.satisfied
    assert 0 < gauss.constant <= 1


def test_bound_mode_and_mu_validation():
    table = build_kernel_table(build_domain("interval", 1.0), [0.05])
    with pytest.raises(ConfigurationError):
        verify_kernel_bounds(table, "sideways")
    with pytest.raises(ConfigurationError):
        verify_kernel_bounds(table, "upper", mu=1.2)


def test_singular_integral_examples():
    sq = build_domain("rectangle", 1.0, 2)
    assert singular_boundary_integral(sq, 0.0, 0.0, [0.5, 0.0], [0.7, 0.0]) == pytest.approx(4.0)
    # a single singularity: closed form on the edge plus the other three edges
    v = singular_boundary_integral(sq, 0.5, 0.0, [0.5, 0.0], [0.7, 0.0])
    edge = 2 * 2 * np.sqrt(0.5)
    rest = sum(quad(f, 0, 1)[0] for f in (
        lambda s: ((0.5) ** 2 + s ** 2) ** -0.25,      # right edge
        lambda s: ((0.5 - s) ** 2 + 1.0) ** -0.25,    # top edge
        lambda s: (0.25 + s ** 2) ** -0.25))          # left edge
    assert v == pytest.approx(edge + rest, rel=1e-9)
    for a, b in ((1.0, 0.0), (0.5, 0.5)):
        with pytest.raises(ConfigurationError):
            singular_boundary_integral(sq, a, b, [0.5, 0.0], [0.7, 0.0])


def test_singular_exponent_fit():
    sq = build_domain("rectangle", 1.0, 2)
    fit = fit_singular_exponent(sq, 0.75, 0.75)
    assert fit.satisfied and fit.exponent == pytest.approx(-0.5, abs=0.05)
    assert fit_singular_exponent(sq, 0.25, 0.25).satisfied


@given(st.floats(0.05, 5.0), st.floats(0.0, 50.0))
@settings(max_examples=100, deadline=None)
def test_analytic_bound_never_exceeds_its_maximum(alpha, x):
    assert analytic_bound(alpha, x) <= analytic_bound_max(alpha) * (1 + 1e-12)


# --------------------------------------------------------------------------
# slab integrals
# --------------------------------------------------------------------------

def test_interval_slabs_against_quadrature():
    d = build_domain("interval", 1.0)
    g = time_grid(0.5, 10)
    slab = build_slab_table(d, g, [[0.3]])
    dt = g.dt
    for m in (1, 2, 7):
        for tx, x in ((0, 0.0), (2, 0.3)):
            ref = quad(lambda v: 2 * v * robin_kernel_1d(1.0, v * v, x, 1.0), np.sqrt((m - 1) * dt),
                       np.sqrt(m * dt), epsabs=1e-13)[0]
            assert slab.weights[m - 1, tx, 1] == pytest.approx(ref, rel=1e-9, abs=1e-14)
    assert slab.averages(0).shape == (10, 2)


def test_rectangle_cell_kernel_against_quadrature():
    d = build_domain("rectangle", 1.5, 2)
    x = np.array([[0.3, 0.4]])
    for tau in (0.004, 0.05):
        ck = cell_kernel(d, tau, x)[0, 0]
        # cell 0: bottom edge, arclength [0, 0.5]
        ref = quad(lambda s: robin_kernel_1d(1.5, tau, 0.3, s) * robin_kernel_1d(1.5, tau, 0.4, 0.0),
                   0.0, 0.5, epsabs=1e-14)[0]
        assert ck[0] == pytest.approx(ref, rel=1e-9)


def test_slab_table_rejects_boundary_targets():
    d = build_domain("interval", 1.0)
    with pytest.raises(ConfigurationError):
        build_slab_table(d, time_grid(0.5, 4), [[0.0]])
