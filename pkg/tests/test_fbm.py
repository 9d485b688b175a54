import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fbh.domain import s_mesh, time_grid
from fbh.errors import ConfigurationError
from fbh.fbm import (alpha_h, c_h_const, cell_cov_matrix, check_hurst, cov_rh, h_inner,
                     k_h_kernel, kstar_isometry, kstar_transform, replica_increments,
                     sample_increments, sample_noise, sample_paths, substream)


@pytest.mark.parametrize("h", [0.5, 0.5001, 0.75, 0.99])
def test_hurst_range_accepted(h):
    assert check_hurst(h) == h


@pytest.mark.parametrize("h", [0.4, 1.0, -0.1])
def test_hurst_out_of_range_names_the_parameter(h):
    with pytest.raises(ConfigurationError, match="noise.hurst out of range"):
        check_hurst(h)


def test_covariance_examples():
    assert cov_rh(0.5, 0.3, 0.7) == pytest.approx(0.3)
    assert cov_rh(0.75, 1.0, 1.0) == pytest.approx(1.0)
    assert cov_rh(0.75, 0.4, 0.4) == pytest.approx(0.4 ** 1.5)
    assert cov_rh(0.8, 0.0, 0.6) == 0.0


@given(st.floats(0.5, 0.99), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
@settings(max_examples=100, deadline=None)
def test_covariance_symmetric_and_cauchy_schwarz(h, t, s):
    r = cov_rh(h, t, s)
    assert r == pytest.approx(cov_rh(h, s, t))
    assert r ** 2 <= cov_rh(h, t, t) * cov_rh(h, s, s) * (1 + 1e-12) + 1e-300


@pytest.mark.parametrize("h", [0.55, 0.7, 0.9])
def test_c_h_against_arbitrary_precision(h):
    m = mpmath.mpf(h)
    ref = mpmath.sqrt(2 * m * mpmath.gamma(1.5 - m) / (mpmath.gamma(m + 0.5) * mpmath.gamma(2 - 2 * m)))
    assert c_h_const(h) == pytest.approx(float(ref), rel=1e-13)
    assert c_h_const(0.5) == pytest.approx(1.0)


def test_c_h_refuses_near_one():
    with pytest.raises(ConfigurationError):
        c_h_const(0.996)


@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_volterra_kernel_reproduces_covariance(h):
    t, s = 1.0, 0.6
    v = quad(lambda r: k_h_kernel(h, t, r) * k_h_kernel(h, s, r), 0.0, s, limit=200,
             points=[1e-6, 1e-3])[0]
    assert v == pytest.approx(cov_rh(h, t, s), rel=1e-7)


def test_volterra_kernel_domain():
    assert k_h_kernel(0.5, 1.0, 0.3) == 1.0
    with pytest.raises(ConfigurationError):
        k_h_kernel(0.75, 0.3, 0.5)


def test_increment_covariance_matrix():
    g = time_grid(1.0, 32)
    C = cell_cov_matrix(0.75, g.nodes)
    assert C.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(C > 0)
    assert np.linalg.eigvalsh(C).min() > 0
    np.testing.assert_allclose(cell_cov_matrix(0.5, g.nodes), np.eye(32) / 32, atol=1e-15)
    # a window covering the whole range changes nothing; a window clips cells
    np.testing.assert_allclose(cell_cov_matrix(0.75, g.nodes, (0.0, 1.0)), C)
    W = cell_cov_matrix(0.75, g.nodes, (0.5, 1.0))
    assert np.all(W[:16] == 0.0)
    assert W.sum() == pytest.approx(0.5 ** 1.5, abs=1e-12)


def test_indicator_isometry_equals_power_of_t():
    t = 0.7
    for h in (0.6, 0.75, 0.9):
        assert kstar_isometry(lambda r: np.ones_like(r), t, h) == pytest.approx(t ** (2 * h), rel=1e-5)
    g = time_grid(t, 50)
    one = h_inner(lambda s, sig: np.ones_like(s), lambda s, sig: np.ones_like(s), s_mesh(1), g, 0.75)
    assert one == pytest.approx(t ** 1.5, rel=1e-12)


def test_h_inner_against_double_integral():
    h, t = 0.75, 1.0
    phi = lambda s: 1.0 + s ** 2  # noqa: E731
    a = 2 * h - 2

    def inner(s):
        left = quad(phi, 0.0, s, weight="alg", wvar=(0.0, a))[0] if s > 0 else 0.0
        right = quad(phi, s, t, weight="alg", wvar=(a, 0.0))[0] if s < t else 0.0
        return phi(s) * (left + right)

    ref = alpha_h(h) * quad(inner, 0.0, t, epsabs=1e-11, limit=200)[0]
    g = time_grid(t, 400)
    v = h_inner(lambda s, sig: phi(s), lambda s, sig: phi(s), s_mesh(1), g, h)
    assert v == pytest.approx(ref, rel=2e-3)


def test_kstar_transform_vanishes_outside_range():
    ks = kstar_transform(lambda r: np.ones_like(r), 0.5, 0.75)
    assert ks(0.6) == 0.0
    assert ks(0.2) > 0.0
    with pytest.raises(ConfigurationError):
        kstar_transform(lambda r: r, 0.5, 0.5)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_h_inner_symmetric_and_nonnegative(a, b):
    g = time_grid(1.0, 16)
    m = s_mesh(2)
    phi = lambda s, sig: a[0] + a[1] * s + a[2] * sig  # noqa: E731
    psi = lambda s, sig: b[0] + b[1] * s ** 2 + b[2] * sig  # noqa: E731
    assert h_inner(phi, psi, m, g, 0.7) == pytest.approx(h_inner(psi, phi, m, g, 0.7), abs=1e-12)
    assert h_inner(phi, phi, m, g, 0.7) >= -1e-14


def test_substreams_are_deterministic_and_distinct():
    a = substream(7, 0, 0).standard_normal(4)
    np.testing.assert_array_equal(a, substream(7, 0, 0).standard_normal(4))
    assert not np.allclose(a, substream(7, 1, 0).standard_normal(4))
    assert not np.allclose(a, substream(7, 0, 1).standard_normal(4))


def test_paths_start_at_zero_and_restrict_consistently():
    g = time_grid(1.0, 16)
    m = s_mesh(3)
    p = sample_noise(m, g, 0.75, 11)
    assert np.all(p.values[:, 0] == 0.0)
    q = p.restrict(4)
    assert q.grid.n_steps == 4
    np.testing.assert_array_equal(q.values, p.values[:, ::4])
    np.testing.assert_allclose(q.increments.sum(axis=1), p.increments.sum(axis=1))
    with pytest.raises(ConfigurationError):
        p.restrict(3)


def test_replica_blocks_do_not_depend_on_grouping():
    g = time_grid(1.0, 8)
    m = s_mesh(2)
    whole = sample_paths(m, g, 0.75, 3, range(6))
    parts = np.concatenate([sample_paths(m, g, 0.75, 3, [0, 1]), sample_paths(m, g, 0.75, 3, [2, 3, 4, 5])])
    np.testing.assert_array_equal(whole, parts)
    np.testing.assert_allclose(sample_increments(m, g, 0.75, 3, [2]), np.diff(whole[2:3], axis=2))


def test_replica_r_is_the_path_of_seed_plus_r():
    g = time_grid(1.0, 8)
    m = s_mesh(2)
    block = replica_increments(m, g, 0.75, 100, [0, 3])
    np.testing.assert_allclose(block[1], replica_increments(m, g, 0.75, 103, [0])[0])
    np.testing.assert_allclose(block[0], sample_increments(m, g, 0.75, 100, [0])[0])


def test_sampled_covariance_matches_in_small_sample():
    g = time_grid(1.0, 6)
    m = s_mesh(2, 2.0)
    v = sample_paths(m, g, 0.7, 5, range(4000))[:, :, 1:]
    R = cov_rh(0.7, g.nodes[1:, None], g.nodes[None, 1:])
    for j in range(2):
        emp = v[:, j].T @ v[:, j] / len(v)
        se = np.sqrt((np.outer(np.diag(R), np.diag(R)) + R ** 2) / len(v))
        assert np.all(np.abs(emp - R) < 4.5 * se)
