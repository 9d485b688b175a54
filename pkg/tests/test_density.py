import numpy as np
import pytest
from scipy import stats

from conftest import make_problem
from fbh.density import density_compare, kde, mc_ensemble, symmetry_gap
from fbh.errors import ConfigurationError, NumericalError
from fbh.nonlinear_solver import nonlinearity
from fbh.stoch_conv import simulate_z, variance_z


def test_kde_recovers_a_standard_normal():
    x = np.random.default_rng(1).standard_normal(20000)
    est = kde(x)
    assert est.mass == pytest.approx(1.0, abs=1e-3)
    assert np.max(np.abs(est.values - stats.norm.pdf(est.eval_grid))) < 0.02
    assert est.bandwidth == pytest.approx(1.06 * x.std(ddof=1) * 20000 ** -0.2)
    assert len(est.eval_grid) == 201
    assert est.eval_grid[-1] - est.eval_grid[0] == pytest.approx(10 * x.std(ddof=1))
    assert symmetry_gap(x, est) < 0.02


def test_density_compare_on_exact_gaussian_samples():
    x = 1.5 * np.random.default_rng(2).standard_normal(20000)
    cmp = density_compare(kde(x), x, 2.25)
    assert cmp["l1_error"] < 0.05 and cmp["ks_pvalue"] > 0.01
    wrong = density_compare(kde(x), x, 1.0)
    assert wrong["ks_pvalue"] < 1e-6 and wrong["l1_error"] > 0.1


def test_kde_input_errors():
    with pytest.raises(NumericalError):
        kde(np.zeros(500))
    with pytest.raises(ConfigurationError):
        kde(np.arange(50.0))
    with pytest.raises(ConfigurationError):
        density_compare(kde(np.random.default_rng(0).standard_normal(200)), np.zeros(200), 0.0)


def test_peak_scaled_stays_bounded_for_continuous_laws_and_grows_with_atoms():
    rng = np.random.default_rng(3)
    smooth = kde(rng.standard_normal(5000))
    atom = np.concatenate([rng.standard_normal(2500), np.zeros(2500)])
    assert kde(atom).peak_scaled() > 2 * smooth.peak_scaled()


def test_linear_ensemble_is_the_gaussian_field(linear_problem):
    p = linear_problem
    n = p.grid.n_steps
    ens = mc_ensemble(p, 400, 11, x=np.array([0.5]), chunk=150)
    assert ens.n_samples == 400 and ens.failed == []
    # replica r is the single path of seed 11 + r
    z = np.array([simulate_z(p.slab, p.alpha_mat, p.mesh, p.hurst, 11 + r, [0], n, 2)[0]
                  for r in (0, 7)])
    np.testing.assert_allclose(ens.samples[[0, 7]], z, atol=1e-12)
    boundary = mc_ensemble(p, 400, 11, x=0)
    var = variance_z(p.slab, p.alpha_mat, p.mesh, p.hurst, n, 0)
    assert boundary.samples.var() == pytest.approx(var, rel=0.25)


def test_ensemble_independent_of_jobs_and_chunking(tanh_problem):
    a = mc_ensemble(tanh_problem, 300, 5, x=0, chunk=100, jobs=1)
    b = mc_ensemble(tanh_problem, 300, 5, x=0, chunk=100, jobs=3)
    c = mc_ensemble(tanh_problem, 300, 5, x=0, chunk=300, jobs=1)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_allclose(a.samples, c.samples, atol=1e-12)


def test_nonlinear_law_departs_from_the_gaussian_oracle():
    p = make_problem(nonlinearity("tanh", 5.0), n_steps=20)
    ens = mc_ensemble(p, 2000, 1, x=0)
    var = variance_z(p.slab, p.alpha_mat, p.mesh, p.hurst, 20, 0)
    assert density_compare(kde(ens.samples), ens.samples, var)["ks_pvalue"] < 1e-3


def test_ensemble_size_check(tanh_problem):
    with pytest.raises(ConfigurationError):
        mc_ensemble(tanh_problem, 10, 1)
