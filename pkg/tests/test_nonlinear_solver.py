import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from conftest import make_problem
from fbh.errors import CapabilityError, ConfigurationError, ConvergenceError
from fbh.fbm import sample_paths
from fbh.heat_kernel import interval_kernel
from fbh.nonlinear_solver import (boundary_field, boundary_z, contraction_diagnostics,
                                  fixed_point_residual, interior_solution, march_boundary,
                                  nonlinearity, picard_boundary, sample_fields, solve_replicas,
                                  weighted_norm)
from fbh.stoch_conv import z_field


def with_g(problem, g):
    return dataclasses.replace(problem, g=g)


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------

@pytest.mark.parametrize("kind,L,c", [("zero", 0, 0), ("constant", 0, 0.7), ("linear", 0, -0.4),
                                      ("tanh", 1.0, 0), ("tanh", 3.0, 0), ("scaled_tanh", 5.0, 0)])
def test_library_satisfies_its_hypotheses(kind, L, c):
    g = nonlinearity(kind, L, c)
    assert g.check()


@given(st.floats(-4, 4), st.integers(0, 3))
@settings(max_examples=60, deadline=None)
def test_tanh_derivatives_match_finite_differences(u, n):
    g = nonlinearity("tanh", 2.0)
    h = 1e-5
    fd = (g.derivative(u + h, n) - g.derivative(u - h, n)) / (2 * h)
    assert float(g.derivative(u, n + 1)) == pytest.approx(float(fd), abs=1e-6)


def test_tanh_derivative_bound_covers_fourth_derivative():
    g = nonlinearity("tanh", 1.0)
    u = np.linspace(-5, 5, 20001)
    u0 = u[np.argmax(np.abs(g.derivative(u, 4)))]
    best = minimize_scalar(lambda v: -abs(float(g.derivative(v, 4))), bounds=(u0 - 1e-3, u0 + 1e-3),
                           method="bounded", options={"xatol": 1e-12})
    assert -best.fun == pytest.approx(g.derivative_bound, rel=1e-9)
    assert nonlinearity("scaled_tanh", 4.0).lipschitz == pytest.approx(1.0)
    with pytest.raises(CapabilityError):
        g.derivative(0.0, 5)
    with pytest.raises(ConfigurationError):
        nonlinearity("cubic")


# --------------------------------------------------------------------------
# boundary solver
# --------------------------------------------------------------------------

def test_zero_nonlinearity_returns_z(tanh_problem):
    p = with_g(tanh_problem, nonlinearity("zero"))
    _, z = boundary_z(p, 5, range(2))
    u, rep = picard_boundary(p, z)
    np.testing.assert_array_equal(u, z)
    assert rep.iterates == 1 and rep.converged


def test_constant_nonlinearity_matches_quadrature(tanh_problem):
    c = 0.7
    p = with_g(tanh_problem, nonlinearity("constant", c=c))
    _, z = boundary_z(p, 5, [0])
    u, _ = picard_boundary(p, z[0])
    T = p.grid.horizon
    f = lambda v: 2 * v * sum(interval_kernel(1.0, v * v, 0.0, y) for y in (0.0, 1.0))  # noqa: E731
    oracle = c * quad(f, 0.0, np.sqrt(T), epsabs=1e-14, epsrel=1e-13, limit=400)[0]
    assert u[-1, 0] - z[0, -1, 0] == pytest.approx(oracle, abs=1e-8)


def test_picard_matches_direct_march_and_has_tiny_residual(tanh_problem):
    _, z = boundary_z(tanh_problem, 11, range(3))
    u, rep = picard_boundary(tanh_problem, z, tol=1e-12)
    np.testing.assert_allclose(u, march_boundary(tanh_problem, z), atol=1e-10)
    assert fixed_point_residual(tanh_problem, u, z) < 1e-12
    assert rep.converged and rep.increment_norms[-1] < 1e-12


def test_contraction_factors_below_one_and_decreasing_in_lambda(tanh_problem):
    _, z = boundary_z(tanh_problem, 11, range(4))
    _, rep = picard_boundary(tanh_problem, z, tol=1e-12, keep_deltas=True)
    diag = contraction_diagnostics(rep, tanh_problem)
    assert diag.below_one and diag.decreasing
    assert all(f < 1.0 for f in diag.factors)
    assert diag.exponent < 0


def test_iteration_count_grows_with_the_lipschitz_constant(tanh_problem):
    _, z = boundary_z(tanh_problem, 3, range(2))
    its = []
    for L in (0.1, 1.0, 5.0):
        _, rep = picard_boundary(with_g(tanh_problem, nonlinearity("scaled_tanh", L)), z, tol=1e-10)
        its.append(rep.iterates)
    assert its[0] < its[1] <= its[2]


def test_convergence_failure_reports_history(tanh_problem):
    _, z = boundary_z(tanh_problem, 3, [0])
    with pytest.raises(ConvergenceError) as exc:
        picard_boundary(tanh_problem, z[0], max_iter=2)
    assert len(exc.value.history) == 2
    with pytest.raises(ConfigurationError):
        picard_boundary(tanh_problem, z[0], tol=0.0)


def test_weighted_norm_discounts_late_times(tanh_problem):
    g = tanh_problem.grid
    w = tanh_problem.domain.boundary_weights
    v = np.zeros((g.n_steps + 1, 2))
    v[-1] = 1.0
    assert weighted_norm(v, g, w, 100.0) < weighted_norm(v, g, w, 1.0)
    assert weighted_norm(v, g, w, 0.0) == pytest.approx(np.sqrt(2 * g.dt))


def test_seeds_and_replicas_are_deterministic(tanh_problem):
    u1, z1, _ = solve_replicas(tanh_problem, 42, range(3))
    u2, z2, _ = solve_replicas(tanh_problem, 42, range(3))
    np.testing.assert_array_equal(u1, u2)
    one, _, _ = solve_replicas(tanh_problem, 44, [0])
    np.testing.assert_allclose(u1[2], one[0], atol=1e-12)
    other, _, _ = solve_replicas(tanh_problem, 43, [0])
    assert not np.allclose(u1[0], other[0])


def test_boundary_field_rows(tanh_problem):
    u, _, _ = solve_replicas(tanh_problem, 42, range(2))
    f = boundary_field(tanh_problem, u, 42, (0, 1))
    rows = list(f.csv_rows(1))
    assert len(rows) == (tanh_problem.grid.n_steps + 1) * 2
    assert float(rows[-1][2]) == u[1, -1, 1]


# --------------------------------------------------------------------------
# interior and refinement
# --------------------------------------------------------------------------

def test_interior_solution_approaches_the_boundary_value():
    pts = (0.1, 0.03, 0.01, 0.003)
    p = make_problem(nonlinearity("constant", c=0.7), n_steps=40, interior=pts)
    _, z = sample_fields(p, 7, [0])
    u, _ = picard_boundary(p, z[0, :, :2])
    gaps = []
    for n, x in enumerate(pts):
        ux = interior_solution(p, u, z[0, :, 2 + n], np.array([x]))
        # deterministic part of u at time T against its boundary value
        gaps.append(abs((ux[-1] - z[0, -1, 2 + n]) - (u[-1, 0] - z[0, -1, 0])))
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 1e-2
    with pytest.raises(ConfigurationError):
        interior_solution(p, u, z[0, :, 2], np.array([0.0]))


def test_time_refinement_contracts_with_shared_noise():
    levels = (20, 40, 80, 160)
    fine = make_problem(n_steps=levels[-1])
    paths = sample_paths(fine.mesh, fine.grid, 0.75, 21, range(300))
    u_end, g_end = [], []
    for n in levels:
        p = make_problem(n_steps=n)
        inc = np.diff(paths[:, :, :: levels[-1] // n], axis=2)
        z = z_field(p.slab, p.alpha_mat, inc, range(2))
        u, _ = picard_boundary(p, z)
        u_end.append(u[:, -1, 0])
        g_end.append(u[:, -1, 0] - z[:, -1, 0])
    # root-mean-square change over paths shrinks with every halving of dt
    for vals in (u_end, g_end):
        d = [np.sqrt(np.mean((b - a) ** 2)) for a, b in zip(vals[:-1], vals[1:])]
        assert np.all(np.diff(d) < 0), d
