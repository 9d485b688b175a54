import numpy as np
import pytest

from fbh.domain import build_domain, s_mesh, time_grid
from fbh.nonlinear_solver import build_problem, nonlinearity
from fbh.stoch_conv import alpha_coefficient

# filled by test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE = {}


def make_problem(g=None, n_steps=40, hurst=0.75, beta=1.0, s_cells=2, horizon=0.5,
                 alpha="sine", interior=(0.5,), kind="interval", resolution=2):
    domain = build_domain(kind, beta, resolution)
    grid = time_grid(horizon, n_steps)
    mesh = s_mesh(s_cells)
    g = nonlinearity("tanh", 1.0) if g is None else g
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in interior]
    return build_problem(domain, grid, mesh, hurst, alpha_coefficient(alpha), g, pts)


@pytest.fixture(scope="session")
def tanh_problem():
    return make_problem()


@pytest.fixture(scope="session")
def linear_problem():
    return make_problem(nonlinearity("zero"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
