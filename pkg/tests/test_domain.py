import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbh.domain import boundary_quadrature, build_domain, edge_point, s_mesh, time_grid
from fbh.errors import ConfigurationError


def test_interval_boundary_is_two_points_with_counting_measure():
    d = build_domain("interval", 1.0)
    assert d.dim == 1
    np.testing.assert_array_equal(d.boundary_nodes[:, 0], [0.0, 1.0])
    np.testing.assert_array_equal(d.boundary_weights, [1.0, 1.0])
    assert boundary_quadrature(d, lambda p: p[:, 0] + 2.0) == 5.0


def test_rectangle_nodes_are_edge_midpoints():
    d = build_domain("rectangle", 1.0, 4)
    assert d.n_nodes == 16
    assert d.boundary_weights.sum() == pytest.approx(4.0)
    assert all(d.on_boundary(p) for p in d.boundary_nodes)
    # two corner-adjacent cells per edge at resolution 4
    assert d.corner_adjacent.sum() == 8


def test_rectangle_quadrature_is_second_order():
    def f(p):
        return np.exp(p[:, 0]) * np.cos(p[:, 1])

    e, s1, c1 = np.e, np.sin(1.0), np.cos(1.0)
    exact = (e - 1.0) + e * s1 + (e - 1.0) * c1 + s1
    res = np.array([4, 8, 16, 32])
    err = [abs(boundary_quadrature(build_domain("rectangle", 1.0, r), f) - exact) for r in res]
    order = -np.polyfit(np.log(res), np.log(err), 1)[0]
    assert order >= 1.9


def test_edge_point_walks_the_perimeter_counter_clockwise():
    np.testing.assert_allclose(edge_point(0, 0.25), [0.25, 0.0])
    np.testing.assert_allclose(edge_point(1, 0.25), [1.0, 0.25])
    np.testing.assert_allclose(edge_point(2, 0.25), [0.75, 1.0])
    np.testing.assert_allclose(edge_point(3, 0.25), [0.0, 0.75])


@pytest.mark.parametrize("kind,beta,res", [("disk", 1.0, 1), ("interval", 0.0, 1),
                                           ("interval", -1.0, 1), ("rectangle", 1.0, 0),
                                           ("interval", float("nan"), 1)])
def test_invalid_domains_are_rejected(kind, beta, res):
    with pytest.raises(ConfigurationError):
        build_domain(kind, beta, res)


def test_point_classification():
    d = build_domain("rectangle", 1.0, 2)
    assert d.is_interior([0.5, 0.5])
    assert not d.is_interior([0.0, 0.5])
    assert d.on_boundary([1.0, 0.3])
    assert not d.contains([1.2, 0.5])
    assert d.node_index([0.25, 0.0]) == 0
    assert d.node_index([0.3, 0.0]) is None


def test_time_grid_index_and_errors():
    g = time_grid(0.5, 50)
    assert g.dt == pytest.approx(0.01)
    assert g.nodes[-1] == 0.5
    assert g.index(0.25) == 25
    with pytest.raises(ConfigurationError):
        g.index(0.255)
    for bad in ((0.0, 10), (1.0, 0), (1.0, 2.5)):
        with pytest.raises(ConfigurationError):
            time_grid(*bad)
    assert g.refine(2).n_steps == 100


@given(st.floats(1e-3, 1e3), st.integers(1, 500))
@settings(max_examples=50, deadline=None)
def test_time_grid_invariants(horizon, n):
    g = time_grid(horizon, n)
    assert len(g.nodes) == n + 1
    assert g.nodes[0] == 0.0 and g.nodes[-1] == horizon
    assert np.all(np.diff(g.nodes) > 0)
    for i in (0, n // 2, n):
        assert g.index(g.nodes[i]) == i


@given(st.integers(1, 64), st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_s_mesh_partitions_the_measure(n, total):
    m = s_mesh(n, total)
    assert m.total_measure == pytest.approx(total)
    assert np.all(np.diff(m.points) > 0)
    assert 0.0 < m.points[0] and m.points[-1] < total
