"""Geometry, time grids and boundary quadrature.

Two domains are supported: the unit interval (boundary = {0, 1} with counting
measure) and the unit square (boundary = perimeter, midpoint rule per edge).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

INTERVAL = "interval"
RECTANGLE = "rectangle"
KINDS = (INTERVAL, RECTANGLE)

# edges of the unit square, traversed counter-clockwise: (origin, direction)
_EDGES = (
    (np.array([0.0, 0.0]), np.array([1.0, 0.0])),  # bottom
    (np.array([1.0, 0.0]), np.array([0.0, 1.0])),  # right
    (np.array([1.0, 1.0]), np.array([-1.0, 0.0])),  # top
    (np.array([0.0, 1.0]), np.array([0.0, -1.0])),  # left
)


@dataclass(frozen=True)
class DomainSpec:
    """Immutable description of the spatial domain and its boundary mesh.

    ``boundary_nodes`` has shape (L, d). For the rectangle every node is the
    midpoint of an edge segment; ``cells`` records (edge, a, b) with a, b the
    arclength parameters of the segment on that edge.
    """

    kind: str
    beta: float
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    boundary_resolution: int = 1
    cells: tuple = ()
    corner_adjacent: np.ndarray = field(default=None)

    @property
    def dim(self):
        return 1 if self.kind == INTERVAL else 2

    @property
    def n_nodes(self):
        return len(self.boundary_weights)

    @property
    def perimeter(self):
        return 2.0 if self.kind == INTERVAL else 4.0

    def distance_to_boundary(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(np.min(np.concatenate([x, 1.0 - x])))

    def contains(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return x.shape == (self.dim,) and bool(np.all((x >= 0.0) & (x <= 1.0)))

    def on_boundary(self, x, tol=1e-12):
        return self.contains(x) and self.distance_to_boundary(x) <= tol

    def is_interior(self, x):
        return self.contains(x) and self.distance_to_boundary(x) > 0.0

    def node_index(self, x, tol=1e-12):
        """Index of the boundary node at ``x`` or None."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = np.linalg.norm(self.boundary_nodes - x[None, :], axis=1)
        i = int(np.argmin(d))
        return i if d[i] <= tol else None


def build_domain(kind, beta, boundary_resolution=1):
    """Build a :class:`DomainSpec`.

    ``boundary_resolution`` is the number of midpoint cells per edge of the
    square and is ignored for the interval.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"domain.kind must be one of {KINDS}, got {kind!r}")
    beta = float(beta)
    if not np.isfinite(beta) or beta <= 0.0:
        raise ConfigurationError(f"domain.beta must be positive, got {beta}")
    if kind == INTERVAL:
        nodes = np.array([[0.0], [1.0]])
        weights = np.array([1.0, 1.0])
        return DomainSpec(INTERVAL, beta, nodes, weights, 1, ((0, 0.0, 0.0), (1, 0.0, 0.0)),
                          np.zeros(2, dtype=bool))

    res = int(boundary_resolution)
    if res < 1:
        raise ConfigurationError("domain.boundary_resolution must be >= 1")
    h = 1.0 / res
    nodes, weights, cells, corner = [], [], [], []
    for e, (origin, direction) in enumerate(_EDGES):
        for c in range(res):
            a, b = c * h, (c + 1) * h
            nodes.append(origin + 0.5 * (a + b) * direction)
            weights.append(h)
            cells.append((e, a, b))
            corner.append(c == 0 or c == res - 1)
    return DomainSpec(RECTANGLE, beta, np.array(nodes), np.array(weights), res,
                      tuple(cells), np.array(corner, dtype=bool))


def edge_point(edge, s):
    """Point of the unit-square boundary at arclength ``s`` along ``edge``."""
    origin, direction = _EDGES[edge]
    s = np.asarray(s, dtype=float)
    return origin[None, :] + s[..., None] * direction[None, :] if s.ndim else origin + s * direction


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int
    nodes: np.ndarray

    @property
    def dt(self):
        return self.horizon / self.n_steps

    def index(self, t, tol=1e-9):
        """Grid index of time ``t``; raises if ``t`` is off-grid."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.n_steps or abs(i * self.dt - t) > tol * max(1.0, self.horizon):
            raise ConfigurationError(f"time {t} is not on the grid (dt={self.dt})")
        return i

    def refine(self, factor):
        return time_grid(self.horizon, self.n_steps * int(factor))


def time_grid(horizon, n_steps):
    horizon = float(horizon)
    if not np.isfinite(horizon) or horizon <= 0.0:
        raise ConfigurationError(f"time.horizon must be positive, got {horizon}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ConfigurationError(f"time.steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    nodes = horizon * np.arange(n_steps + 1) / n_steps
    nodes[-1] = horizon
    return TimeGrid(horizon, n_steps, nodes)


@dataclass(frozen=True)
class SMesh:
    """Finite measure space S = [0, total_measure] split into equal cells.

    ``points`` are the cell midpoints, used as the representative sigma.
    """

    weights: np.ndarray
    points: np.ndarray

    @property
    def total_measure(self):
        return float(np.sum(self.weights))

    @property
    def n_cells(self):
        return len(self.weights)


def s_mesh(n_cells, total_measure=1.0):
    if int(n_cells) != n_cells or n_cells < 1:
        raise ConfigurationError(f"noise.s_cells must be a positive integer, got {n_cells}")
    if total_measure <= 0.0:
        raise ConfigurationError("S must carry a positive measure")
    n = int(n_cells)
    w = np.full(n, total_measure / n)
    pts = (np.arange(n) + 0.5) * (total_measure / n)
    return SMesh(w, pts)


def boundary_quadrature(domain, f):
    """Sum of ``weights * f(nodes)``; ``f`` may be a callable or node values."""
    vals = f(domain.boundary_nodes) if callable(f) else f
    vals = np.asarray(vals, dtype=float)
    if vals.shape[0] != domain.n_nodes:
        raise ConfigurationError("boundary values do not match the node count")
    return float(np.tensordot(domain.boundary_weights, vals, axes=(0, 0)))
