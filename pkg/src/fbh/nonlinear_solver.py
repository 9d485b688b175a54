"""Mild solution of the heat equation with nonlinear stochastic Robin boundary data.

On the boundary u solves the Volterra equation
    u(t, xi) = Z(t, xi) + int_0^t int_dD p_N(t-s, xi, y) g(u(s, y)) dsigma(y) ds,
discretized with slab-integrated kernel weights and g frozen at the left
end of each time cell:
    u[i] = Z[i] + sum_{k<i} W[i-k-1] g(u[k]).
Picard iterates are compared in the weighted norm
    ||v|| = (E sum_i dt exp(-lam t_i) sum_l w_l |v[i, l]|^p)^(1/p).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigurationError, ConvergenceError
from .fbm import replica_increments
from .heat_kernel.slabs import build_slab_table
from .stoch_conv import z_field

G_KINDS = ("zero", "constant", "linear", "tanh", "scaled_tanh")


def _tanh_derivative_polys(order):
    """Polynomials P_n with d^n/du^n tanh(u) = P_n(tanh(u))."""
    P = np.polynomial.Polynomial
    polys = [P([0.0, 1.0])]
    one_minus_sq = P([1.0, 0.0, -1.0])
    for _ in range(order):
        polys.append(polys[-1].deriv() * one_minus_sq)
    return polys


_TANH = _tanh_derivative_polys(4)


# sup over u of |d^n tanh(u)| for n = 1..4
_TANH_SUP = (1.0, 4.0 / (3.0 * np.sqrt(3.0)), 2.0, 4.085885502969656)


@dataclass(frozen=True)
class Nonlinearity:
    """g(u) with derivatives up to order 4.

    ``lipschitz`` is the (g1) constant: |g'| <= L and |g| <= L (1 + |u|).
    ``derivative_bound`` is the (g2) constant bounding |g^(n)|, n <= 4.
    The tanh family is g = amp * tanh(rate * u).
    """

    kind: str
    lipschitz: float
    c: float = 0.0
    amp: float = 0.0
    rate: float = 1.0
    smoothness: str = "G2"

    @property
    def derivative_bound(self):
        if self.kind in ("tanh", "scaled_tanh"):
            return max(self.amp * self.rate ** n * s for n, s in enumerate(_TANH_SUP, start=1))
        return self.lipschitz

    def derivative(self, u, n=0):
        u = np.asarray(u, dtype=float)
        if n > 4:
            raise CapabilityError("derivatives above order 4 are not provided")
        if self.kind == "zero":
            return np.zeros_like(u)
        if self.kind == "constant":
            return np.full_like(u, self.c) if n == 0 else np.zeros_like(u)
        if self.kind == "linear":
            if n == 0:
                return self.c * u
            return np.full_like(u, self.c) if n == 1 else np.zeros_like(u)
        return self.amp * self.rate ** n * _TANH[n](np.tanh(self.rate * u))

    def __call__(self, u):
        return self.derivative(u, 0)

    def check(self, lo=-50.0, hi=50.0, n=2001):
        """Sampled check of (g1) and, for G2, of the derivative bound up to order 4."""
        u = np.linspace(lo, hi, n)
        L = self.lipschitz * (1 + 1e-12) + 1e-15
        ok = np.all(np.abs(self.derivative(u, 1)) <= L)
        ok &= np.all(np.abs(self(u)) <= L * (1.0 + np.abs(u)))
        if self.smoothness == "G2":
            bound = self.derivative_bound * (1 + 1e-9) + 1e-15
            for k in range(1, 5):
                ok &= np.all(np.abs(self.derivative(u, k)) <= bound)
        return bool(ok)


def nonlinearity(kind="tanh", L=1.0, c=0.0):
    """Library of boundary nonlinearities.

    zero, constant (g = c), linear (g = c u), tanh (g = L tanh u) and
    scaled_tanh (g = L tanh(u / max(L, 1))).
    """
    if kind not in G_KINDS:
        raise ConfigurationError(f"g.kind must be one of {G_KINDS}")
    L = float(L)
    c = float(c)
    if kind == "zero":
        return Nonlinearity(kind, 0.0)
    if kind == "constant":
        return Nonlinearity(kind, abs(c), c)
    if kind == "linear":
        return Nonlinearity(kind, abs(c), c)
    if L < 0.0:
        raise ConfigurationError("g.L must be nonnegative")
    rate = 1.0 if kind == "tanh" else 1.0 / max(L, 1.0)
    return Nonlinearity(kind, L * rate, 0.0, L, rate)


@dataclass
class Problem:
    """Everything that fixes one discretized boundary problem."""

    domain: object
    grid: object
    mesh: object
    hurst: float
    alpha: object
    g: Nonlinearity
    slab: object
    alpha_mat: np.ndarray

    @property
    def n_boundary(self):
        return self.domain.n_nodes

    def interior_index(self, x):
        return self.slab.target_index(x)


def build_problem(domain, grid, mesh, hurst, alpha, g, interior_points=()):
    alpha.validate(mesh, domain, hurst)
    slab = build_slab_table(domain, grid, interior_points)
    return Problem(domain, grid, mesh, float(hurst), alpha, g, slab, alpha.matrix(mesh, domain))


@dataclass(frozen=True)
class BoundaryField:
    grid: object
    nodes: np.ndarray
    values: np.ndarray
    noise_seed: int
    replicas: tuple = (0,)

    def csv_rows(self, replica_pos=0):
        v = self.values if self.values.ndim == 2 else self.values[replica_pos]
        for i, t in enumerate(self.grid.nodes):
            for l in range(v.shape[1]):
                yield (repr(float(t)), l, repr(float(v[i, l])))


@dataclass
class PicardReport:
    iterates: int
    increment_norms: list
    lam: float
    p: float
    converged: bool
    deltas: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"iterates": self.iterates, "increment_norms": [float(v) for v in self.increment_norms],
                "lambda": self.lam, "p": self.p, "converged": self.converged}


def weighted_norm(v, grid, weights, lam, p=2.0):
    """(E sum_i dt e^{-lam t_i} sum_l w_l |v|^p)^(1/p) for v of shape (..., N+1, L)."""
    v = np.asarray(v, dtype=float)
    tw = grid.dt * np.exp(-lam * grid.nodes)
    s = np.einsum("...il,i,l->...", np.abs(v) ** p, tw, weights)
    return float(np.mean(s) ** (1.0 / p))


def volterra_operator(slab, targets=None):
    """Op[x, l, k, i] = W[i-k-1, x, l] for k < i, zero otherwise."""
    n = slab.grid.n_steps
    W = slab.weights if targets is None else slab.weights[:, list(targets), :]
    k = np.arange(n + 1)[:, None]
    i = np.arange(n + 1)[None, :]
    lag = i - k - 1
    valid = lag >= 0
    Wt = np.transpose(W, (1, 2, 0))  # (X, L, N)
    return np.where(valid[None, None], Wt[:, :, np.clip(lag, 0, n - 1)], 0.0)


def apply_volterra(op, vals):
    """sum_{k,l} op[x, l, k, i] vals[..., k, l] -> (..., N+1, X)."""
    return np.einsum("...kl,xlki->...ix", vals, op, optimize=True)


def boundary_z(problem, seed, replicas):
    """Increments and Z on the boundary; replica r uses master seed seed + r."""
    dB = replica_increments(problem.mesh, problem.grid, problem.hurst, seed, list(replicas))
    z = z_field(problem.slab, problem.alpha_mat, dB, range(problem.n_boundary))
    return dB, z


def picard_boundary(problem, z, tol=1e-10, max_iter=200, lam=None, p=2.0, keep_deltas=False):
    """Picard iteration from u_0 = Z; z has shape (N+1, L) or (R, N+1, L).

    Stops once the weighted norm of the increment is below ``tol`` and the
    largest increment is below ``tol`` relative to the solution size.
    """
    if tol <= 0.0:
        raise ConfigurationError("solver.tol must be positive")
    grid = problem.grid
    lam = 50.0 / grid.horizon if lam is None else float(lam)
    op = volterra_operator(problem.slab, range(problem.n_boundary))
    w = problem.domain.boundary_weights
    g = problem.g
    u = np.array(z, dtype=float)
    norms, deltas = [], []
    for it in range(1, max_iter + 1):
        new = z + apply_volterra(op, g(u))
        delta = new - u
        norms.append(weighted_norm(delta, grid, w, lam, p))
        if keep_deltas:
            deltas.append(delta)
        u = new
        # the weighted norm discounts late times by exp(-lam T); the sup guard keeps them honest
        if norms[-1] < tol and np.max(np.abs(delta)) < tol * (1.0 + np.max(np.abs(u))):
            return u, PicardReport(it, norms, lam, p, True, deltas)
    raise ConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} iterations",
                           history=norms)


def march_boundary(problem, z):
    """Direct time-marching solution of the discrete equation (oracle for Picard)."""
    W = problem.slab.boundary
    g = problem.g
    u = np.array(z, dtype=float)
    n = problem.grid.n_steps
    for i in range(1, n + 1):
        gu = g(u[..., :i, :])[..., ::-1, :]  # cell k = i-1-m pairs with slab m
        u[..., i, :] = z[..., i, :] + np.einsum("mxl,...ml->...x", W[:i], gu)
    return u


def boundary_field(problem, u, seed, replicas=(0,)):
    return BoundaryField(problem.grid, problem.domain.boundary_nodes, u, int(seed), tuple(replicas))


def interior_solution(problem, u, z_interior, x):
    """u(t_i, x) for all grid times given the boundary solution and Z at x."""
    if problem.domain.on_boundary(np.atleast_1d(x)):
        raise ConfigurationError("x lies on the boundary; use the boundary field")
    j = problem.interior_index(x)
    op = volterra_operator(problem.slab, [j])
    return z_interior + apply_volterra(op, problem.g(u))[..., 0]


def fixed_point_residual(problem, u, z, lam=None, p=2.0):
    grid = problem.grid
    lam = 50.0 / grid.horizon if lam is None else lam
    op = volterra_operator(problem.slab, range(problem.n_boundary))
    r = z + apply_volterra(op, problem.g(u)) - u
    return weighted_norm(r, grid, problem.domain.boundary_weights, lam, p)


@dataclass
class DiagnosticTable:
    lambdas: list
    factors: list
    exponent: float
    decreasing: bool
    below_one: bool
    per_iterate: list

    def to_json(self):
        return {"lambdas": self.lambdas, "factors": self.factors, "exponent": self.exponent,
                "decreasing": self.decreasing, "below_one": self.below_one,
                "per_iterate": self.per_iterate}


def contraction_diagnostics(report, problem, p=2.0, mu=0.75, lambda_grid=(1.0, 10.0, 100.0)):
    """Contraction factors of the stored Picard increments, re-weighted at each lambda.

    The factor at lambda is the largest ratio ||d_{n+1}|| / ||d_n|| over n >= 1 (from the
    second increment on) whose denominator is not already at round-off level.
    """
    if len(report.deltas) < 3:
        raise ConfigurationError("contraction diagnostics need at least 3 stored increments")
    if not 0.5 < mu < 1.0:
        raise ConfigurationError("mu must lie in (1/2, 1)")
    grid, w = problem.grid, problem.domain.boundary_weights
    factors, per = [], []
    for lam in lambda_grid:
        n = [weighted_norm(d, grid, w, lam, p) for d in report.deltas]
        floor = 1e-13 * max(n)
        ratios = [n[k + 1] / n[k] for k in range(1, len(n) - 1) if n[k] > floor]
        per.append(ratios)
        factors.append(max(ratios) if ratios else 0.0)
    f = np.array(factors)
    pos = f > 0
    exponent = float(np.polyfit(np.log(np.array(lambda_grid)[pos]), np.log(f[pos]), 1)[0]) \
        if pos.sum() >= 2 else 0.0
    decreasing = bool(np.all(np.diff(f) <= 1e-12))
    return DiagnosticTable(list(map(float, lambda_grid)), f.tolist(), exponent, decreasing,
                           bool(f[-1] < 1.0), per)


def sample_fields(problem, seed, replicas):
    """Increments (R, J, N) and Z at every tabulated target (R, N+1, X).

    Replica r is the path of master seed ``seed + r``.
    """
    dB = replica_increments(problem.mesh, problem.grid, problem.hurst, seed, list(replicas))
    return dB, z_field(problem.slab, problem.alpha_mat, dB)


def solve_replicas(problem, seed, replicas, tol=1e-10, max_iter=200, lam=None, p=2.0):
    """Boundary solution for a block of replicas: (u (R, N+1, L), z (R, N+1, X), report)."""
    _, z = sample_fields(problem, seed, replicas)
    u, report = picard_boundary(problem, z[..., : problem.n_boundary], tol, max_iter, lam, p)
    return u, z, report
