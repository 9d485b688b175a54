"""Fractional Brownian noise on [0, T] x S.

Covariance, the Volterra kernel K_H and its adjoint K*, exact Cholesky
sampling with per-(replica, cell) random substreams, and the inner product of
the reproducing kernel Hilbert space H (time-correlated, white over S).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .domain import SMesh, TimeGrid
from .errors import ConfigurationError, NumericalError

H_MAX_CONST = 0.995


def check_hurst(h, strict=False):
    """Validate a Hurst index; ``strict`` excludes the Brownian case h = 1/2."""
    h = float(h)
    if not (0.5 <= h < 1.0):
        raise ConfigurationError(f"noise.hurst out of range: {h} not in [1/2, 1)")
    if strict and h == 0.5:
        raise ConfigurationError("this operation requires hurst > 1/2")
    return h


def alpha_h(h):
    """Normalisation H(2H-1) of the |s-r|^{2H-2} kernel."""
    return h * (2.0 * h - 1.0)


def cov_rh(h, t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tw = 2.0 * h
    return 0.5 * (np.abs(s) ** tw + np.abs(t) ** tw - np.abs(t - s) ** tw)


def c_h_const(h):
    h = check_hurst(h)
    if h >= H_MAX_CONST:
        raise ConfigurationError(f"C_H diverges as H -> 1; refusing hurst={h}")
    lg = np.log(2.0 * h) + gammaln(1.5 - h) - gammaln(h + 0.5) - gammaln(2.0 - 2.0 * h)
    return float(np.exp(0.5 * lg))


def increment_cov(h, a, b, c, d):
    """Cov(B(b)-B(a), B(d)-B(c)) for a unit-measure fBm, broadcast over arrays.

    For h > 1/2 this equals H(2H-1) times the integral of |s-r|^{2H-2} over
    [a,b] x [c,d]; for h = 1/2 it is the overlap length.
    """
    tw = 2.0 * h
    return 0.5 * (np.abs(b - c) ** tw + np.abs(a - d) ** tw
                  - np.abs(a - c) ** tw - np.abs(b - d) ** tw)


def cell_cov_matrix(h, edges, window=None):
    """Increment covariance between grid cells, optionally clipped to a window.

    ``edges`` are the N+1 cell boundaries; ``window`` = (lo, hi) restricts every
    cell to its intersection with (lo, hi). Empty intersections give zero rows.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1].copy(), edges[1:].copy()
    if window is not None:
        lo, hi = window
        if not hi > lo:
            raise ConfigurationError(f"empty window {window}")
        a = np.clip(a, lo, hi)
        b = np.clip(b, lo, hi)
    C = increment_cov(h, a[:, None], b[:, None], a[None, :], b[None, :])
    empty = b <= a
    C[empty, :] = 0.0
    C[:, empty] = 0.0
    return 0.5 * (C + C.T)


# --------------------------------------------------------------------------
# graded quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


def graded_rule(a, b, n, grading=1.0):
    """Gauss-Legendre rule on [a, b] graded towards ``a``.

    Nodes are x = a + (b - a) v^q with v Gauss-Legendre on (0, 1); an endpoint
    factor (x - a)^e is absorbed exactly when q = 1 / (1 + e).
    """
    v, w = _gauss(n)
    v = 0.5 * (v + 1.0)
    w = 0.5 * w
    q = float(grading)
    x = a + (b - a) * v ** q
    wx = (b - a) * q * v ** (q - 1.0) * w
    return x, wx


def graded_rule_two_sided(a, b, n, q_left=1.0, q_right=1.0):
    """Split [a, b] at the midpoint and grade each half towards its end."""
    m = 0.5 * (a + b)
    x1, w1 = graded_rule(a, m, n, q_left)
    x2, w2 = graded_rule(b, m, n, q_right)
    return np.concatenate([x1, x2[::-1]]), np.concatenate([w1, -w2[::-1]])


# --------------------------------------------------------------------------
# K_H and K*
# --------------------------------------------------------------------------

def k_h_kernel(h, t, s, n_nodes=40):
    """Volterra kernel K_H(t, s) of the Molchan-Golosov representation.

    The integral term is evaluated on a mesh graded towards u = s with
    exponent 1/(H - 1/2), where the integrand has its (u - s)^{H-3/2} factor.
    """
    h = check_hurst(h)
    t, s = float(t), float(s)
    if not (0.0 < s < t):
        raise ConfigurationError(f"K_H(t, s) needs 0 < s < t, got t={t}, s={s}")
    ch = c_h_const(h)
    if h == 0.5:
        return 1.0
    e = h - 0.5
    q = 1.0 / e
    # u = s + (t-s) v^q: (u-s)^{H-3/2} du = (t-s)^{H-1/2} q dv
    v, w = _gauss(n_nodes)
    v = 0.5 * (v + 1.0)
    w = 0.5 * w
    u = s + (t - s) * v ** q
    integrand = 1.0 - (s / u) ** (0.5 - h)
    integral = (t - s) ** e * q * np.sum(w * integrand)
    return ch * (t - s) ** e + ch * (0.5 - h) * integral


def kstar_constant(h):
    """Prefactor (H - 1/2) C_H of K*, i.e. d/dt K_H(t,s) = c (t/s)^{H-1/2} (t-s)^{H-3/2}."""
    return (h - 0.5) * c_h_const(h)


def kstar_transform(phi, t, h, n_nodes=48, end_exponent=0.0):
    """Return s -> (K* phi)(s) on (0, t).

    ``phi`` is a vectorised callable of r. The (r - s)^{H-3/2} singularity is
    absorbed by a graded rule at r = s; ``end_exponent`` (e.g. -0.5) declares an
    integrable blow-up of ``phi`` at r = t, absorbed by grading the second half.
    """
    h = check_hurst(h)
    if h == 0.5:
        raise ConfigurationError("K* degenerates to the identity at hurst = 1/2")
    t = float(t)
    e = h - 0.5
    ck = kstar_constant(h)
    q_left = 1.0 / e
    q_right = 1.0 / (1.0 + end_exponent)

    def transform(s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros_like(s_arr)
        for i, si in enumerate(s_arr):
            if not (0.0 < si < t):
                continue
            m = 0.5 * (si + t)
            # left half: graded at r = s, weight (r-s)^{H-3/2} absorbed exactly
            v, w = _gauss(n_nodes)
            v = 0.5 * (v + 1.0)
            w = 0.5 * w
            r1 = si + (m - si) * v ** q_left
            left = (m - si) ** e * q_left * np.sum(w * (si / r1) ** (0.5 - h) * phi(r1))
            r2, w2 = graded_rule(t, m, n_nodes, q_right)
            right = -np.sum(w2 * (si / r2) ** (0.5 - h) * (r2 - si) ** (h - 1.5) * phi(r2))
            out[i] = ck * (left + right)
        return out if np.ndim(s) else float(out[0])

    return transform


def kstar_isometry(phi, t, h, n_outer=48, n_inner=48, end_exponent=0.0):
    """Integral over (0, t) of |K* phi|^2, graded at both ends of the outer variable."""
    h = check_hurst(h, strict=True)
    ks = kstar_transform(phi, t, h, n_nodes=n_inner, end_exponent=end_exponent)
    # |K*phi(s)|^2 ~ s^{1-2H} near 0 and ~ (t-s)^{2H-1+2e} near t
    q_left = 1.0 / (2.0 - 2.0 * h)
    s, w = graded_rule_two_sided(0.0, t, n_outer, q_left, 3.0)
    return float(np.sum(w * ks(s) ** 2))


# --------------------------------------------------------------------------
# RKHS inner product
# --------------------------------------------------------------------------

def cell_averages(phi, grid, sigmas, n_gauss=6):
    """Cell averages of phi(s, sigma) over each grid cell, shape (J, N)."""
    v, w = _gauss(n_gauss)
    a, b = grid.nodes[:-1], grid.nodes[1:]
    s = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * v[None, :]
    out = np.empty((len(sigmas), grid.n_steps))
    for j, sig in enumerate(sigmas):
        vals = np.asarray(phi(s, sig), dtype=float) * np.ones_like(s)
        out[j] = 0.5 * np.sum(vals * w[None, :], axis=1)
    return out


def h_inner_cells(phi_bar, psi_bar, weights, C):
    """Inner product of piecewise-constant integrands with cell covariance ``C``."""
    phi_bar = np.asarray(phi_bar, dtype=float)
    psi_bar = np.asarray(psi_bar, dtype=float)
    total = 0.0
    for j, mu in enumerate(weights):
        total += mu * phi_bar[j] @ C @ psi_bar[j]
    return float(total)


def h_inner(phi, psi, mesh, grid, h, window=None, n_gauss=6):
    """<phi, psi>_H on the grid.

    Integrands are replaced by their cell averages (callables are averaged with
    Gauss-Legendre; arrays of shape (J, N) are taken as averages already) and
    the |s-r|^{2H-2} kernel is integrated exactly over every pair of cells.
    """
    h = check_hurst(h)
    if callable(phi):
        phi = cell_averages(phi, grid, mesh.points, n_gauss)
    if callable(psi):
        psi = cell_averages(psi, grid, mesh.points, n_gauss)
    C = cell_cov_matrix(h, grid.nodes, window)
    return h_inner_cells(phi, psi, mesh.weights, C)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def substream(seed, replica, cell):
    """Generator for one (replica, cell) pair, derived from the master seed."""
    ss = np.random.SeedSequence(int(seed) % 2 ** 64, spawn_key=(int(replica), int(cell)))
    return np.random.Generator(np.random.PCG64(ss))


@lru_cache(maxsize=32)
def _cholesky(h, horizon, n_steps):
    t = horizon * np.arange(1, n_steps + 1) / n_steps
    R = cov_rh(h, t[:, None], t[None, :])
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-13 * float(np.max(np.diag(R)))
    try:
        return np.linalg.cholesky(R + jitter * np.eye(n_steps))
    except np.linalg.LinAlgError:
        raise NumericalError(
            f"fBm covariance not positive definite on a grid of {n_steps} steps (hurst={h})")


def cholesky_factor(h, grid):
    """Lower Cholesky factor of [R_H(t_i, t_k)], i, k = 1..N (read-only)."""
    L = _cholesky(float(h), float(grid.horizon), int(grid.n_steps))
    L.setflags(write=False)
    return L


@dataclass(frozen=True)
class NoisePath:
    """One sampled field B(sigma_j, t_i); ``values`` has shape (J, N+1)."""

    s_mesh: SMesh
    grid: TimeGrid
    values: np.ndarray
    seed: int
    hurst: float
    replica: int = 0

    @property
    def increments(self):
        return np.diff(self.values, axis=1)

    def restrict(self, factor):
        """The same path seen on a grid ``factor`` times coarser."""
        factor = int(factor)
        if self.grid.n_steps % factor:
            raise ConfigurationError("coarsening factor must divide the step count")
        from .domain import time_grid
        g = time_grid(self.grid.horizon, self.grid.n_steps // factor)
        return NoisePath(self.s_mesh, g, self.values[:, ::factor].copy(), self.seed,
                         self.hurst, self.replica)

    def csv_rows(self):
        for j in range(self.values.shape[0]):
            for i, t in enumerate(self.grid.nodes):
                yield (j, repr(float(t)), repr(float(self.values[j, i])))


def sample_paths(mesh, grid, h, seed, replicas):
    """Exact joint samples for the listed replica indices, shape (R, J, N+1)."""
    h = check_hurst(h)
    L = cholesky_factor(h, grid)
    replicas = list(replicas)
    J, N = mesh.n_cells, grid.n_steps
    z = np.empty((len(replicas), J, N))
    for a, r in enumerate(replicas):
        for j in range(J):
            z[a, j] = substream(seed, r, j).standard_normal(N)
    out = np.zeros((len(replicas), J, N + 1))
    out[:, :, 1:] = np.sqrt(mesh.weights)[None, :, None] * (z @ L.T)
    return out


def sample_increments(mesh, grid, h, seed, replicas):
    return np.diff(sample_paths(mesh, grid, h, seed, replicas), axis=2)


def replica_increments(mesh, grid, h, base_seed, replicas):
    """Increments (R, J, N) where replica r is the single path of master seed base_seed + r."""
    L = cholesky_factor(check_hurst(h), grid)
    J, N = mesh.n_cells, grid.n_steps
    out = np.empty((len(replicas), J, N))
    scale = np.sqrt(mesh.weights)[:, None]
    for a, r in enumerate(replicas):
        seed = int(base_seed) + int(r)
        z = np.stack([substream(seed, 0, j).standard_normal(N) for j in range(J)])
        out[a] = np.diff(scale * (z @ L.T), axis=1, prepend=0.0)
    return out


def sample_noise(mesh, grid, h, seed, replica=0):
    vals = sample_paths(mesh, grid, h, seed, [replica])[0]
    vals.setflags(write=False)
    return NoisePath(mesh, grid, vals, int(seed), float(h), int(replica))
