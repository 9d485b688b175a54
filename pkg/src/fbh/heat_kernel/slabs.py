"""Kernel integrated over boundary cells and time slabs.

The Volterra solver and the stochastic convolution both need
W[m-1, i, l] = int_{(m-1) dt}^{m dt} int_{cell l} p_N(tau, target_i, y) dsigma(y) dtau.
On the interval the cells are the two endpoints and the slab integrals are
exact eigen-sums. On the square the kernel factorizes into an along-edge
factor (integrated over the cell in closed form) and a normal factor; short
lags use the one-reflection image formula, longer lags the eigen-sum, and
the lag integral is done by Gauss-Legendre (with tau = dt v^2 on the first
slab to absorb the tau^(-1/2) behaviour).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

from ..domain import INTERVAL
from ..errors import ConfigurationError
from ..fbm import _gauss
from .eigen import interval_modes, modes_needed
from .spectral import (SWITCH, interval_images, interval_kernel, interval_time_integral,
                       robin_kernel_1d)


def _half_line_mass(beta, tau, u):
    """I(u) = int_0^inf exp(-beta w) Gamma(tau, u + w) dw."""
    return 0.5 * erfcx((u + beta * tau) / np.sqrt(2.0 * tau)) * np.exp(-(u ** 2) / (2.0 * tau))


def _int_reflected(beta, tau, u1, u2):
    """int_{u1}^{u2} [Gamma(tau, u) - 2 beta I(u)] du, using dI/du = beta I - Gamma."""
    s = np.sqrt(tau)
    g = ndtr(u2 / s) - ndtr(u1 / s)
    i2 = _half_line_mass(beta, tau, u2)
    i1 = _half_line_mass(beta, tau, u1)
    return g - 2.0 * (i2 - i1 + g)


def _along_images(beta, tau, x, a, b):
    """int_a^b of the short-lag interval kernel G1(tau, x, y) dy."""
    s = np.sqrt(tau)
    direct = ndtr((x - a) / s) - ndtr((x - b) / s)
    left = _int_reflected(beta, tau, x + a, x + b)
    right = _int_reflected(beta, tau, 2.0 - x - b, 2.0 - x - a)
    return direct + left + right


def _along_spectral(modes, n, tau, x, a, b):
    lam = modes.eigenvalues[:n]
    dphi = modes.antiderivative(b)[:n] - modes.antiderivative(a)[:n]
    return np.sum((np.exp(-lam * tau) * dphi)[:, None] * modes(x)[:n], axis=0)


def _cell_geometry(domain):
    """Per boundary cell: along axis, normal axis, normal coordinate, [lo, hi] along."""
    out = []
    for edge, a, b in domain.cells:
        if edge == 0:
            out.append((0, 1, 0.0, a, b))
        elif edge == 1:
            out.append((1, 0, 1.0, a, b))
        elif edge == 2:
            out.append((0, 1, 1.0, 1.0 - b, 1.0 - a))
        else:
            out.append((1, 0, 0.0, 1.0 - b, 1.0 - a))
    return out


def cell_kernel(domain, tau, targets):
    """int over each boundary cell of p_N(tau, x, y) dsigma(y): shape (n_tau, n_targets, L)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau <= 0.0):
        raise ConfigurationError("lags must be positive")
    pts = np.asarray(targets, dtype=float).reshape(len(targets), -1)
    beta = domain.beta
    if domain.kind == INTERVAL:
        y = domain.boundary_nodes[:, 0]
        return robin_kernel_1d(beta, tau[:, None, None], pts[None, :, 0:1], y[None, None, :])
    geo = _cell_geometry(domain)
    n = modes_needed(SWITCH, 1e-14)
    modes = interval_modes(beta, n)
    out = np.empty((len(tau), len(pts), len(geo)))
    for q, tq in enumerate(tau):
        for l, (ax, nx, yn, lo, hi) in enumerate(geo):
            xa, xn = pts[:, ax], pts[:, nx]
            if tq < SWITCH:
                along = _along_images(beta, tq, xa, lo, hi)
                normal = interval_images(beta, tq, xn, yn)
            else:
                along = _along_spectral(modes, n, tq, xa, lo, hi)
                normal = interval_kernel(beta, tq, xn, yn, modes, 1e-14)
            out[q, :, l] = along * normal
    return out


@dataclass(frozen=True)
class SlabTable:
    """Slab-and-cell integrated kernel for a time grid.

    Targets are the boundary nodes (first ``n_boundary`` rows) followed by
    any interior points. ``weights[m - 1]`` holds the integrals over lag slab m.
    """

    domain: object
    grid: object
    targets: np.ndarray
    n_boundary: int
    weights: np.ndarray

    @property
    def boundary(self):
        return self.weights[:, : self.n_boundary, :]

    def target_index(self, x, tol=1e-12):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = np.linalg.norm(self.targets - x[None, :], axis=1)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise ConfigurationError(f"point {x.tolist()} is not a tabulated target")
        return i

    def averages(self, i):
        """Slab averages (N, L) of the cell kernel at target i."""
        return self.weights[:, i, :] / self.grid.dt


def build_slab_table(domain, grid, interior_points=(), n_first=24, n_other=12):
    pts = np.asarray(interior_points, dtype=float).reshape(-1, domain.dim)
    for p in pts:
        if not domain.is_interior(p):
            raise ConfigurationError(f"interior point {p.tolist()} is not inside the domain")
    targets = np.vstack([domain.boundary_nodes, pts]) if len(pts) else domain.boundary_nodes.copy()
    dt = grid.dt
    n_steps = grid.n_steps
    if domain.kind == INTERVAL:
        y = domain.boundary_nodes[:, 0]
        x = targets[:, 0]
        w = np.empty((n_steps, len(targets), 2))
        for m in range(1, n_steps + 1):
            w[m - 1] = interval_time_integral(domain.beta, (m - 1) * dt, m * dt,
                                              x[:, None], y[None, :])
        return SlabTable(domain, grid, targets, domain.n_nodes, w)

    v, wv = _gauss(n_first)
    v = 0.5 * (v + 1.0)
    wv = 0.5 * wv
    first_tau = dt * v ** 2
    first_w = 2.0 * dt * v * wv
    u, wu = _gauss(n_other)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu * dt
    taus = [first_tau] + [(m - 1 + u) * dt for m in range(2, n_steps + 1)]
    tau_all = np.concatenate(taus)
    vals = cell_kernel(domain, tau_all, targets)
    w = np.empty((n_steps, len(targets), domain.n_nodes))
    w[0] = np.tensordot(first_w, vals[:n_first], axes=(0, 0))
    for m in range(2, n_steps + 1):
        s = n_first + (m - 2) * n_other
        w[m - 1] = np.tensordot(wu, vals[s:s + n_other], axes=(0, 0))
    return SlabTable(domain, grid, targets, domain.n_nodes, w)
