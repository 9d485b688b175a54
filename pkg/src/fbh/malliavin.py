"""Malliavin derivatives of Z and u, their RKHS norms and the density probes.

The noise enters the discrete problem only through the cell increments
dB[j, k] of the S-cell j over the time cell k, so for any functional F of the
noise D_{r, sigma} F is piecewise constant:
    D_{r, sigma} F = dF / d dB[j, k]   for r in time cell k, sigma in S-cell j.
Arrays of derivatives are indexed [k, j] (time cell, S-cell). With
C = cell increment covariance,
    ||D F||_H^2 = sum_j mu_j sum_{k, k'} D[k, j] C[k, k'] D[k', j],
and the window (t - delta, t) replaces C by its clipped version.

Z is linear, so DZ is the deterministic cell-averaged integrand. Du solves
the linearized Volterra equation (forward, one solve per direction, or
backward, one adjoint solve per target); D^2 u solves the same equation with
the forcing sum W g''(u) Du Du.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigurationError
from .fbm import cell_cov_matrix, check_hurst
from .nonlinear_solver import (apply_volterra, march_boundary, picard_boundary, sample_fields,
                               volterra_operator)
from .parallel import concat, map_blocks
from .stoch_conv import ProbeReport, convolution_operator, z_field

SlopeReport = ProbeReport
Z_TARGET = "Z"
U_TARGET = "U"
U_INTERIOR = "U_interior"


@dataclass
class MalliavinField:
    """values[k, j, i, x] = D_{r, sigma} F(t_i, x) for r in time cell k, sigma in S-cell j.

    For order 2 the first argument is fixed at ``anchor`` = (k1, j1) and the
    array holds D^2_{(anchor), (r, sigma)} F(t_i, x).
    """

    values: np.ndarray
    target: str
    order: int
    grid: object
    mesh: object
    points: np.ndarray
    anchor: tuple = None

    def at(self, i, x=0):
        """(N, J) derivative of F(t_i, points[x])."""
        return self.values[:, :, i, x]

    def csv_rows(self):
        t = self.grid.nodes
        r = 0.5 * (t[:-1] + t[1:])
        n, J, nt, X = self.values.shape
        for k in range(n):
            for j in range(J):
                for i in range(nt):
                    for x in range(X):
                        xi = ";".join(repr(float(c)) for c in np.atleast_1d(self.points[x]))
                        yield (repr(float(r[k])), repr(float(self.mesh.points[j])), repr(float(t[i])),
                               xi, repr(float(self.values[k, j, i, x])), self.order)


@dataclass(frozen=True)
class HNormResult:
    value: object
    window: tuple
    quadrature_error_estimate: float

    def to_json(self):
        v = self.value
        v = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return {"value": v, "window": list(self.window),
                "quadrature_error_estimate": self.quadrature_error_estimate}


@dataclass
class DecayReport:
    probe: str
    params: dict
    epsilons: list
    probabilities: list
    monotone: bool
    zero_at_smallest: bool
    satisfied: bool
    flags: list = field(default_factory=list)

    def to_json(self):
        return {"probe": self.probe, "params": self.params, "epsilons": self.epsilons,
                "probabilities": self.probabilities, "monotone": self.monotone,
                "zero_at_smallest": self.zero_at_smallest, "satisfied": self.satisfied,
                "flags": self.flags}


# --------------------------------------------------------------------------
# RKHS norm
# --------------------------------------------------------------------------

def h_norm(D, mesh, grid, h, t=None, delta=None):
    """||D||_H^2 for D of shape (..., N, J) on the full range or the window (t - delta, t).

    The cell integrals of |s - r|^(2H-2) are exact, so the only error is
    floating point round-off, which is what the estimate reports.
    """
    h = check_hurst(h)
    D = np.asarray(D, dtype=float)
    if delta is None:
        window = (0.0, float(grid.horizon if t is None else t))
        C = cell_cov_matrix(h, grid.nodes, window)
    else:
        t = grid.horizon if t is None else t
        if not 0.0 < delta <= t:
            raise ConfigurationError(f"window length {delta} must lie in (0, t]")
        window = (float(t - delta), float(t))
        C = cell_cov_matrix(h, grid.nodes, window)
    mu = np.asarray(mesh.weights, dtype=float)
    value = np.einsum("...kj,kl,...lj,j->...", D, C, D, mu)
    err = 1e-15 * np.einsum("...kj,kl,...lj,j->...", np.abs(D), np.abs(C), np.abs(D), mu)
    value = np.maximum(value, 0.0)
    est = float(np.max(err)) if np.size(err) else 0.0
    return HNormResult(value if value.ndim else float(value), window, est)


# --------------------------------------------------------------------------
# first and second derivatives
# --------------------------------------------------------------------------

def _target_index(problem, x):
    if x is None:
        return None
    if np.ndim(x) == 0 and isinstance(x, (int, np.integer)):
        return int(x)
    return problem.slab.target_index(x)


def dz_field(problem, targets=None):
    """Deterministic D Z at all grid times for the given target indices (default: all)."""
    targets = list(range(len(problem.slab.targets))) if targets is None else list(targets)
    M = convolution_operator(problem.slab, problem.alpha_mat, targets)  # (X, J, N, N+1)
    vals = np.transpose(M, (2, 1, 3, 0)).copy()
    return MalliavinField(vals, Z_TARGET, 1, problem.grid, problem.mesh,
                          problem.slab.targets[targets])


def _march_linear(W, forcing, coef):
    """Solve D[i] = forcing[i] + sum_{k<i} W[i-k-1] (coef D)[k] on the boundary."""
    D = np.array(forcing, dtype=float)
    n = W.shape[0]
    for i in range(1, n + 1):
        hist = (coef[:i] * D[..., :i, :])[..., ::-1, :]
        D[..., i, :] = forcing[..., i, :] + np.einsum("mxl,...ml->...x", W[:i], hist)
    return D


def du_solve(problem, u, order=1, target=U_TARGET, x=None, anchor=None):
    """Malliavin derivative of one realization of the solution.

    ``u`` is the converged boundary solution (N+1, L). ``target`` is U (all
    boundary nodes) or U_interior with the interior point ``x``. For order 2
    ``anchor`` = (k1, j1) fixes the first derivative direction.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ConfigurationError("du_solve expects a single realization of shape (N+1, L)")
    if order not in (1, 2):
        raise CapabilityError("only derivatives of order 1 and 2 are provided")
    g = problem.g
    if order == 2 and g.smoothness != "G2":
        raise CapabilityError("second derivatives need a G2 nonlinearity")
    nb = problem.n_boundary
    Wb = problem.slab.boundary
    gp = g.derivative(u, 1)
    dz = dz_field(problem, range(nb)).values  # (N, J, N+1, L)
    Du = _march_linear(Wb, dz, gp)
    if order == 1:
        vals = Du
    else:
        if anchor is None:
            raise ConfigurationError("order 2 needs an anchor direction (time cell, S-cell)")
        k1, j1 = anchor
        gpp = g.derivative(u, 2)
        prod = gpp * Du[k1, j1][None, None] * Du
        op = volterra_operator(problem.slab, range(nb))
        f2 = apply_volterra(op, prod)
        vals = _march_linear(Wb, f2, gp)
    if target == U_TARGET:
        return MalliavinField(vals, U_TARGET, order, problem.grid, problem.mesh,
                              problem.domain.boundary_nodes, anchor)
    if target != U_INTERIOR:
        raise ConfigurationError(f"unknown Malliavin target {target!r}")
    if x is None or problem.domain.on_boundary(np.atleast_1d(x)):
        raise ConfigurationError("the interior target needs a point inside the domain")
    xi = problem.slab.target_index(x)
    opx = volterra_operator(problem.slab, [xi])
    if order == 1:
        inner = apply_volterra(opx, gp * Du) + dz_field(problem, [xi]).values
    else:
        inner = apply_volterra(opx, gpp * Du[k1, j1][None, None] * Du + gp * vals)
    return MalliavinField(inner, U_INTERIOR, order, problem.grid, problem.mesh,
                          problem.slab.targets[[xi]], anchor)


def _adjoint(problem, u, i, x):
    """Backward sweep for F = u(t_i, target x). Returns (w, s).

    w solves the adjoint Volterra equation on the boundary and s is the
    total kernel weight felt by g(u[k, l]).
    """
    nb = problem.n_boundary
    Wb = problem.slab.boundary
    u = np.asarray(u, dtype=float)
    gp = problem.g.derivative(u, 1)
    c0 = np.zeros(u.shape)
    e = np.zeros(u.shape)
    if x < nb:
        e[..., i, x] = 1.0
    else:
        Wx = problem.slab.weights[:, x, :]
        for k in range(i):
            c0[..., k, :] = Wx[i - k - 1]
    w = np.zeros(u.shape)
    s = np.zeros(u.shape)
    WbT = np.transpose(Wb, (0, 2, 1))  # [m, l', l]
    for k in range(i, -1, -1):
        acc = c0[..., k, :].copy()
        m = i - k
        if m > 0:
            acc += np.einsum("mab,...mb->...a", WbT[:m], w[..., k + 1:i + 1, :])
        s[..., k, :] = acc
        w[..., k, :] = e[..., k, :] + gp[..., k, :] * acc
    return w, s


def gradient(problem, u, i, x):
    """D u(t_i, x) for a stack of realizations u (..., N+1, L): shape (..., N, J).

    x is a boundary node index or an interior point (or its target index).
    """
    xi = _target_index(problem, x)
    nb = problem.n_boundary
    w, _ = _adjoint(problem, u, i, xi)
    Mb = convolution_operator(problem.slab, problem.alpha_mat, range(nb))  # (L, J, N, N+1)
    grad = np.einsum("...il,ljki->...kj", w, Mb)
    if xi >= nb:
        Mx = convolution_operator(problem.slab, problem.alpha_mat, [xi])[0]
        grad = grad + Mx[:, :, i].T
    return grad


def hessian(problem, u, i, x):
    """Full second derivative of u(t_i, x) for one realization: shape (N, J, N, J)."""
    xi = _target_index(problem, x)
    u = np.asarray(u, dtype=float)
    w, s = _adjoint(problem, u, i, xi)
    Du = du_solve(problem, u).values  # (N, J, N+1, L)
    q = problem.g.derivative(u, 2) * s
    return np.einsum("kjil,il,mnil->kjmn", Du, q, Du)


def perturbation_check(problem, seed, replica, tuples, eps=1e-3):
    """Compare Du with central differences along Cameron-Martin representers.

    Each tuple is (k, j, i, x): time cell, S-cell, time node, boundary node.
    Shifting dB[j, :] by eps mu_j C[:, k] moves the noise along the
    representer of the cell (k, j), so d/d eps u(t_i, x) must equal
    mu_j sum_k' Du[k', j] C[k', k].
    """
    h = problem.hurst
    C = cell_cov_matrix(h, problem.grid.nodes)
    mu = problem.mesh.weights
    dB, z = sample_fields(problem, seed, [replica])
    nb = problem.n_boundary

    def solve(db):
        zz = z_field(problem.slab, problem.alpha_mat, db[None], range(nb))[0]
        return march_boundary(problem, zz)

    u0 = solve(dB[0])
    out = []
    for k, j, i, x in tuples:
        shift = np.zeros_like(dB[0])
        shift[j] = mu[j] * C[:, k]
        up = solve(dB[0] + eps * shift)[i, x]
        um = solve(dB[0] - eps * shift)[i, x]
        fd = (up - um) / (2.0 * eps)
        D = gradient(problem, u0, i, x)
        pred = float(mu[j] * D[:, j] @ C[:, k])
        rel = abs(fd - pred) / max(abs(pred), 1e-300)
        out.append({"k": int(k), "j": int(j), "i": int(i), "x": int(x),
                    "finite_difference": float(fd), "derivative": pred, "relative_error": float(rel)})
    return out


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

def _loglog(deltas, values):
    return float(np.polyfit(np.log(deltas), np.log(values), 1)[0])


def lower_bound_probe(problem, i, x, deltas, tol=0.1):
    """Windowed norm of DZ(t_i, x) against the window length delta.

    Under (a2) all values are positive and the log-log slope stays at or
    below 2H - 1 (+ tol); ``within_band`` records |slope - (2H - 1)| <= tol.
    """
    grid, h = problem.grid, problem.hurst
    t = float(grid.nodes[i])
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0.0) or np.any(deltas >= t / 2.0):
        raise ConfigurationError("window lengths must lie in (0, t/2)")
    xi = _target_index(problem, x)
    D = dz_field(problem, [xi]).at(i)
    vals = np.array([h_norm(D, problem.mesh, grid, h, t, d).value for d in deltas])
    flags = []
    if not problem.alpha.satisfies_a2(problem.mesh, problem.domain):
        flags.append("unsupported_hypothesis")
    positive = bool(np.all(vals > 0.0))
    slope = _loglog(deltas, vals) if positive else float("nan")
    expected = 2.0 * h - 1.0
    if abs(slope - expected) <= tol:
        flags.append("within_band")
    ok = positive and slope <= expected + tol
    return SlopeReport("lower_bound", {"t": t, "x": problem.slab.targets[xi].tolist(), "hurst": h,
                                       "deltas": deltas.tolist(), "expected_slope": expected},
                       {"norms": vals.tolist()}, slope, bool(ok), flags)


def _gradients(problem, seed, replicas, i, x, tol, chunk, jobs):
    fn = _GradientJob(problem, seed, i, x, tol)
    parts = map_blocks(fn, replicas, chunk, jobs)
    return concat([p[0] for p in parts]), concat([p[1] for p in parts])


@dataclass
class _GradientJob:
    problem: object
    seed: int
    i: int
    x: object
    tol: float

    def __call__(self, block):
        pr = self.problem
        _, z = sample_fields(pr, self.seed, block)
        u, _ = picard_boundary(pr, z[..., : pr.n_boundary], tol=self.tol)
        return gradient(pr, u, self.i, self.x), u


def dg_bound_probe(problem, seed, replicas, i, x, deltas, p=2.0, mu=0.75, tol=1e-10,
                   chunk=500, jobs=1):
    """Moments E ||DG(t_i, x)||^p on windows (t - delta, t), G = u - Z.

    The fitted exponent must reach p (1 - mu) - 0.2.
    """
    if p < 2.0:
        raise ConfigurationError("p must be at least 2")
    replicas = list(replicas)
    grid, h = problem.grid, problem.hurst
    t = float(grid.nodes[i])
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas <= 0.0) or np.any(deltas > t):
        raise ConfigurationError("window lengths must lie in (0, t]")
    # G(t_i) does not see the last time cell, so shorter windows give exact zeros
    if np.any(deltas <= grid.dt):
        raise ConfigurationError(f"window lengths must exceed the time step {grid.dt:g}")
    xi = _target_index(problem, x)
    flags = []
    if len(replicas) < 100:
        flags.append("insufficient_data")
    grad, _ = _gradients(problem, seed, replicas, i, xi, tol, chunk, jobs)
    DG = grad - dz_field(problem, [xi]).at(i)[None]
    moments = np.array([np.mean(h_norm(DG, problem.mesh, grid, h, t, d).value ** (p / 2.0))
                        for d in deltas])
    target = p * (1.0 - mu) - 0.2
    params = {"t": t, "x": problem.slab.targets[xi].tolist(), "p": p, "mu": mu,
              "replicas": len(replicas), "deltas": deltas.tolist(), "required_exponent": target}
    if np.all(moments == 0.0):
        flags.append("identically_zero")
        return SlopeReport("dg_bound", params, {"moments": moments.tolist()}, None, True, flags)
    slope = _loglog(deltas, moments)
    return SlopeReport("dg_bound", params, {"moments": moments.tolist()}, slope,
                       bool(slope >= target), flags)


def malliavin_norms(problem, seed, replicas, i, x, tol=1e-10, chunk=500, jobs=1):
    """||Du(t_i, x)||_H^2 per replica."""
    xi = _target_index(problem, x)
    grad, _ = _gradients(problem, seed, list(replicas), i, xi, tol, chunk, jobs)
    return h_norm(grad, problem.mesh, problem.grid, problem.hurst, problem.grid.nodes[i]).value


def nondegeneracy_prob(problem, seed, replicas, i, x, epsilons=None, tol=1e-10, chunk=500, jobs=1):
    """Empirical P(||Du(t_i, x)||_H^2 < eps) on a shrinking eps grid.

    The default grid runs geometrically from twice the median norm down to a
    quarter of the deterministic ||DZ||_H^2.
    """
    replicas = list(replicas)
    xi = _target_index(problem, x)
    norms = np.atleast_1d(malliavin_norms(problem, seed, replicas, i, xi, tol, chunk, jobs))
    t = problem.grid.nodes[i]
    dz = h_norm(dz_field(problem, [xi]).at(i), problem.mesh, problem.grid, problem.hurst, t).value
    if epsilons is None:
        epsilons = np.geomspace(2.0 * np.median(norms), 0.25 * dz, 4)
    eps = np.sort(np.asarray(epsilons, dtype=float))[::-1]
    probs = np.array([np.mean(norms < e) for e in eps])
    monotone = bool(np.all(np.diff(probs) <= 0.0))
    zero = bool(probs[-1] == 0.0)
    flags = [] if len(replicas) >= 1000 else ["insufficient_data"]
    if not problem.alpha.satisfies_a2(problem.mesh, problem.domain):
        flags.append("unsupported_hypothesis")
    params = {"t": float(t), "x": problem.slab.targets[xi].tolist(), "replicas": len(replicas),
              "dz_norm": float(dz), "median_norm": float(np.median(norms)),
              "min_norm": float(norms.min())}
    return DecayReport("nondegeneracy", params, eps.tolist(), probs.tolist(), monotone, zero,
                       monotone and zero, flags)
