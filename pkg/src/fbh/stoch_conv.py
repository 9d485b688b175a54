"""Stochastic convolution Z(t, x) = int_0^t int_S int_dD p_N(t-s, x, y) alpha(sigma, y) dsigma(y) B(dsigma, ds).

The integrand is deterministic, so Z is a centred Gaussian field. Two routes
produce samples: the increment sum against a sampled noise path, and a
direct draw from N(0, variance_z). Both use the same discretization: the
integrand on each time cell is replaced by its exact average over the cell
(slab integral of the kernel divided by dt), so that the two routes have
the same law exactly and ||D Z||_H^2 equals the variance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .domain import INTERVAL
from .errors import ConfigurationError, NumericalError
from .fbm import cell_cov_matrix, check_hurst, kstar_isometry, sample_increments, substream
from .heat_kernel.slabs import cell_kernel

INCREMENT = "increment"
EXACT = "exact"
ROUTES = (INCREMENT, EXACT)
ALPHA_KINDS = ("one", "sine", "degenerate")
CLAIMS = ("a1", "a1'", "a2")
# substream cell index reserved for exact-route draws (noise cells use 0..J-1)
_EXACT_STREAM = 2 ** 31 - 1


@dataclass(frozen=True)
class AlphaCoefficient:
    """alpha(sigma, y) with the integrability/positivity hypotheses it claims."""

    kind: str
    claims: tuple = ("a1",)
    theta: float = None
    alpha0: float = 0.0

    def __call__(self, sigma, y):
        sigma = np.asarray(sigma, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(sigma, y[..., 0] if y.ndim else y).shape
        if self.kind == "one":
            return np.ones(shape)
        if self.kind == "sine":
            return np.broadcast_to(1.0 + 0.5 * np.sin(2 * np.pi * sigma), shape).copy()
        # vanishes on half of S, so no positive lower bound exists
        return np.broadcast_to(np.maximum(0.0, np.sin(2 * np.pi * sigma)), shape).copy()

    def matrix(self, mesh, domain):
        """Values alpha(sigma_j, y_l), shape (J, L)."""
        s = mesh.points[:, None]
        vals = self(s, domain.boundary_nodes[None, :, :])
        return np.broadcast_to(vals, (mesh.n_cells, domain.n_nodes)).astype(float)

    def satisfies_a2(self, mesh, domain):
        m = self.matrix(mesh, domain)
        return bool(self.alpha0 > 0.0 and np.all(m >= self.alpha0))

    def validate(self, mesh, domain, hurst):
        """Raise if a claimed hypothesis fails on the mesh or for the given H."""
        if "a2" in self.claims and not self.satisfies_a2(mesh, domain):
            raise ConfigurationError(
                f"alpha.kind={self.kind} claims (a2) but min alpha < alpha0={self.alpha0} on the mesh")
        if "a1'" in self.claims:
            need = (domain.dim - 1) / (2 * hurst - 1) if hurst > 0.5 else np.inf
            if self.theta is None or not self.theta > need:
                raise ConfigurationError(
                    f"alpha.theta must exceed (d-1)/(2H-1) = {need:g} for (a1')")


def alpha_coefficient(kind="one", claims=None, theta=None, alpha0=None):
    if kind not in ALPHA_KINDS:
        raise ConfigurationError(f"alpha.kind must be one of {ALPHA_KINDS}")
    if claims is None:
        claims = ("a1", "a2") if kind != "degenerate" else ("a1",)
    claims = tuple(c.strip().lower() for c in claims if c.strip())
    for c in claims:
        if c not in CLAIMS:
            raise ConfigurationError(f"unknown alpha claim {c!r}")
    if alpha0 is None:
        alpha0 = {"one": 1.0, "sine": 0.5, "degenerate": 0.0}[kind]
    return AlphaCoefficient(kind, claims, theta, float(alpha0))


def phi_integrand(domain, alpha, t, x):
    """(s, sigma) -> int_dD p_N(t - s, x, y) alpha(sigma, y) dsigma(y); zero for s >= t.

    The boundary integral is the cell quadrature of the domain (exact cell
    integrals of the kernel on the square, point values on the interval).
    """
    t = float(t)
    if t <= 0.0:
        raise ConfigurationError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = domain.boundary_nodes

    def phi(s, sigma):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros(s.shape)
        live = s < t
        if np.any(live):
            ck = cell_kernel(domain, t - s[live], x[None, :])[:, 0, :]
            a = alpha(np.full(len(nodes), sigma), nodes)
            out[live] = ck @ (a * (domain.boundary_weights if domain.kind == INTERVAL else 1.0))
        return out

    return phi


def averaged_integrand(slab, alpha_mat, i, target):
    """Cell-averaged integrand for Z(t_i, target): shape (J, i), time cells 0..i-1."""
    if not 0 <= i <= slab.grid.n_steps:
        raise ConfigurationError("time index out of range")
    lag = slab.averages(target)[:i][::-1]  # time cell k has lag slab i - k
    return (lag @ alpha_mat.T).T


def convolution_operator(slab, alpha_mat, targets=None):
    """M[x, j, k, i] so that Z[r, i, x] = sum_{j,k} dB[r, j, k] M[x, j, k, i]."""
    n = slab.grid.n_steps
    targets = range(len(slab.targets)) if targets is None else targets
    A = np.einsum("mxl,jl->xjm", slab.weights[:, list(targets), :], alpha_mat) / slab.grid.dt
    k = np.arange(n)[:, None]
    i = np.arange(n + 1)[None, :]
    lag = i - k - 1
    valid = lag >= 0
    M = np.where(valid[None, None], A[:, :, np.clip(lag, 0, n - 1)], 0.0)
    return M


def z_field(slab, alpha_mat, increments, targets=None):
    """Z at all grid times and targets for a stack of increments (R, J, N): shape (R, N+1, X)."""
    M = convolution_operator(slab, alpha_mat, targets)
    dB = np.asarray(increments, dtype=float)
    return np.einsum("rjk,xjki->rix", dB, M, optimize=True)


def variance_z(slab, alpha_mat, mesh, h, i, target):
    """Exact variance of the discretized Z(t_i, target)."""
    h = check_hurst(h)
    phi = averaged_integrand(slab, alpha_mat, i, target)
    if i == 0:
        return 0.0
    C = cell_cov_matrix(h, slab.grid.nodes[: i + 1])
    return float(np.einsum("j,jk,kl,jl->", mesh.weights, phi, C, phi))


def variance_z_kstar(domain, alpha, mesh, t, x, h, n_nodes=48):
    """sum_j mu_j int |K* phi_j|^2 with the pointwise integrand (independent cross-check)."""
    h = check_hurst(h, strict=True)
    phi = phi_integrand(domain, alpha, t, x)
    end = -0.5 if domain.on_boundary(x) else 0.0
    total = 0.0
    for mu, sig in zip(mesh.weights, mesh.points):
        total += mu * kstar_isometry(lambda s, sig=sig: phi(s, sig), t, h, n_nodes, n_nodes, end)
    return float(total)


@dataclass(frozen=True)
class ConvolutionSample:
    t: float
    x: tuple
    value: float
    route: str
    seed: int
    replica: int = 0


def simulate_z(slab, alpha_mat, mesh, h, seed, replicas, i, target, route=INCREMENT, chunk=1000):
    """Samples of Z(t_i, target) for the listed replicas, shape (R,)."""
    if route not in ROUTES:
        raise ConfigurationError(f"route must be one of {ROUTES}")
    replicas = list(replicas)
    if route == EXACT:
        var = variance_z(slab, alpha_mat, mesh, h, i, target)
        if not var > 0.0:
            raise NumericalError(f"non-positive variance {var} for the exact Gaussian route")
        sd = np.sqrt(var)
        return np.array([sd * substream(seed, r, _EXACT_STREAM).standard_normal() for r in replicas])
    phi = averaged_integrand(slab, alpha_mat, i, target)
    out = np.empty(len(replicas))
    for a in range(0, len(replicas), chunk):
        part = replicas[a:a + chunk]
        dB = sample_increments(mesh, slab.grid, h, seed, part)[:, :, :i]
        out[a:a + len(part)] = np.einsum("rjk,jk->r", dB, phi)
    return out


@dataclass
class ProbeReport:
    probe: str
    params: dict
    values: dict
    slope: float = None
    satisfied: bool = False
    flags: list = field(default_factory=list)

    def to_json(self):
        return {"probe": self.probe, "params": self.params, "slope": self.slope,
                "values": self.values, "satisfied": self.satisfied, "flags": self.flags}


def holder_probe(domain, grid, mesh, alpha, h, seed, replicas, base=0.4, separations=None,
                 epsilon=0.2, i=None, chunk=1000):
    """Regression slope of log E|Z(t,x) - Z(t,z)|^2 against log|x - z| over interior pairs."""
    from .heat_kernel.slabs import build_slab_table

    if separations is None:
        separations = np.geomspace(2e-3, 5e-2, 6)
    seps = np.asarray(separations, dtype=float)
    base_pt = np.atleast_1d(np.asarray(base, dtype=float))
    direction = np.zeros(domain.dim)
    direction[0] = 1.0
    pts = [base_pt] + [base_pt + s * direction for s in seps]
    for p in pts:
        if domain.distance_to_boundary(p) < epsilon:
            raise ConfigurationError(f"point {p.tolist()} is closer than {epsilon} to the boundary")
    slab = build_slab_table(domain, grid, pts)
    am = alpha.matrix(mesh, domain)
    i = grid.n_steps if i is None else i
    L = domain.n_nodes
    targets = list(range(L, L + len(pts)))
    phis = [averaged_integrand(slab, am, i, tg) for tg in targets]
    C = cell_cov_matrix(h, grid.nodes[: i + 1])
    exact = np.array([float(np.einsum("j,jk,kl,jl->", mesh.weights, phis[0] - p, C, phis[0] - p))
                      for p in phis[1:]])
    mc = np.zeros(len(seps))
    reps = list(range(replicas))
    for a in range(0, replicas, chunk):
        dB = sample_increments(mesh, grid, h, seed, reps[a:a + chunk])[:, :, :i]
        z0 = np.einsum("rjk,jk->r", dB, phis[0])
        for q, p in enumerate(phis[1:]):
            mc[q] += np.sum((z0 - np.einsum("rjk,jk->r", dB, p)) ** 2)
    mc /= replicas
    slope = float(np.polyfit(np.log(seps), np.log(mc), 1)[0])
    slope_exact = float(np.polyfit(np.log(seps), np.log(exact), 1)[0])
    ok = 1.8 <= slope <= 2.2
    return ProbeReport("holder", {"hurst": h, "t": float(grid.nodes[i]), "base": base_pt.tolist(),
                                  "epsilon": epsilon, "replicas": replicas},
                       {"separations": seps.tolist(), "mc": mc.tolist(), "exact": exact.tolist(),
                        "slope_exact": slope_exact}, slope, bool(ok))


def trace_probe(slab, alpha, mesh, h, seed, replicas, powers=(2, 4), chunk=500):
    """Moments E|Z(t, xi)|^p at every boundary node and grid time."""
    dom = slab.domain
    if "a1'" in alpha.claims:
        alpha.validate(mesh, dom, h)
    am = alpha.matrix(mesh, dom)
    L = slab.n_boundary
    sums = {p: np.zeros((slab.grid.n_steps + 1, L)) for p in powers}
    reps = list(range(replicas))
    for a in range(0, replicas, chunk):
        dB = sample_increments(mesh, slab.grid, h, seed, reps[a:a + chunk])
        z = z_field(slab, am, dB, range(L))
        for p in powers:
            sums[p] += np.sum(np.abs(z) ** p, axis=0)
    values, ok = {}, True
    for p in powers:
        m = sums[p] / replicas
        per_node = m.max(axis=0)
        med = float(np.median(per_node))
        node_ok = bool(np.all(np.isfinite(per_node)) and per_node.max() <= 3.0 * med)
        ok &= node_ok
        values[f"p{p}"] = {"sup_t_per_node": per_node.tolist(), "median": med,
                           "max": float(per_node.max()), "within_3x_median": node_ok}
    return ProbeReport("trace", {"hurst": h, "replicas": replicas, "powers": list(powers)},
                       values, None, bool(ok))


def moment_probe(samples, powers=(2, 4, 8)):
    """Finite moments and the Gaussian kurtosis check (within 10% of 3)."""
    s = np.asarray(samples, dtype=float)
    mom = {f"p{p}": float(np.mean(np.abs(s) ** p)) for p in powers}
    kurt = float(np.mean(s ** 4) / np.mean(s ** 2) ** 2)
    ok = all(np.isfinite(v) for v in mom.values()) and abs(kurt - 3.0) < 0.3
    return ProbeReport("moments", {"n": len(s)}, {**mom, "kurtosis": kurt}, None, bool(ok))


def law_probe(slab, alpha_mat, mesh, h, seed, replicas, i, target):
    """Increment route against the exact Gaussian route at (t_i, target).

    Passes when the two-sample KS p-value exceeds 0.01, the increment-route
    variance is within 3 standard errors of variance_z and the kurtosis is
    within 10% of 3.
    """
    replicas = list(replicas)
    zi = simulate_z(slab, alpha_mat, mesh, h, seed, replicas, i, target, INCREMENT)
    ze = simulate_z(slab, alpha_mat, mesh, h, seed, replicas, i, target, EXACT)
    var = variance_z(slab, alpha_mat, mesh, h, i, target)
    n = len(zi)
    emp = float(np.var(zi, ddof=1))
    se = var * np.sqrt(2.0 / (n - 1))
    ks = stats.ks_2samp(zi, ze)
    kurt = float(stats.kurtosis(zi, fisher=False))
    checks = {"ks": bool(ks.pvalue > 0.01), "variance": bool(abs(emp - var) < 3.0 * se),
              "kurtosis": bool(abs(kurt - 3.0) < 0.3)}
    values = {"ks_pvalue": float(ks.pvalue), "ks_stat": float(ks.statistic), "variance_z": var,
              "empirical_variance": emp, "variance_se": float(se), "kurtosis": kurt,
              "exact_route_variance": float(np.var(ze, ddof=1)), "checks": checks}
    params = {"t": float(slab.grid.nodes[i]), "x": slab.targets[target].tolist(), "hurst": h,
              "replicas": n}
    return ProbeReport("law", params, values, None, all(checks.values()))


def regularity_probes(domain, grid, mesh, alpha, h, seed, replicas=10_000, epsilon=0.2):
    """Hoelder, boundary-trace and moment probes with shared settings."""
    from .heat_kernel.slabs import build_slab_table

    slab = build_slab_table(domain, grid)
    am = alpha.matrix(mesh, domain)
    holder = holder_probe(domain, grid, mesh, alpha, h, seed, replicas, epsilon=epsilon)
    trace = trace_probe(slab, alpha, mesh, h, seed, min(replicas, 4000))
    z = simulate_z(slab, am, mesh, h, seed, range(replicas), grid.n_steps, 0)
    mom = moment_probe(z)
    return [holder, trace, mom]
