"""Kernel tables and empirical checks of the pointwise kernel estimates."""

from dataclasses import dataclass, field

import numpy as np

from ..domain import INTERVAL
from ..errors import ConfigurationError
from .eigen import modes_needed, robin_eigensystem
from .parametrix import MAX_TERMS, kernel_parametrix
from .spectral import TAIL_TOL, kernel_spectral

SPECTRAL = "spectral"
PARAMETRIX = "parametrix"
METHODS = (SPECTRAL, PARAMETRIX)
MODES = ("upper", "lower", "gradient")

# entries below this are within a few hundred ulps of the spectral sum's
# absolute accuracy and cannot certify a lower or gradient bound
RELIABLE_FLOOR = 1e-9


@dataclass(frozen=True)
class KernelTable:
    """p_N(t_k, x_i, ybar_j) on a product of times, points and boundary nodes."""

    domain: object
    times: np.ndarray
    points: np.ndarray
    ybars: np.ndarray
    values: np.ndarray
    method: str
    truncation: int
    ybar_edges: np.ndarray = field(default=None)

    def rows(self):
        """(method, t, x, ybar, value) tuples; x and ybar are formatted as strings for d = 2."""
        out = []
        for k, t in enumerate(self.times):
            for i, x in enumerate(self.points):
                for j, y in enumerate(self.ybars):
                    out.append((self.method, float(t), _fmt(x), _fmt(y), float(self.values[k, i, j])))
        return out


def _fmt(p):
    p = np.atleast_1d(p)
    return float(p[0]) if p.size == 1 else " ".join(f"{v:.12g}" for v in p)


def default_points(domain):
    if domain.kind == INTERVAL:
        return np.linspace(0.0, 1.0, 11)[:, None]
    g = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    xx, yy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _edge_of_nodes(domain, exclude_corners):
    if domain.kind == INTERVAL:
        return domain.boundary_nodes, np.array([0, 1])
    keep = ~domain.corner_adjacent if exclude_corners else np.ones(domain.n_nodes, dtype=bool)
    edges = np.array([c[0] for c in domain.cells])
    return domain.boundary_nodes[keep], edges[keep]


def build_kernel_table(domain, times, points=None, method=SPECTRAL, n_terms=MAX_TERMS,
                       exclude_corners=True):
    """Tabulate p_N. The boundary arguments are the domain's nodes (corner-adjacent ones dropped)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0 or np.any(times <= 0.0):
        raise ConfigurationError("kernel table times must be positive")
    if method not in METHODS:
        raise ConfigurationError(f"kernel method must be one of {METHODS}")
    pts = default_points(domain) if points is None else np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    ybars, edges = _edge_of_nodes(domain, exclude_corners)
    if method == SPECTRAL:
        n = modes_needed(times.min(), TAIL_TOL / 4.0)
        eig = robin_eigensystem(domain, n if domain.kind == INTERVAL else n * n)
        vals = kernel_spectral(eig, times[:, None, None], pts[None, :, None, :],
                               ybars[None, None, :, :])
        trunc = eig.modes.count
    else:
        vals = np.array([[[kernel_parametrix(domain, t, x, y, n_terms) for y in ybars[:, 0]]
                          for x in pts[:, 0]] for t in times])
        trunc = int(n_terms)
    return KernelTable(domain, times, pts, ybars, np.asarray(vals, dtype=float), method, trunc, edges)


@dataclass(frozen=True)
class BoundReport:
    mode: str
    mu: float
    constant: float
    worst_point: dict
    satisfied: bool
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"mode": self.mode, "mu": self.mu, "constant": self.constant,
                "worst_point": self.worst_point, "satisfied": self.satisfied, **self.details}


def _same_edge_or_interior(table):
    """Mask (n_x, n_y) of admissible (x, ybar) pairs: x interior, or x on ybar's edge."""
    dom = table.domain
    n_x, n_y = len(table.points), len(table.ybars)
    mask = np.ones((n_x, n_y), dtype=bool)
    if dom.kind == INTERVAL:
        return mask
    for i, x in enumerate(table.points):
        if not dom.on_boundary(x):
            continue
        on = _edges_containing(x)
        mask[i] = np.isin(table.ybar_edges, on)
    return mask


def _edges_containing(x, tol=1e-12):
    out = []
    if abs(x[1]) <= tol:
        out.append(0)
    if abs(x[0] - 1.0) <= tol:
        out.append(1)
    if abs(x[1] - 1.0) <= tol:
        out.append(2)
    if abs(x[0]) <= tol:
        out.append(3)
    return out


def _worst(table, idx, ratio):
    k, i, j = idx
    return {"t": float(table.times[k]), "x": np.atleast_1d(table.points[i]).tolist(),
            "ybar": np.atleast_1d(table.ybars[j]).tolist(), "ratio": float(ratio)}


def _distances(table):
    d = table.points[:, None, :] - table.ybars[None, :, :]
    return np.linalg.norm(d, axis=-1)


def _gradient_fd(table, step=1e-5):
    """Central finite-difference gradient in x, shape (n_t, n_x, n_y, d)."""
    dom = table.domain
    n = modes_needed(table.times.min(), TAIL_TOL / 4.0)
    eig = robin_eigensystem(dom, n if dom.kind == INTERVAL else n * n)
    d = dom.dim
    out = np.empty(table.values.shape + (d,))
    for c in range(d):
        e = np.zeros(d)
        e[c] = step
        t = table.times[:, None, None]
        y = table.ybars[None, None, :, :]
        hi = kernel_spectral(eig, t, (table.points + e)[None, :, None, :], y)
        lo = kernel_spectral(eig, t, (table.points - e)[None, :, None, :], y)
        out[..., c] = (hi - lo) / (2.0 * step)
    return out


def verify_kernel_bounds(table, mode, mu=0.75):
    """Fit the constant of one kernel estimate over the table.

    upper:    p <= c t^-mu r^(2 mu - d); constant = max ratio over pairs with r > 0.
    lower:    p >= C1 t^(-d/2) exp(-C2 r^2 / t); C2 from a least-squares fit of
              log(p t^(d/2)) against r^2/t, C1 the minimum ratio given C2.
    gradient: |grad p| <= k^-1 exp(-k r^2/t) t^(-(d+1)/2) with the largest admissible
              k <= 1 found by bisection, and |grad p| <= K r^(2 mu - d) t^(-(2 mu + 1)/2)
              with K the max ratio; x is restricted to interior points.
    """
    mode = str(mode).lower()
    if mode not in MODES:
        raise ConfigurationError(f"bound mode must be one of {MODES}")
    if table.values.size == 0:
        raise ConfigurationError("kernel table is empty")
    if mode in ("upper", "gradient") and not 0.5 < mu < 1.0:
        raise ConfigurationError(f"mu must lie in (1/2, 1), got {mu}")
    d = table.domain.dim
    t = table.times[:, None, None]
    r = np.broadcast_to(_distances(table)[None], table.values.shape)
    admissible = np.broadcast_to(_same_edge_or_interior(table)[None], table.values.shape)
    p = table.values

    if mode == "upper":
        mask = admissible & (r > 0.0)
        ratio = np.where(mask, p * t ** mu / np.where(mask, r, 1.0) ** (2 * mu - d), -np.inf)
        idx = np.unravel_index(np.argmax(ratio), ratio.shape)
        c = float(ratio[idx])
        return BoundReport("upper", mu, c, _worst(table, idx, c), bool(np.isfinite(c) and c > 0),
                           {"n_pairs": int(mask.sum())})

    if mode == "lower":
        mask = admissible & (p > RELIABLE_FLOOR)
        if not mask.any():
            raise ConfigurationError("no kernel entries above the reliability floor")
        q = (r ** 2 / t)[mask]
        y = np.log(p[mask] * np.broadcast_to(t, p.shape)[mask] ** (d / 2))
        slope = np.polyfit(q, y, 1)[0] if np.ptp(q) > 0 else 0.0
        c2 = max(-float(slope), 0.0)
        ratio = np.where(mask, p * t ** (d / 2) * np.exp(c2 * r ** 2 / t), np.inf)
        idx = np.unravel_index(np.argmin(ratio), ratio.shape)
        c1 = float(ratio[idx])
        return BoundReport("lower", mu, c1, _worst(table, idx, c1), bool(c1 > 0.0),
                           {"C2": c2, "n_pairs": int(mask.sum()),
                            "n_below_floor": int((admissible & ~mask).sum()),
                            "all_positive": bool(np.all(p[admissible & (p > RELIABLE_FLOOR)] > 0))})

    interior = np.array([table.domain.is_interior(x) for x in table.points])
    if not interior.any():
        raise ConfigurationError("gradient bounds need interior points in the table")
    grad = np.linalg.norm(_gradient_fd(table), axis=-1)
    mask = np.broadcast_to(interior[None, :, None], p.shape) & (p > RELIABLE_FLOOR)
    g = grad[mask]
    q = (r ** 2 / t)[mask]
    tt = np.broadcast_to(t, p.shape)[mask]
    base = g * tt ** ((d + 1) / 2)

    def feasible(k):
        return np.max(k * base * np.exp(k * q)) <= 1.0

    lo, hi = 0.0, 1.0
    if feasible(1.0):
        k = 1.0
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
        k = lo
    safe_r = np.where(mask, r, 1.0)
    alg = np.where(mask, grad * t ** ((2 * mu + 1) / 2) / safe_r ** (2 * mu - d), -np.inf)
    idx = np.unravel_index(np.argmax(alg), alg.shape)
    big_k = float(alg[idx])
    ok = bool(k > 0.0 and np.isfinite(big_k))
    return BoundReport("gradient", mu, big_k, _worst(table, idx, big_k), ok,
                       {"gaussian_k": float(k), "algebraic_K": big_k,
                        "n_pairs": int(mask.sum())})


def split_gradient(report):
    """The two gradient estimates of a gradient report as separate reports."""
    if report.mode != "gradient":
        raise ConfigurationError("split_gradient expects a gradient report")
    k = report.details["gaussian_k"]
    big_k = report.details["algebraic_K"]
    n = report.details.get("n_pairs")
    gauss = BoundReport("gradient_gaussian", report.mu, k, report.worst_point, bool(k > 0.0),
                        {"n_pairs": n})
    alg = BoundReport("gradient_algebraic", report.mu, big_k, report.worst_point,
                      bool(np.isfinite(big_k)), {"n_pairs": n})
    return gauss, alg
