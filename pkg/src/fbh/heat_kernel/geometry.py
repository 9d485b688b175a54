"""Boundary singular integrals on the unit square and the elementary analytic inequality."""

from dataclasses import dataclass

import numpy as np

from ..domain import RECTANGLE, _EDGES
from ..errors import ConfigurationError
from ..fbm import _gauss, graded_rule

_RATIO = 0.15
_LEVELS = 22
_PANEL = 16


def analytic_bound(alpha, x):
    """x^alpha e^(-x); never exceeds alpha^alpha e^(-alpha)."""
    if alpha <= 0.0:
        raise ConfigurationError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0.0, np.exp(alpha * np.log(np.where(x > 0, x, 1.0)) - x), 0.0)
    return float(out) if out.ndim == 0 else out


def analytic_bound_max(alpha):
    return float(np.exp(alpha * np.log(alpha) - alpha))


def _panel(u, v, n=_PANEL):
    x, w = _gauss(n)
    return u + 0.5 * (v - u) * (x + 1.0), 0.5 * (v - u) * w


def _towards(s0, s1, exponent):
    """Offsets from s0 and weights on [s0, s1] (either order), refined geometrically at s0.

    Offsets are kept relative to s0 so that distances to the singular point
    stay exact far below the spacing of floats near s0. The innermost panel
    is graded so that |s - s0|^(-exponent) is integrated exactly.
    """
    length = s1 - s0
    marks = [length * _RATIO ** k for k in range(_LEVELS + 1)]
    xs, ws = [], []
    for a, b in zip(marks[1:], marks[:-1]):
        x, w = _panel(a, b)
        xs.append(x)
        ws.append(w)
    x, w = graded_rule(0.0, marks[-1], _PANEL, 1.0 / (1.0 - exponent))
    xs.append(x)
    ws.append(w)
    return np.concatenate(xs), np.abs(np.concatenate(ws))


def _edge_param(edge, p, tol=1e-12):
    """Arclength of p along the edge, or None if p is not on it."""
    origin, direction = _EDGES[edge]
    d = np.asarray(p, dtype=float) - origin
    s = float(d @ direction)
    if -tol <= s <= 1.0 + tol and np.linalg.norm(d - s * direction) <= tol:
        return min(max(s, 0.0), 1.0)
    return None


def _edge_rule(specials):
    """Quadrature on one edge [0, 1] refined at the arclengths in ``specials``.

    ``specials`` maps arclength -> singular exponent. Returns anchors,
    offsets and weights; a node sits at anchor + offset.
    """
    cuts = sorted({0.0, 1.0, *specials})
    anchors, offsets, ws = [], [], []

    def add(anchor, off, w):
        anchors.append(np.full(len(off), anchor))
        offsets.append(off)
        ws.append(w)

    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 0.0:
            continue
        ea, eb = specials.get(a), specials.get(b)
        if ea is None and eb is None:
            x, w = _panel(a, b, 2 * _PANEL)
            add(0.0, x, w)
        elif eb is None:
            add(a, *_towards(a, b, ea))
        elif ea is None:
            add(b, *_towards(b, a, eb))
        else:
            m = 0.5 * (a + b)
            add(a, *_towards(a, m, ea))
            add(b, *_towards(b, m, eb))
    return np.concatenate(anchors), np.concatenate(offsets), np.concatenate(ws)


def _edge_integral(edge, a, b, x, xi, sx, sxi, anchors, offsets, w):
    origin, direction = _EDGES[edge]
    s = anchors + offsets
    y = origin[None, :] + s[:, None] * direction[None, :]

    def dist(p, sp):
        if sp is None:
            return np.linalg.norm(y - p, axis=1)
        # p lies on this edge: the distance is the arclength gap, computed exactly
        return np.abs((anchors - sp) + offsets)

    f = np.ones_like(s)
    if a > 0.0:
        f = f * dist(x, sx) ** (-a)
    if b > 0.0:
        f = f * dist(xi, sxi) ** (-b)
    return float(np.sum(w * f))


def _check(domain, a, b, x, xi):
    if domain.kind != RECTANGLE:
        raise ConfigurationError("the boundary singular integral is defined on the rectangle")
    if not (0.0 <= a < 1.0 and 0.0 <= b < 1.0):
        raise ConfigurationError("exponents must satisfy 0 <= a, b < 1 (d - 1 = 1 is not integrable)")
    if abs(a + b - 1.0) < 1e-12:
        raise ConfigurationError("a + b = d - 1 is the logarithmic borderline case and is rejected")
    for p in (x, xi):
        if not domain.on_boundary(p):
            raise ConfigurationError("x and xi must lie on the boundary")


def singular_boundary_integral(domain, a, b, x, xi):
    """int over the square's perimeter of |x - y|^-a |y - xi|^-b dsigma(y)."""
    _check(domain, a, b, x, xi)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    total = 0.0
    for edge in range(4):
        specials = {}
        sx = _edge_param(edge, x)
        sxi = _edge_param(edge, xi)
        if sx is not None:
            specials[sx] = a
        if sxi is not None:
            specials[sxi] = specials.get(sxi, 0.0) + b
        if specials and max(specials.values()) >= 1.0:
            raise ConfigurationError("x = xi with a + b >= 1 is not integrable")
        rule = _edge_rule(specials)
        total += _edge_integral(edge, a, b, x, xi, sx, sxi, *rule)
    return total


@dataclass(frozen=True)
class SingularFit:
    a: float
    b: float
    separations: np.ndarray
    values: np.ndarray
    exponent: float
    expected: float
    constant: float
    variation: float
    satisfied: bool

    def to_json(self):
        return {"a": self.a, "b": self.b, "separations": self.separations.tolist(),
                "values": self.values.tolist(), "exponent": self.exponent,
                "expected": self.expected, "constant": self.constant,
                "variation": self.variation, "satisfied": self.satisfied}


def fit_singular_exponent(domain, a, b, separations=None, tol=0.05, base=(0.5, 0.0)):
    """Tabulate the integral over x, xi on one edge and compare with the bound's shape.

    a + b > 1: log-log slope against |x - xi| must equal 1 - a - b within ``tol``.
    a + b < 1: values must stay within 10% of their maximum (bounded by a constant).
    """
    if separations is None:
        separations = np.geomspace(1e-4, 1e-2, 10)
    seps = np.asarray(separations, dtype=float)
    x = np.asarray(base, dtype=float)
    vals = np.array([singular_boundary_integral(domain, a, b, x, x + np.array([s, 0.0]))
                     for s in seps])
    slope, icpt = np.polyfit(np.log(seps), np.log(vals), 1)
    variation = float((vals.max() - vals.min()) / vals.max())
    if a + b > 1.0:
        expected = 1.0 - a - b
        ok = abs(slope - expected) < tol
        const = float(np.max(vals / seps ** expected))
    else:
        expected = 0.0
        ok = variation < 0.1
        const = float(vals.max())
    return SingularFit(float(a), float(b), seps, vals, float(slope), expected, const, variation, bool(ok))
