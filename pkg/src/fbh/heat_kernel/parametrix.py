"""Parametrix series for the Robin kernel on the unit interval.

The boundary is the two-point set {0, 1}, so the boundary integral in the
series is a sum and every M_n is a 2 x 2 matrix-valued function of the time
lag. M_1 = dGamma/dnu - beta Gamma (nu the inward normal at the first
argument) splits into a diagonal singular part c tau^(-1/2) with
c = -beta / sqrt(2 pi) and a smooth, exponentially flat off-diagonal part
E(tau) = (1/tau - beta) Gamma(tau, 1). Each M_n is carried as
d_n tau^(n/2 - 1) I + S_n(tau) with S_n smooth; the singular coefficients
follow d_{n+1} = c d_n B(1/2, n/2) and S_n is tabulated on a uniform lag
grid with product integration against the algebraic weights.
"""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import beta as beta_fn

from ..domain import INTERVAL
from ..errors import CapabilityError, ConfigurationError, ConvergenceError
from .spectral import gaussian

T_MAX = 0.25
MAX_TERMS = 6
_QUAD = dict(epsabs=1e-14, epsrel=1e-11, limit=400)


def _alg_weights(a, h, n):
    """Product-integration weights for int_0^{s} r^a f(r) dr with f piecewise linear."""
    s = h * np.arange(n + 1)
    lo, hi = s[:-1], s[1:]
    i0 = (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)
    i1 = (hi ** (a + 2) - lo ** (a + 2)) / (a + 2)
    left = (hi * i0 - i1) / h
    right = (i1 - lo * i0) / h
    return left, right


def _conv_alg(a, f, h):
    """out[k] = int_0^{tau_k} r^a f(tau_k - r) dr, f given on the grid."""
    n = len(f) - 1
    left, right = _alg_weights(a, h, n)
    out = np.zeros_like(f)
    ca = np.convolve(left, f)[: n + 1]
    cb = np.convolve(right, f)[:n]
    out[1:] = ca[1:] - left[: n] * f[0] + cb
    return out


def _conv_smooth(f, g, h):
    """Trapezoid convolution of two grid functions vanishing at lag zero."""
    n = len(f) - 1
    return h * np.convolve(f, g)[: n + 1]


@lru_cache(maxsize=32)
def _series(beta, t, n_terms, n_grid):
    """Singular coefficients d_n and smooth parts S_n (2 x 2 x grid) for n = 1..n_terms."""
    h = t / n_grid
    tau = h * np.arange(n_grid + 1)
    c = -beta / np.sqrt(2.0 * np.pi)
    e = np.zeros(n_grid + 1)
    e[1:] = (1.0 / tau[1:] - beta) * gaussian(tau[1:], 1.0)
    d = [c]
    s1 = np.zeros((2, 2, n_grid + 1))
    s1[0, 1] = s1[1, 0] = e
    smooth = [s1]
    for n in range(1, n_terms):
        dn, sn = d[-1], smooth[-1]
        nxt = np.empty_like(sn)
        qe = _conv_alg(n / 2.0 - 1.0, e, h) * dn
        for i in range(2):
            for j in range(2):
                # (c tau^-1/2 I) * S_n  +  (E J) * (d_n tau^(n/2-1) I)  +  (E J) * S_n
                val = c * _conv_alg(-0.5, sn[i, j], h) + _conv_smooth(e, sn[1 - i, j], h)
                if i != j:
                    val = val + qe
                nxt[i, j] = val
        d.append(c * dn * beta_fn(0.5, n / 2.0))
        smooth.append(nxt)
    splines = [CubicSpline(tau, s, axis=2) for s in smooth]
    return tuple(d), tuple(splines)


def _gauss_lag_integral(t, a, weight_exp, fn):
    """int_0^t Gamma(t - r, a) r^weight_exp fn(r) dr for a != 0, or the (t-r)^-1/2 case a == 0."""
    if a == 0.0:
        val, _ = quad(lambda r: fn(r) / np.sqrt(2.0 * np.pi), 0.0, t, weight="alg",
                      wvar=(weight_exp, -0.5), **_QUAD)
        return val
    mid = 0.5 * t
    left, _ = quad(lambda r: gaussian(t - r, a) * fn(r), 0.0, mid, weight="alg",
                   wvar=(weight_exp, 0.0), **_QUAD)
    peak = t - a * a
    pts = [peak] if mid < peak < t else None
    right, _ = quad(lambda r: gaussian(t - r, a) * r ** weight_exp * fn(r), mid, t,
                    points=pts, **_QUAD)
    return left + right


def parametrix_terms(beta, t, x, ybar, n_terms=MAX_TERMS, n_grid=2000):
    """Gamma(t, x - ybar) followed by the n-th series contributions, n = 1..n_terms.

    ``ybar`` must be 0 or 1. The kernel is twice the sum of the returned list.
    """
    x = float(x)
    j = _node(ybar)
    out = [float(gaussian(t, x - float(ybar)))]
    if n_terms == 0:
        return out
    d, splines = _series(float(beta), float(t), int(n_terms), int(n_grid))
    one = lambda r: 1.0  # noqa: E731
    for n in range(1, n_terms + 1):
        a_exp = n / 2.0 - 1.0
        dist = abs(x - float(ybar))
        if dist == 0.0:
            sing = d[n - 1] * beta_fn(n / 2.0, 0.5) * t ** ((n - 1) / 2.0) / np.sqrt(2.0 * np.pi)
        else:
            sing = d[n - 1] * _gauss_lag_integral(t, dist, a_exp, one)
        smooth = 0.0
        sp = splines[n - 1]
        for z in (0, 1):
            fn = lambda r, z=z: sp(r)[z, j]  # noqa: E731
            smooth += _gauss_lag_integral(t, abs(x - z), 0.0, fn)
        out.append(sing + smooth)
    return out


def _node(ybar):
    y = float(np.ravel(ybar)[0]) if np.ndim(ybar) else float(ybar)
    if y not in (0.0, 1.0):
        raise ConfigurationError("ybar must be a boundary point of the interval")
    return int(y)


def kernel_parametrix(domain, t, x, ybar, n_terms=MAX_TERMS, beta=None, n_grid=2000):
    """Robin kernel from the first ``n_terms`` parametrix corrections.

    ``beta`` overrides the domain coefficient (beta = 0 gives the Neumann
    kernel, used for the method-of-images check).
    """
    if domain.kind != INTERVAL:
        raise CapabilityError("the parametrix series is implemented on the interval only")
    t = float(t)
    if not 0.0 < t <= T_MAX:
        raise ConfigurationError(f"parametrix needs t in (0, {T_MAX}], got {t}")
    if int(n_terms) != n_terms or not 0 <= n_terms <= MAX_TERMS:
        raise ConfigurationError(f"n_terms must be an integer in [0, {MAX_TERMS}]")
    b = domain.beta if beta is None else float(beta)
    if b < 0.0:
        raise ConfigurationError("beta must be nonnegative")
    xv = float(np.ravel(x)[0]) if np.ndim(x) else float(x)
    terms = parametrix_terms(b, t, xv, ybar, int(n_terms), n_grid)
    total = sum(terms)
    for n in range(2, len(terms) - 1):
        if abs(terms[n + 1]) > abs(terms[n]) and abs(terms[n + 1]) > 1e-14 * abs(total):
            raise ConvergenceError(
                f"parametrix term {n + 1} exceeds term {n} at t={t}; use a smaller t",
                history=[abs(v) for v in terms[1:]])
    return 2.0 * total
