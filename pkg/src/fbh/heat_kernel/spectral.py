"""Spectral and image representations of the Robin heat kernel.

Diffusion is 1/2 Laplacian, so the free kernel is
Gamma(t, x) = (2 pi t)^(-d/2) exp(-|x|^2 / (2 t)).
"""

import numpy as np
from scipy.special import erfcx

from ..domain import INTERVAL
from ..errors import ConfigurationError, NumericalError
from .eigen import interval_modes, modes_needed

TAIL_TOL = 1e-12


def gaussian(t, r, d=1):
    """Free kernel Gamma at time t and displacement norm r."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return (2.0 * np.pi * t) ** (-0.5 * d) * np.exp(-(r ** 2) / (2.0 * t))


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0.0):
        raise ConfigurationError("kernel time must be positive")
    return t


def _modes_for(modes, t_min, tail_tol):
    n = modes_needed(t_min, tail_tol)
    if modes is None:
        return None, n
    if modes.count < n:
        raise NumericalError(
            f"eigensystem has {modes.count} modes, {n} needed for t={t_min:g} at tail tolerance {tail_tol:g}")
    return modes, n


def interval_kernel(beta, t, x, y, modes=None, tail_tol=TAIL_TOL):
    """Robin kernel of the unit interval; t, x, y broadcast together."""
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t, x, y = np.broadcast_arrays(t, x, y)
    modes, n = _modes_for(modes, float(t.min()), tail_tol)
    if modes is None:
        modes = interval_modes(beta, n)
    lam = modes.eigenvalues[:n].reshape((-1,) + (1,) * t.ndim)
    return np.sum(np.exp(-lam * t[None]) * modes(x)[:n] * modes(y)[:n], axis=0)


def kernel_spectral(eigensystem, t, x, ybar, tail_tol=TAIL_TOL):
    """Truncated eigen-expansion sum_k exp(-lambda_k t) phi_k(x) phi_k(ybar).

    On the rectangle the kernel factorizes into two interval kernels, which
    is the tensor-product expansion summed in factored form. Array inputs
    are broadcast; for the rectangle the last axis of x, ybar holds the
    coordinates.
    """
    modes = eigensystem.modes
    if eigensystem.kind == INTERVAL:
        x = np.asarray(x, dtype=float)
        y = np.asarray(ybar, dtype=float)
        if x.ndim and x.shape[-1] == 1:
            x = x[..., 0]
        if y.ndim and y.shape[-1] == 1:
            y = y[..., 0]
        out = interval_kernel(modes.beta, t, x, y, modes, tail_tol)
    else:
        x = np.asarray(x, dtype=float)
        y = np.asarray(ybar, dtype=float)
        # per-factor tail tolerance keeps the product tail below tail_tol
        tol = tail_tol / 4.0
        out = (interval_kernel(modes.beta, t, x[..., 0], y[..., 0], modes, tol)
               * interval_kernel(modes.beta, t, x[..., 1], y[..., 1], modes, tol))
    return float(out) if np.ndim(out) == 0 else out


def resolvent(beta, x, y):
    """int_0^inf of the interval Robin kernel: the Green function of 1/2 d^2/dx^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    return 2.0 * (1.0 + beta * lo) * (1.0 + beta * (1.0 - hi)) / (beta * (2.0 + beta))


def interval_time_integral(beta, a, b, x, y, tail_tol=1e-14):
    """int_a^b p_N(tau, x, y) dtau on the interval, 0 <= a < b (exact up to truncation)."""
    if not 0.0 <= a < b:
        raise ConfigurationError("need 0 <= a < b")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if a == 0.0:
        # R_0 minus the slowly decaying tail from b on
        n = modes_needed(b, tail_tol)
        modes = interval_modes(beta, n)
        lam = modes.eigenvalues.reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
        tail = np.sum(np.exp(-lam * b) / lam * modes(x) * modes(y), axis=0)
        return resolvent(beta, x, y) - tail
    n = modes_needed(a, tail_tol)
    modes = interval_modes(beta, n)
    lam = modes.eigenvalues.reshape((-1,) + (1,) * np.broadcast(x, y).ndim)
    w = (np.exp(-lam * a) - np.exp(-lam * b)) / lam
    return np.sum(w * modes(x) * modes(y), axis=0)


def half_line_kernel(beta, t, x, y):
    """Robin kernel of the half line [0, inf) with condition -u'(0) + beta u(0) = 0."""
    t = np.asarray(t, dtype=float)
    s = x + y
    g = gaussian(t, x - y) + gaussian(t, s)
    if beta == 0.0:
        return g
    # beta * int_0^inf exp(-beta w) Gamma(t, s + w) dw in closed form
    corr = 0.5 * beta * np.exp(-(s ** 2) / (2.0 * t)) * erfcx((s + beta * t) / np.sqrt(2.0 * t))
    return g - 2.0 * corr


def interval_images(beta, t, x, y):
    """Short-time interval kernel from one reflection at each endpoint.

    Accurate while exp(-1/(2t)) is negligible, i.e. t below about 0.02.
    """
    return (half_line_kernel(beta, t, x, y) - gaussian(t, x - y)
            + half_line_kernel(beta, t, 1.0 - x, 1.0 - y))


def neumann_images(t, x, y, n_images=None):
    """Pure Neumann kernel of the unit interval by the method of images."""
    t = float(t)
    if n_images is None:
        n_images = int(np.ceil(np.sqrt(80.0 * t))) + 2
    k = np.arange(-n_images, n_images + 1)
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    return np.sum(gaussian(t, x - y - 2 * k) + gaussian(t, x + y - 2 * k), axis=-1)


SWITCH = 0.01  # below this lag one reflection per endpoint is exact to ~1e-20


def robin_kernel_1d(beta, t, x, y, tail_tol=1e-14):
    """Interval kernel for any lag: image formula below SWITCH, eigen-sum above."""
    t = _check_time(t)
    t, x, y = np.broadcast_arrays(t, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.empty(t.shape)
    short = t < SWITCH
    if np.any(short):
        out[short] = interval_images(beta, t[short], x[short], y[short])
    if np.any(~short):
        out[~short] = interval_kernel(beta, t[~short], x[~short], y[~short], tail_tol=tail_tol)
    return out
