"""Robin eigenpairs of -1/2 d^2/dx^2 on the unit interval and their tensor products.

Convention: the Robin condition is written with the outward normal n,
d_n phi + beta phi = 0, i.e. -phi'(0) + beta phi(0) = 0 and
phi'(1) + beta phi(1) = 0. For beta > 0 the problem is dissipative and all
eigenvalues are positive. Eigenfunctions are A cos(k x - theta) with
theta = arctan(beta / k) and k solving k = (m - 1) pi + 2 arctan(beta / k).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from ..domain import INTERVAL, RECTANGLE
from ..errors import ConfigurationError, NumericalError


def _phase(beta, k):
    return np.pi / 2 if k == 0.0 else np.arctan(beta / k)


@lru_cache(maxsize=64)
def _interval_roots(beta, n_modes):
    beta = float(beta)
    ks = np.empty(n_modes)
    for m in range(1, n_modes + 1):
        lo, hi = (m - 1) * np.pi, m * np.pi
        if beta == 0.0:
            ks[m - 1] = lo
            continue

        def f(k, m=m):
            return k - 2.0 * _phase(beta, k) - (m - 1) * np.pi

        if not (f(lo) < 0.0 < f(hi)):
            raise NumericalError(f"Robin eigenvalue bracket failed for mode {m} (beta={beta})")
        ks[m - 1] = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return ks


@dataclass(frozen=True)
class IntervalModes:
    """Arrays describing the first ``count`` Robin modes of the unit interval."""

    beta: float
    k: np.ndarray
    theta: np.ndarray
    amp: np.ndarray

    @property
    def count(self):
        return len(self.k)

    @property
    def eigenvalues(self):
        return 0.5 * self.k ** 2

    def __call__(self, x):
        """Mode values, shape (count,) + shape(x)."""
        x = np.asarray(x, dtype=float)
        arg = self.k.reshape((-1,) + (1,) * x.ndim) * x[None, ...]
        th = self.theta.reshape((-1,) + (1,) * x.ndim)
        a = self.amp.reshape((-1,) + (1,) * x.ndim)
        return a * np.cos(arg - th)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        sh = (-1,) + (1,) * x.ndim
        return -(self.amp * self.k).reshape(sh) * np.sin(
            self.k.reshape(sh) * x[None, ...] - self.theta.reshape(sh))

    def antiderivative(self, x):
        """Integral of each mode from 0 to x."""
        x = np.asarray(x, dtype=float)
        sh = (-1,) + (1,) * x.ndim
        k = self.k.reshape(sh)
        th = self.theta.reshape(sh)
        a = self.amp.reshape(sh)
        safe = np.where(k == 0.0, 1.0, k)
        val = a * (np.sin(k * x[None, ...] - th) + np.sin(th)) / safe
        return np.where(k == 0.0, a * x[None, ...], val)


def interval_modes(beta, n_modes):
    """First ``n_modes`` Robin modes; beta = 0 gives the Neumann cosines."""
    if beta < 0.0:
        raise ConfigurationError("beta must be nonnegative")
    if n_modes < 1:
        raise ConfigurationError("n_modes must be >= 1")
    k = _interval_roots(float(beta), int(n_modes))
    theta = np.array([_phase(beta, kk) for kk in k])
    # int_0^1 cos^2(kx - theta) dx = 1/2 + sin(2 theta) / (2k) on the roots
    safe = np.where(k == 0.0, 1.0, k)
    norm2 = np.where(k == 0.0, np.cos(theta) ** 2, 0.5 + np.sin(2 * theta) / (2 * safe))
    if beta == 0.0:
        theta = np.zeros_like(k)
        norm2 = np.where(k == 0.0, 1.0, 0.5)
    return IntervalModes(float(beta), k, theta, 1.0 / np.sqrt(norm2))


def modes_needed(t, tail_tol=1e-12):
    """Mode count after which exp(-lambda_k t) * max|phi_k|^2 < tail_tol (max|phi|^2 <= 2)."""
    t = float(t)
    if t <= 0.0:
        raise ConfigurationError("t must be positive")
    k = np.sqrt(2.0 * np.log(2.0 / tail_tol) / t)
    return int(np.ceil(k / np.pi)) + 2


@dataclass(frozen=True)
class EigenSystem:
    """Robin eigenpairs for a domain.

    For the rectangle ``pairs`` indexes the two interval modes of each
    tensor-product eigenfunction, sorted by eigenvalue.
    """

    kind: str
    modes: IntervalModes
    eigenvalues: np.ndarray
    pairs: np.ndarray = None

    @property
    def count(self):
        return len(self.eigenvalues)

    def eigenfunction(self, i):
        if self.kind == INTERVAL:
            return lambda x: self.modes(np.asarray(x, dtype=float))[i]
        m, n = self.pairs[i]

        def phi(p):
            p = np.asarray(p, dtype=float)
            return self.modes(p[..., 0])[m] * self.modes(p[..., 1])[n]
        return phi

    def __call__(self, x):
        """All eigenfunctions at x: shape (count,) + point shape."""
        if self.kind == INTERVAL:
            return self.modes(np.asarray(x, dtype=float))
        p = np.asarray(x, dtype=float)
        a = self.modes(p[..., 0])
        b = self.modes(p[..., 1])
        return a[self.pairs[:, 0]] * b[self.pairs[:, 1]]


def robin_eigensystem(domain, n_modes):
    """First ``n_modes`` Robin eigenpairs of -1/2 Laplacian on the domain."""
    n_modes = int(n_modes)
    if n_modes < 1:
        raise ConfigurationError("n_modes must be >= 1")
    if domain.kind == INTERVAL:
        modes = interval_modes(domain.beta, n_modes)
        return EigenSystem(INTERVAL, modes, modes.eigenvalues)
    if domain.kind != RECTANGLE:
        raise ConfigurationError(f"unsupported domain {domain.kind}")
    side = int(np.ceil(np.sqrt(n_modes))) + 1
    modes = interval_modes(domain.beta, side)
    while True:
        lam = modes.eigenvalues
        grid = lam[:, None] + lam[None, :]
        order = np.argsort(grid, axis=None, kind="stable")[:n_modes]
        pairs = np.column_stack(np.unravel_index(order, grid.shape))
        # every selected pair must lie strictly inside the computed block
        if grid.flat[order[-1]] <= lam[-1] + lam[0]:
            break
        side *= 2
        modes = interval_modes(domain.beta, side)
    return EigenSystem(RECTANGLE, modes, grid.flat[order], pairs)
