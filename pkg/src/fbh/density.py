"""Monte Carlo law of u(t, x) and comparison with the Gaussian law of the linear case."""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, ConvergenceError, NumericalError
from .nonlinear_solver import interior_solution, picard_boundary, sample_fields
from .parallel import map_blocks

GRID_POINTS = 201
GRID_HALF_WIDTH = 5.0  # in sample standard deviations
MAX_FAILURE_RATE = 0.01


@dataclass
class Ensemble:
    samples: np.ndarray
    replicas: list
    failed: list = field(default_factory=list)

    @property
    def n_samples(self):
        return len(self.samples)

    def to_json(self):
        return {"n_samples": self.n_samples, "n_failed": len(self.failed), "failed": self.failed}


@dataclass
class _EnsembleJob:
    problem: object
    seed: int
    i: int
    x: int
    tol: float
    max_iter: int

    def _values(self, block):
        pr = self.problem
        _, z = sample_fields(pr, self.seed, block)
        u, _ = picard_boundary(pr, z[..., : pr.n_boundary], self.tol, self.max_iter)
        if self.x < pr.n_boundary:
            return u[:, self.i, self.x]
        x = pr.slab.targets[self.x]
        return interior_solution(pr, u, z[..., self.x], x)[:, self.i]

    def __call__(self, block):
        try:
            return self._values(block), []
        except ConvergenceError:
            # isolate the replicas that fail
            vals, bad = [], []
            for r in block:
                try:
                    vals.append(self._values([r])[0])
                except ConvergenceError:
                    vals.append(np.nan)
                    bad.append(r)
            return np.array(vals), bad


def mc_ensemble(problem, n_samples, base_seed, i=None, x=0, tol=1e-10, max_iter=200,
                chunk=1000, jobs=1):
    """n_samples independent draws of u(t_i, x); draw r uses the master seed base_seed + r.

    x is a boundary node index or an interior point listed in the problem.
    Replicas whose Picard iteration fails are dropped and reported; more
    than 1% failures is an error.
    """
    if n_samples < 100:
        raise ConfigurationError("an ensemble needs at least 100 samples")
    i = problem.grid.n_steps if i is None else int(i)
    xi = int(x) if np.ndim(x) == 0 and isinstance(x, (int, np.integer)) \
        else problem.slab.target_index(x)
    job = _EnsembleJob(problem, int(base_seed), i, xi, tol, max_iter)
    replicas = list(range(n_samples))
    parts = map_blocks(job, replicas, chunk, jobs)
    vals = np.concatenate([p[0] for p in parts])
    failed = sorted(r for p in parts for r in p[1])
    if len(failed) > MAX_FAILURE_RATE * n_samples:
        raise ConvergenceError(f"{len(failed)} of {n_samples} replicas failed to converge",
                               history=failed[:20])
    keep = np.isfinite(vals)
    return Ensemble(vals[keep], [r for r, k in zip(replicas, keep) if k], failed)


@dataclass(frozen=True)
class DensityEstimate:
    eval_grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    n_samples: int

    @property
    def mass(self):
        return float(np.trapezoid(self.values, self.eval_grid))

    def peak_scaled(self):
        """max density times bandwidth; stays bounded when there are no atoms."""
        return float(self.values.max() * self.bandwidth)

    def csv_rows(self):
        for v, f in zip(self.eval_grid, self.values):
            yield (repr(float(v)), repr(float(f)))


def _kernel(samples, bandwidth):
    samples = np.asarray(samples, dtype=float)
    if samples.size < 100:
        raise ConfigurationError("density estimation needs at least 100 samples")
    sd = samples.std(ddof=1)
    if not sd > 0.0:
        raise NumericalError("degenerate distribution: zero sample variance")
    n = samples.size
    h = 1.06 * sd * n ** (-0.2) if bandwidth is None else float(bandwidth)
    if not h > 0.0:
        raise ConfigurationError("bandwidth must be positive")
    return stats.gaussian_kde(samples, bw_method=h / sd), h


def kde(samples, bandwidth=None, grid_points=GRID_POINTS):
    """Gaussian kernel estimate on mean +- 5 sd; default bandwidth 1.06 sd n^(-1/5)."""
    kernel, h = _kernel(samples, bandwidth)
    samples = np.asarray(samples, dtype=float)
    m, sd = samples.mean(), samples.std(ddof=1)
    grid = np.linspace(m - GRID_HALF_WIDTH * sd, m + GRID_HALF_WIDTH * sd, grid_points)
    return DensityEstimate(grid, kernel(grid), h, samples.size)


def symmetry_gap(samples, estimate):
    """max |f(v) - f(-v)| over the evaluation grid."""
    kernel, _ = _kernel(samples, estimate.bandwidth)
    return float(np.max(np.abs(estimate.values - kernel(-estimate.eval_grid))))


def density_compare(estimate, samples, variance):
    """L1 distance to N(0, variance) on the grid and the KS test of the samples against it."""
    if not variance > 0.0:
        raise ConfigurationError("oracle variance must be positive")
    sd = float(np.sqrt(variance))
    pdf = stats.norm.pdf(estimate.eval_grid, scale=sd)
    l1 = float(np.trapezoid(np.abs(estimate.values - pdf), estimate.eval_grid))
    ks = stats.kstest(np.asarray(samples, dtype=float), stats.norm(scale=sd).cdf)
    return {"l1_error": l1, "ks_stat": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
            "oracle_variance": float(variance), "mass": estimate.mass}
