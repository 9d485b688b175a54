"""Command line entry point: ``fbh <subcommand> [--config PATH] [--set k=v] [--jobs N] [--seed U64]``.

Every run writes its CSV/JSON outputs and a ``manifest.json`` under
output.dir (or $FBH_OUTPUT_DIR). Passing a manifest back as ``--config``
repeats the run bit for bit.
"""

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import platform
import sys

import numpy as np
import scipy
from scipy.integrate import quad

from . import __version__
from .config import load_config, parse_override
from .density import density_compare, kde, mc_ensemble, symmetry_gap
from .domain import INTERVAL, build_domain, s_mesh, time_grid
from .errors import ConfigurationError, FBHError, ProbeFailure
from .fbm import cell_cov_matrix, h_inner, sample_increments
from .heat_kernel import (build_kernel_table, fit_singular_exponent, interval_images,
                          interval_kernel, kernel_parametrix, neumann_images, robin_eigensystem,
                          singular_boundary_integral, split_gradient, verify_kernel_bounds)
from .heat_kernel.spectral import interval_time_integral, resolvent, robin_kernel_1d
from .malliavin import (U_TARGET, dg_bound_probe, du_solve, dz_field, h_norm, lower_bound_probe,
                        nondegeneracy_prob)
from .nonlinear_solver import (boundary_field, build_problem, interior_solution, nonlinearity,
                               picard_boundary, sample_fields)
from .stoch_conv import (EXACT, INCREMENT, alpha_coefficient, law_probe, regularity_probes,
                         simulate_z, variance_z, z_field)

SUBCOMMANDS = ("kernel", "convolve", "solve", "malliavin", "density", "verify-bounds", "selftest")


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

class Writer:
    """Single writer for one run; remembers the sha256 of everything it writes."""

    def __init__(self, directory):
        self.directory = directory
        self.hashes = {}
        os.makedirs(directory, exist_ok=True)

    def _put(self, name, text):
        data = text.encode("utf-8")
        with open(os.path.join(self.directory, name), "wb") as fh:
            fh.write(data)
        self.hashes[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self._put(name, buf.getvalue())

    def json(self, name, obj):
        self._put(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _fmt_point(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return repr(float(p[0])) if p.size == 1 else " ".join(repr(float(v)) for v in p)


def _manifest(cfg, subcommand, writer, jobs):
    return {"subcommand": subcommand, "config": cfg.values, "config_sha256": cfg.digest(),
            "seed": cfg["noise.seed"], "jobs": jobs,
            "versions": {"fbh": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "outputs": dict(sorted(writer.hashes.items()))}


# --------------------------------------------------------------------------
# building blocks from the config
# --------------------------------------------------------------------------

def _domain(cfg):
    return build_domain(cfg["domain.kind"], cfg["domain.beta"], cfg["domain.boundary_resolution"])


def _alpha(cfg):
    claims = None if cfg.auto("alpha.claims") else str(cfg["alpha.claims"]).split(",")
    theta = None if cfg.auto("alpha.theta") else float(cfg["alpha.theta"])
    return alpha_coefficient(cfg["alpha.kind"], claims, theta)


def _g(cfg):
    g = nonlinearity(cfg["g.kind"], cfg["g.L"], cfg["g.c"])
    smooth = str(cfg["g.smoothness"]).upper()
    if smooth not in ("G1", "G2"):
        raise ConfigurationError("g.smoothness must be G1 or G2", key="g.smoothness")
    return dataclasses.replace(g, smoothness=smooth)


def _interior(cfg, domain):
    x = cfg.floats("domain.interior")
    if len(x) != domain.dim:
        raise ConfigurationError(f"domain.interior needs {domain.dim} coordinate(s)",
                                 key="domain.interior")
    if not domain.is_interior(np.array(x)):
        raise ConfigurationError("domain.interior must lie inside the domain", key="domain.interior")
    return np.array(x)


def _problem(cfg):
    domain = _domain(cfg)
    grid = time_grid(cfg["time.horizon"], cfg["time.steps"])
    mesh = s_mesh(cfg["noise.s_cells"])
    x = _interior(cfg, domain)
    return build_problem(domain, grid, mesh, cfg["noise.hurst"], _alpha(cfg), _g(cfg), [x]), x


def _lam(cfg):
    return None if cfg.auto("solver.lambda") else float(cfg["solver.lambda"])


def _geomspace(cfg, key):
    v = cfg.floats(key)
    if len(v) != 3 or not 0.0 < v[0] < v[1] or v[2] < 2:
        raise ConfigurationError(f"{key} must be 'start,stop,count' with 0 < start < stop", key=key)
    return np.geomspace(v[0], v[1], int(v[2]))


def _node(cfg, problem):
    node = cfg["probe.node"]
    if not 0 <= node < problem.n_boundary:
        raise ConfigurationError("probe.node is not a boundary node index", key="probe.node")
    return node


def _require(reports, what):
    bad = [r["probe"] if "probe" in r else r.get("mode", r.get("name")) for r in reports
           if not r.get("satisfied", r.get("passed", True))]
    if bad:
        raise ProbeFailure(f"{what} failed: {', '.join(map(str, bad))}")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def run_kernel(cfg, out, jobs):
    domain = _domain(cfg)
    table = build_kernel_table(domain, _geomspace(cfg, "probe.kernel_times"),
                               method=cfg["probe.kernel_method"], n_terms=cfg["probe.kernel_terms"])
    out.csv("kernel.csv", ("method", "t", "x", "ybar", "value"),
            ((m, repr(t), x if isinstance(x, str) else repr(x), y if isinstance(y, str) else repr(y),
              repr(v)) for m, t, x, y, v in table.rows()))


def run_verify_bounds(cfg, out, jobs):
    domain = _domain(cfg)
    mu = cfg["solver.mu"]
    table = build_kernel_table(domain, _geomspace(cfg, "probe.kernel_times"))
    grad = verify_kernel_bounds(table, "gradient", mu)
    reports = [verify_kernel_bounds(table, "upper", mu), verify_kernel_bounds(table, "lower", mu),
               *split_gradient(grad)]
    out.json("bounds.json", [r.to_json() for r in reports])
    square = build_domain("rectangle", cfg["domain.beta"], cfg["domain.boundary_resolution"])
    fits = [fit_singular_exponent(square, a, b).to_json() for a, b in ((0.75, 0.75), (0.25, 0.25))]
    out.json("singular.json", fits)
    _require([r.to_json() for r in reports] + fits, "kernel bound checks")


def run_convolve(cfg, out, jobs):
    problem, _ = _problem(cfg)
    seed, h = cfg["noise.seed"], problem.hurst
    slab, am, mesh, grid = problem.slab, problem.alpha_mat, problem.mesh, problem.grid
    route = cfg["probe.route"]
    reps = range(cfg["noise.replicas"])
    rows = []
    if route == INCREMENT:
        z = z_field(slab, am, sample_increments(mesh, grid, h, seed, list(reps)))
        for r in reps:
            for i, t in enumerate(grid.nodes):
                for x, p in enumerate(slab.targets):
                    rows.append((r, repr(float(t)), _fmt_point(p), route, repr(float(z[r, i, x]))))
    elif route == EXACT:
        n = grid.n_steps
        for x, p in enumerate(slab.targets):
            vals = simulate_z(slab, am, mesh, h, seed, reps, n, x, EXACT)
            for r in reps:
                rows.append((r, repr(float(grid.nodes[n])), _fmt_point(p), route, repr(float(vals[r]))))
        rows.sort(key=lambda row: row[0])
    else:
        raise ConfigurationError("probe.route must be increment or exact", key="probe.route")
    out.csv("samples.csv", ("replica", "t", "x", "route", "value"), rows)
    n_samples = cfg["probe.samples"]
    reports = [law_probe(slab, am, mesh, h, seed, range(n_samples), grid.n_steps,
                         len(slab.targets) - 1).to_json()]
    if problem.domain.kind == INTERVAL:
        reports += [r.to_json() for r in regularity_probes(problem.domain, grid, mesh, problem.alpha,
                                                           h, seed, n_samples)]
    out.json("probes.json", reports)
    _require(reports, "convolution probes")


def run_solve(cfg, out, jobs):
    problem, x = _problem(cfg)
    seed = cfg["noise.seed"]
    reps = list(range(cfg["noise.replicas"]))
    _, z = sample_fields(problem, seed, reps)
    nb = problem.n_boundary
    u, report = picard_boundary(problem, z[..., :nb], cfg["solver.tol"], cfg["solver.max_iter"],
                                _lam(cfg), cfg["solver.p"])
    field = boundary_field(problem, u, seed, reps)
    out.csv("boundary.csv", ("time", "node", "value"), field.csv_rows(0))
    ui = interior_solution(problem, u, z[..., nb], x)
    rows = [(repr(float(t)), _fmt_point(x), repr(float(ui[a, i])), seed + r)
            for a, r in enumerate(reps) for i, t in enumerate(problem.grid.nodes)]
    out.csv("interior.csv", ("t", "x", "value", "seed"), rows)
    out.json("picard.json", report.to_json())


def run_malliavin(cfg, out, jobs):
    problem, _ = _problem(cfg)
    seed = cfg["noise.seed"]
    node = _node(cfg, problem)
    n = problem.grid.n_steps
    order = cfg["probe.order"]
    _, z = sample_fields(problem, seed, [0])
    u, _ = picard_boundary(problem, z[0, :, : problem.n_boundary], cfg["solver.tol"],
                           cfg["solver.max_iter"], _lam(cfg), cfg["solver.p"])
    anchor = None
    if order == 2:
        if cfg.auto("probe.anchor"):
            anchor = (n // 2, 0)
        else:
            anchor = tuple(int(v) for v in cfg.floats("probe.anchor"))
    field = du_solve(problem, u, order=order, target=U_TARGET, anchor=anchor)
    out.csv("field.csv", ("r", "sigma", "t", "xi", "value", "order"), field.csv_rows())
    deltas = _geomspace(cfg, "probe.deltas")
    reports = [lower_bound_probe(problem, n, node, deltas).to_json()]
    if problem.g.kind != "zero":
        reports.append(dg_bound_probe(problem, seed, range(cfg["probe.replicas"]), n, node, deltas,
                                      p=cfg["solver.p"], mu=cfg["solver.mu"],
                                      tol=cfg["solver.tol"], jobs=jobs).to_json())
    eps = None if cfg.auto("probe.epsilons") else cfg.floats("probe.epsilons")
    reports.append(nondegeneracy_prob(problem, seed, range(cfg["probe.samples"]), n, node, eps,
                                      tol=cfg["solver.tol"], jobs=jobs).to_json())
    out.json("probes.json", reports)
    _require(reports, "Malliavin probes")


def run_density(cfg, out, jobs):
    problem, x = _problem(cfg)
    ens = mc_ensemble(problem, cfg["probe.samples"], cfg["noise.seed"], x=x,
                      tol=cfg["solver.tol"], max_iter=cfg["solver.max_iter"], jobs=jobs)
    est = kde(ens.samples)
    out.csv("density.csv", ("value", "density"), est.csv_rows())
    xi = problem.slab.target_index(x)
    var = variance_z(problem.slab, problem.alpha_mat, problem.mesh, problem.hurst,
                     problem.grid.n_steps, xi)
    cmp = density_compare(est, ens.samples, var)
    linear = problem.g.kind == "zero"
    report = {"probe": "density", "comparison": cmp, "ensemble": ens.to_json(),
              "bandwidth": est.bandwidth, "peak_scaled": est.peak_scaled(),
              "gaussian_oracle_applies": linear,
              "satisfied": bool(abs(cmp["mass"] - 1.0) <= 0.02)}
    if linear:
        report["symmetry_gap"] = symmetry_gap(ens.samples, est)
        report["satisfied"] = bool(report["satisfied"] and cmp["l1_error"] < 0.05
                                   and cmp["ks_pvalue"] > 0.01)
    out.json("density.json", report)
    _require([report], "density comparison")


def _check(name, value, tol, passed=None):
    passed = bool(value <= tol) if passed is None else bool(passed)
    return {"name": name, "value": float(value), "tolerance": tol, "passed": passed}


def run_selftest(cfg, out, jobs):
    """Deterministic identities that need no Monte Carlo."""
    beta = cfg["domain.beta"]
    h = cfg["noise.hurst"]
    checks = []
    dom = build_domain("interval", beta)
    eig = robin_eigensystem(dom, 40)
    xs = np.linspace(0.0, 1.0, 4001)
    phi = eig.modes(xs)[:6]
    gram = np.trapezoid(phi[:, None] * phi[None], xs, axis=-1)
    checks.append(_check("eigenfunctions orthonormal", np.abs(gram - np.eye(6)).max(), 1e-6))
    y = np.linspace(0.0, 1.0, 7)
    diff = interval_images(beta, 0.005, y[:, None], y[None]) - interval_kernel(beta, 0.005, y[:, None],
                                                                               y[None])
    checks.append(_check("image formula equals eigen-sum at t = 0.005", np.abs(diff).max(), 1e-9))
    eig_sum = interval_kernel(beta, 0.05, 0.3, 0.0)
    par = kernel_parametrix(dom, 0.05, 0.3, 0.0)
    checks.append(_check("parametrix against eigen-sum at t = 0.05", abs(par - eig_sum) / eig_sum, 1e-3))
    neu = kernel_parametrix(dom, 0.05, 0.3, 0.0, beta=0.0)
    checks.append(_check("zero-beta parametrix against Neumann images",
                         abs(neu - neumann_images(0.05, 0.3, 0.0)), 1e-4))
    f = lambda v: 2.0 * v * robin_kernel_1d(beta, v * v, 0.3, 0.0)
    total = quad(f, 0.0, 1.0, epsabs=1e-13, limit=200)[0] \
        + interval_time_integral(beta, 1.0, 200.0, 0.3, 0.0)
    checks.append(_check("time integral of the kernel equals the resolvent",
                         abs(total - resolvent(beta, 0.3, 0.0)), 1e-9))
    grid = time_grid(1.0, 64)
    mesh = s_mesh(1)
    one = h_inner(lambda s, sig: np.ones_like(s), lambda s, sig: np.ones_like(s), mesh, grid, h)
    checks.append(_check("isometry of the indicator equals t^(2H)", abs(one - 1.0), 1e-3))
    sq = build_domain("rectangle", beta, 4)
    checks.append(_check("zero-exponent boundary integral equals the perimeter",
                         abs(singular_boundary_integral(sq, 0.0, 0.0, [0.5, 0.0], [0.7, 0.0]) - 4.0), 1e-10))
    problem, x = _problem(cfg)
    lin = dataclasses.replace(problem, g=nonlinearity("zero"))
    _, z = sample_fields(lin, cfg["noise.seed"], [0])
    nb = lin.n_boundary
    u, rep = picard_boundary(lin, z[..., :nb])
    checks.append(_check("zero nonlinearity returns Z", np.abs(u - z[..., :nb]).max(), 0.0))
    D = dz_field(lin, [0]).at(lin.grid.n_steps)
    hn = h_norm(D, lin.mesh, lin.grid, lin.hurst).value
    vz = variance_z(lin.slab, lin.alpha_mat, lin.mesh, lin.hurst, lin.grid.n_steps, 0)
    checks.append(_check("RKHS norm of DZ equals the variance of Z", abs(hn - vz) / vz, 1e-6))
    c = 0.7
    const = dataclasses.replace(problem, g=nonlinearity("constant", c=c))
    uc, _ = picard_boundary(const, z[0, :, :nb])
    if problem.domain.kind == INTERVAL:
        T = problem.grid.horizon
        f = lambda v: 2 * v * sum(interval_kernel(beta, v * v, 0.0, yb) for yb in (0.0, 1.0))
        oracle = c * quad(f, 0.0, np.sqrt(T), epsabs=1e-14, epsrel=1e-13, limit=400)[0]
        checks.append(_check("constant nonlinearity against quadrature",
                             abs(uc[-1, 0] - z[0, -1, 0] - oracle), 1e-8))
    C = cell_cov_matrix(h, grid.nodes)
    checks.append(_check("cell covariance sums to the variance of B(T)", abs(C.sum() - 1.0), 1e-12))
    out.json("selftest.json", checks)
    _require(checks, "self test")


HANDLERS = {"kernel": run_kernel, "convolve": run_convolve, "solve": run_solve,
            "malliavin": run_malliavin, "density": run_density,
            "verify-bounds": run_verify_bounds, "selftest": run_selftest}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _options(parser, suppress):
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", metavar="PATH", help="config file or a previous run's manifest.json",
                        **d)
    parser.add_argument("--set", metavar="KEY=VALUE", action="append",
                        help="override one config key (repeatable)", **d)
    parser.add_argument("--jobs", type=int, help="worker processes for replica sweeps",
                        **(d or {"default": 1}))
    parser.add_argument("--seed", type=int, help="master seed (overrides noise.seed)", **d)


def _parser():
    p = argparse.ArgumentParser(prog="fbh", description=__doc__.splitlines()[0])
    _options(p, suppress=False)
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {"kernel": "tabulate the Robin heat kernel",
             "convolve": "sample the stochastic convolution and run its probes",
             "solve": "solve the nonlinear boundary problem",
             "malliavin": "Malliavin derivative field and the density probes",
             "density": "Monte Carlo density of u(t, x) and the Gaussian comparison",
             "verify-bounds": "check the kernel estimates and the boundary integral exponent",
             "selftest": "deterministic identity checks"}
    for name in SUBCOMMANDS:
        # options are accepted after the subcommand too; suppressed defaults
        # keep them from overwriting values given before it
        _options(sub.add_parser(name, help=helps[name]), suppress=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be at least 1")
        overrides = [parse_override(s) for s in args.set or []]
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigurationError("--seed must be an unsigned 64-bit integer")
            overrides.append(("noise.seed", args.seed))
        cfg = load_config(args.config, overrides)
        directory = os.environ.get("FBH_OUTPUT_DIR") or cfg["output.dir"]
        writer = Writer(directory)
        try:
            HANDLERS[args.subcommand](cfg, writer, args.jobs)
        finally:
            if writer.hashes:
                manifest = _manifest(cfg, args.subcommand, writer, args.jobs)
                with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
                    json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
                    fh.write("\n")
    except FBHError as exc:
        print(json.dumps(exc.diagnostic(), default=_json_default), file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": 3}),
              file=sys.stderr)
        return 3
    print(json.dumps({"subcommand": args.subcommand, "output_dir": directory,
                      "outputs": sorted(writer.hashes)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
