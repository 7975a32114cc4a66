"""Batch front-end: pamlab <subcommand> [--config FILE] [--seed N] [--threads N] [--out DIR] [--check].

Each run writes CSV tables, JSON reports, flat binary arrays with JSON
sidecars, a plot spec and a manifest into the output directory.  The
directory is --out, else $PAMLAB_OUT, else out/<subcommand>.  Artifacts are
staged and published only when the run succeeds.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Callable, Dict

import numpy as np

from . import io
from .errors import ConfigError, PamlabError

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_RUN = 3

COMMON = {"family": "TripleExp", "rho0": 1.0, "c": 0.0, "values": [0.0, 1.0], "probs": [0.5, 0.5],
          "d": 1, "seed": 0}

DEFAULTS: Dict[str, dict] = {
    "scale": {"t_grid": [1e2, 1e3, 1e4, 1e5, 1e6], "y": 2.0, "tol": 1e-10},
    "eigen": {"box_radius": 7, "R": 1.0, "t_grid": [1e3, 1e6, 1e9], "method": "auto", "tol": 1e-10},
    "evolve": {"box_radius": 5, "t_grid": [0.5, 1.0, 2.0], "method": "radau", "tol": 1e-10},
    "fk": {"box_radius": 3, "t_grid": [0.5, 1.0, 2.0], "N": 100000},
    "chi": {"rho": None, "L": 8.0, "h": 0.05, "eps": [], "R": 4.0, "starts": 8, "logsob": 0,
            "gtol": 1e-6, "max_iter": 4000},
    "ldp": {"R": 1.0, "f_breaks": [-1.0, 1.0], "f_values": [1.0], "t_grid": [1e3, 1e4, 1e5, 1e6]},
    "confine": {"rho": None, "R": 0.5, "t_grid": [20.0, 50.0, 120.0], "eps_grid": [0.0, 0.1, 0.3, 0.5],
                "N": 2000, "h": 0.05, "M": None, "tilt": "default", "records": True},
    "moments": {"rho": None, "R": 1.0, "t_grid": [1e3, 1e5], "K": [1.0, 2.0], "N": 2000, "M": None,
                "p": 1.0, "q": 2.0, "box_radius": 3, "im_t": [1.0, 4.0], "im_N": 2000},
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def resolve_config(sub, raw):
    """Merge a flat JSON document over the defaults; unknown keys are rejected."""
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[sub])
    unknown = sorted(set(raw) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config keys for {sub}: {', '.join(unknown)}")
    for k, v in raw.items():
        default = cfg[k]
        if isinstance(default, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{k} must be true or false")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{k} must be a number")
            if isinstance(default, int) and not isinstance(default, bool) and k != "c":
                if float(v) != int(v):
                    raise ConfigError(f"{k} must be an integer")
                v = int(v)
        elif isinstance(default, list) and not isinstance(v, list):
            if k in ("K",) and isinstance(v, (int, float)):
                v = [v]
            else:
                raise ConfigError(f"{k} must be a list")
        cfg[k] = v
    if cfg["d"] < 1:
        raise ConfigError("d must be at least 1")
    return cfg


def _dist(cfg):
    from .potential import PotentialDistribution

    try:
        return PotentialDistribution.from_config({k: cfg[k] for k in ("family", "rho0", "c", "values", "probs")})
    except PamlabError as exc:
        raise ConfigError(str(exc)) from exc


def _rho(cfg, dist):
    r = cfg.get("rho")
    r = dist.rho if r is None else float(r)
    if not r > 0:
        raise ConfigError("rho must be positive (set 'rho' for degenerate families)")
    return r


# ---------------------------------------------------------------------------
# subcommands; each returns a list of plot specs
# ---------------------------------------------------------------------------

def run_scale(cfg, out, threads):
    from .potential import ScaleTable, hk_ratio

    dist = _dist(cfg)
    tab = ScaleTable(dist, cfg["tol"])
    d = cfg["d"]
    rows, hk = [], []
    for t in cfg["t_grid"]:
        b = tab.beta(t, d)
        rows.append([t, tab.H(t), tab.kappa(t), b, tab.alpha(t, d), tab.alpha_residual(t, d)])
        if dist.family != "Constant":
            diff, target = hk_ratio(tab, t, cfg["y"], dist.rho)
            hk.append([t, cfg["y"], diff, target, diff / target if target else math.nan])
    io.write_csv(out.path("scale.csv"), ["t", "H", "kappa", "beta", "alpha", "alpha_residual"], rows)
    io.write_csv(out.path("hk.csv"), ["t", "y", "difference", "target", "ratio"], hk)
    return [{"data": "scale.csv", "x": "t", "y": ["alpha"], "log_x": True, "log_y": False, "kind": "line"},
            {"data": "hk.csv", "x": "t", "y": ["ratio"], "log_x": True, "log_y": False, "kind": "line"}]


def run_eigen(cfg, out, threads):
    from .potential import BoxSpec, ScaleTable, sample_field
    from .spectral import principal_eigen_discrete, rescaled_eigen

    dist = _dist(cfg)
    d = cfg["d"]
    f = sample_field(dist, BoxSpec(d, cfg["box_radius"]), cfg["seed"], threads)
    res = principal_eigen_discrete(f, cfg["tol"], cfg["method"])
    io.write_csv(out.path("eigen.csv"), ["box_radius", "n_sites", "value", "residual", "method"],
                 [[cfg["box_radius"], f.box.n_sites, res.value, res.residual, res.method]])
    io.write_array(out.path("eigenvector.f64"), res.vector.reshape(f.box.shape),
                   {"box_radius": cfg["box_radius"], "d": d, "order": "row-major sites"})
    tab = ScaleTable(dist)
    R = cfg["R"]
    zero = lambda x: np.zeros(np.asarray(x).shape[:-1])
    rows = []
    for t in cfg["t_grid"]:
        a = tab.alpha(t, d)
        val = rescaled_eigen(zero, R, t, tab, cfg["tol"], cfg["method"], d=d)
        r_eff = (math.floor(R * a) + 1) / a
        rows.append([t, a, val, -d * math.pi ** 2 / (4 * R * R), -d * math.pi ** 2 / (4 * r_eff * r_eff)])
    io.write_csv(out.path("rescaled.csv"), ["t", "alpha", "value", "limit", "limit_effective_radius"], rows)
    return [{"data": "rescaled.csv", "x": "t", "y": ["value", "limit"], "log_x": True, "log_y": False,
             "kind": "line"}]


def run_evolve(cfg, out, threads):
    from .evolution import evolve, log_total_mass, total_mass
    from .potential import BoxSpec, sample_field

    f = sample_field(_dist(cfg), BoxSpec(cfg["d"], cfg["box_radius"]), cfg["seed"], threads)
    rows = []
    st = None
    for t in cfg["t_grid"]:
        st = evolve(f, t, cfg["tol"], cfg["method"])
        rows.append([t, total_mass(st), log_total_mass(st), st.boundary_mass, st.method])
    io.write_csv(out.path("mass.csv"), ["t", "U", "log_U", "boundary_mass", "method"], rows)
    if st is not None:
        io.write_array(out.path("solution.f64"), st.values,
                       {"t": st.time, "log_scale": st.log_scale, "box_radius": cfg["box_radius"], "d": cfg["d"]})
    io.write_array(out.path("potential.f64"), f.values, {"box_radius": cfg["box_radius"], "d": cfg["d"],
                                                         "seed": cfg["seed"]})
    return [{"data": "mass.csv", "x": "t", "y": ["U"], "log_x": False, "log_y": True, "kind": "line"}]


def run_fk(cfg, out, threads):
    from .evolution import evolve, fk_estimate, total_mass
    from .potential import BoxSpec, sample_field

    f = sample_field(_dist(cfg), BoxSpec(cfg["d"], cfg["box_radius"]), cfg["seed"], threads)
    rows = []
    for i, t in enumerate(cfg["t_grid"]):
        est = fk_estimate(f, t, cfg["N"], cfg["seed"] + i, threads)
        ode = total_mass(evolve(f, t, method="eig" if f.box.n_sites <= 4096 else "radau"))
        rows.append([t, est.mean, est.stderr, cfg["N"], cfg["seed"] + i, ode, (est.mean - ode) / est.stderr])
    io.write_csv(out.path("fk.csv"), ["t", "mean", "stderr", "N", "walk_seed", "ode_mass", "z"], rows)
    return [{"data": "fk.csv", "x": "t", "y": ["mean", "ode_mass"], "err": "stderr", "log_x": False,
             "log_y": True, "kind": "points"}]


def run_chi(cfg, out, threads):
    from .grid import snap_half_width
    from .variational import (ChiOptions, ConstrainedOptions, J_value, chi_closed_form, log_sobolev_slack,
                              minimize_chi, minimize_chi_constrained)
    from .grid import GridFunction

    dist = _dist(cfg)
    rho = _rho(cfg, dist)
    d, h = cfg["d"], cfg["h"]
    L = snap_half_width(cfg["L"], h)
    chi = chi_closed_form(rho, d)
    res = minimize_chi(rho, d, (L, h), ChiOptions(gtol=cfg["gtol"], max_iter=cfg["max_iter"]))
    header = ["kind", "rho", "d", "L", "h", "eps", "R", "start", "value", "closed_form", "rel_err", "iterations",
              "converged", "feasibility_residual"]
    rows = [["chi", rho, d, L, h, 0.0, "", "", res.value, chi, res.value / chi - 1, res.iterations,
             res.converged, res.feasibility_residual]]
    io.write_array(out.path("minimizer.f64"), res.minimizer.values, {"L": L, "h": h, "d": d, "rho": rho})
    R = cfg["R"]
    base = None
    for eps in cfg["eps"]:
        if base is None:
            base, _ = minimize_chi_constrained(rho, d, 0.0, R, h, ConstrainedOptions(starts=cfg["starts"],
                                                                                      seed=cfg["seed"]))
            rows.append(["chi_R", rho, d, 3 * R, h, 0.0, R, "", base.value, chi, base.value / chi - 1,
                         base.iterations, base.converged, base.feasibility_residual])
        best, starts = minimize_chi_constrained(rho, d, float(eps), R, h,
                                                ConstrainedOptions(starts=cfg["starts"], seed=cfg["seed"]))
        for r in starts:
            rows.append(["chi_R_eps", rho, d, 3 * R, h, eps, R, r.info["start"], r.value, chi,
                         r.value / chi - 1, r.iterations, r.converged, r.feasibility_residual])
    io.write_csv(out.path("chi.csv"), header, rows)
    if cfg["logsob"]:
        rng = np.random.default_rng(cfg["seed"])
        slack = log_sobolev_slack(rho, d, h, L)
        lrows = []
        for i in range(int(cfg["logsob"])):
            g = random_unit_function(rng, d, L, h)
            J = J_value(g, rho)
            lrows.append([i, J, chi - slack, slack, J >= chi - slack])
        io.write_csv(out.path("logsob.csv"), ["sample", "J", "lower_bound", "slack", "ok"], lrows)
    return [{"data": "chi.csv", "x": "eps", "y": ["value"], "group": "kind", "log_x": False, "log_y": False,
             "kind": "points"}]


def random_unit_function(rng, d, L, h):
    """A random nonnegative unit-norm grid function: a few Gaussian bumps plus noise, zero on the boundary."""
    from .grid import GridFunction

    g = GridFunction.zeros(d, L, h)
    x = g.points()
    v = np.zeros(g.shape)
    for _ in range(int(rng.integers(1, 5))):
        c = rng.uniform(-L / 2, L / 2, size=d)
        w = rng.uniform(0.3, 3.0)
        v += rng.uniform(0.2, 1.0) * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * w * w))
    v *= 1.0 + 0.2 * rng.uniform(-1, 1, size=g.shape)
    v = np.abs(v)
    edge = np.zeros(g.shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    v[edge] = 0.0
    g = g.with_values(v)
    return g.with_values(v / math.sqrt(g.integrate(v * v)))


def run_ldp(cfg, out, threads):
    from .confinement import PiecewiseConstant, cumulant_rate_check
    from .potential import ScaleTable

    dist = _dist(cfg)
    tab = ScaleTable(dist)
    vals = np.asarray(cfg["f_values"], dtype=float)
    try:
        f = PiecewiseConstant(cfg["f_breaks"], vals.reshape((-1,) * 1) if cfg["d"] == 1 else vals)
    except PamlabError as exc:
        raise ConfigError(str(exc)) from exc
    rows = []
    for t in cfg["t_grid"]:
        finite, limit = cumulant_rate_check(dist, tab, f, t, R=cfg["R"])
        rows.append([t, finite, limit, finite / limit - 1 if limit else math.nan])
    io.write_csv(out.path("ldp.csv"), ["t", "finite", "limit", "rel_err"], rows)
    return [{"data": "ldp.csv", "x": "t", "y": ["finite", "limit"], "log_x": True, "log_y": False,
             "kind": "line"}]


def run_confine(cfg, out, threads):
    from .confinement import confinement_experiment, default_M
    from .potential import ScaleTable

    dist = _dist(cfg)
    rho = _rho(cfg, dist)
    tab = ScaleTable(dist)
    M = cfg["M"] if cfg["M"] is not None else default_M(rho, cfg["d"])
    tilt = {"default": "default", "none": None}.get(cfg["tilt"], "bad")
    if tilt == "bad":
        raise ConfigError("tilt must be 'default' or 'none'")
    rep = confinement_experiment(dist, tab, cfg["t_grid"], cfg["R"], M, cfg["eps_grid"], cfg["N"], tilt=tilt,
                                 seed=cfg["seed"], d=cfg["d"], h=cfg["h"], threads=threads, rho=rho)
    io.write_json(out.path("report.json"), rep.to_dict())
    rows = []
    for i, t in enumerate(rep.t_grid):
        for j, e in enumerate(rep.eps_grid):
            rows.append([t, e, rep.G[i][j], rep.G_stderr[i][j], rep.effective_sample_size[i]])
    io.write_csv(out.path("tail.csv"), ["t", "eps", "G", "stderr", "ess"], rows)
    if cfg["records"]:
        io.write_csv(out.path("replicas.csv"), ["t", "replica", "log_weight", "distance", "argmin_shift"],
                     [[r.t, r.replica, r.log_weight, r.distance, " ".join(io.fmt(x) for x in r.argmin_shift)]
                      for r in rep.records])
    return [{"data": "tail.csv", "x": "t", "y": ["G"], "group": "eps", "err": "stderr", "log_x": True,
             "log_y": False, "kind": "line"}]


def run_moments(cfg, out, threads):
    import warnings

    from .confinement import annealed_F_moment, intermittency_ratio
    from .potential import BoxSpec, ScaleTable

    dist = _dist(cfg)
    rho = _rho(cfg, dist)
    tab = ScaleTable(dist)
    rows = []
    for t in cfg["t_grid"]:
        for K in cfg["K"]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                m = annealed_F_moment(dist, tab, t, cfg["R"], float(K), cfg["N"], cfg["seed"], M=cfg["M"],
                                      d=cfg["d"], rho=rho)
            rows.append([t, K, m.rate, m.stderr, K * math.log(K / rho), m.ess, m.low_ess])
    io.write_csv(out.path("moments.csv"), ["t", "K", "rate", "stderr", "bound", "ess", "low_ess"], rows)
    ratios = intermittency_ratio(dist, cfg["p"], cfg["q"], list(cfg["im_t"]), BoxSpec(cfg["d"], cfg["box_radius"]),
                                 cfg["im_N"], cfg["seed"])
    io.write_csv(out.path("intermittency.csv"), ["t", "p", "q", "ratio"],
                 [[t, cfg["p"], cfg["q"], r] for t, r in zip(cfg["im_t"], ratios)])
    return [{"data": "moments.csv", "x": "t", "y": ["rate", "bound"], "group": "K", "err": "stderr",
             "log_x": True, "log_y": False, "kind": "points"},
            {"data": "intermittency.csv", "x": "t", "y": ["ratio"], "log_x": False, "log_y": False,
             "kind": "line"}]


RUNNERS: Dict[str, Callable] = {
    "scale": run_scale, "eigen": run_eigen, "evolve": run_evolve, "fk": run_fk, "chi": run_chi,
    "ldp": run_ldp, "confine": run_confine, "moments": run_moments,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON configuration file")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--check", action="store_true", help="run the oracle fixtures and exit")
    p = argparse.ArgumentParser(prog="pamlab", description="Numerics for the parabolic Anderson model.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sub.add_parser(name, parents=[common])
    return p


def _u64(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _positive(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _load(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def run(command, raw_config, out_dir, threads=1, seed=None):
    """Execute one subcommand and publish its artifacts; returns the output directory."""
    cfg = resolve_config(command, raw_config)
    if seed is not None:
        cfg["seed"] = seed
    with io.OutputDir(out_dir) as out:
        plots = RUNNERS[command](cfg, out, threads)
        io.write_json(out.path("plot.json"), {"plots": plots})
        digests = {p.name: io.file_digest(p) for p in sorted(out.tmp.iterdir())}
        manifest = {"subcommand": command, "config": cfg, "config_hash": io.config_hash(cfg),
                    "versions": io.versions(), "seeds": {"seed": cfg["seed"]}, "threads": threads,
                    "artifacts": digests}
        io.write_json(out.path("manifest.json"), manifest)
    return out_dir


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.check:
        from .checks import run_checks

        results = run_checks(args.command)
        for r in results:
            print(f"{'PASS' if r.ok else 'FAIL'} {args.command}: {r.name}: {r.detail}")
        return EXIT_OK if all(r.ok for r in results) else EXIT_CHECK
    out_dir = args.out or os.environ.get("PAMLAB_OUT") or os.path.join("out", args.command)
    try:
        run(args.command, _load(args.config), out_dir, args.threads, args.seed)
    except ConfigError as exc:
        print(f"pamlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PamlabError as exc:
        print(f"pamlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(out_dir)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
