"""Command-line driver: one experiment per invocation, configured by a JSON file.

Usage::

    frachelm <command> --config CONFIG.json [--seed N] [--threads N] [--output DIR]

Commands: forward-loss, forward-disp, observe, bae-calibrate, map, pcn,
hellinger-probe, consistency, selftest. Every run writes ``manifest.json``
(the fully resolved configuration, package versions and seeds) next to its
outputs. Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import platform
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger(__name__)

COMMANDS = ("forward-loss", "forward-disp", "observe", "bae-calibrate", "map", "pcn",
            "hellinger-probe", "consistency", "selftest")

DEFAULTS = {
    "geometry": {"R": 1.0, "r_omega": 0.3, "r_q": 0.6, "h": 0.05},
    "physics": {"k": 2.0, "omega_freq": None, "gamma_tilde": 0.25, "tau_tilde": 0.05,
                "theta": 0.0, "q": {"type": "constant", "value": 0.5}},
    "dtn": {"N_dtn": 32},
    "absorbing": {"radius": None},
    "prior": {"s": 0.5, "J_KL": 8},
    "obs": {"J": 8, "radius": None, "moll_radius": None},
    "noise": {"sigma": None, "relative": 0.01},
    "run": {"command": None, "seed": 0, "boundary": "dtn", "variant": "bae", "n_samples": 100,
            "n_steps": 2000, "beta": 0.2, "tol": 1e-6, "max_evals": 4000, "optimizer": "bfgs",
            "n_list": [1, 2, 4, 8], "deltas": [0.1, 0.05, 0.025], "truth": None,
            "truth_scale": 0.8, "disp_tol": 1e-10, "disp_max_iter": 200, "n_boot": 200,
            "output_dir": "frachelm_out"},
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text, key):
    line = _line_of(text, key)
    return f"line {line}: " if line else ""


def _merge(base: dict, over: dict, text: str, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        full = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{_where(text, key)}unknown key '{full}'")
        if isinstance(base[key], dict) and key != "q":
            if not isinstance(val, dict):
                raise ConfigError(f"{_where(text, key)}'{full}' must be an object")
            out[key] = _merge(base[key], val, text, full + ".")
        else:
            out[key] = val
    return out


def _num(cfg, text, section, key, positive=False, allow_none=False, integer=False):
    v = cfg[section][key]
    if v is None and allow_none:
        return None
    bad = isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)
    if not bad and integer and int(v) != v:
        bad = True
    if bad or (positive and v <= 0):
        kind = "a positive " if positive else "a "
        raise ConfigError(f"{_where(text, key)}'{section}.{key}' must be {kind}"
                          f"{'integer' if integer else 'number'}, got {v!r}")
    return int(v) if integer else float(v)


def load_config(path, command: str | None = None) -> dict:
    """Parse and validate a JSON configuration, filling defaults.

    Raises
    ------
    ConfigError
        With a line number where one can be attributed.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("line 1: top level must be a JSON object")
    cfg = _merge(DEFAULTS, raw, text)
    if command is not None:
        cfg["run"]["command"] = command
    cmd = cfg["run"]["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"{_where(text, 'command')}unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")

    g = {k: _num(cfg, text, "geometry", k, positive=True) for k in ("R", "r_omega", "r_q", "h")}
    if not g["r_omega"] < g["r_q"] < g["R"]:
        raise ConfigError(f"{_where(text, 'r_q')}radii must satisfy r_omega < r_q < R")
    if g["h"] > g["R"] / 2:
        raise ConfigError(f"{_where(text, 'h')}mesh size h must not exceed R/2")
    _num(cfg, text, "physics", "k", positive=True)
    _num(cfg, text, "physics", "omega_freq", positive=True, allow_none=True)
    gt = _num(cfg, text, "physics", "gamma_tilde")
    if not 0.0 <= gt <= 0.5:
        raise ConfigError(f"{_where(text, 'gamma_tilde')}'physics.gamma_tilde' must lie in [0, 0.5]")
    if _num(cfg, text, "physics", "tau_tilde") < 0:
        raise ConfigError(f"{_where(text, 'tau_tilde')}'physics.tau_tilde' must be nonnegative")
    _num(cfg, text, "physics", "theta")
    q = cfg["physics"]["q"]
    if not isinstance(q, dict) or q.get("type") not in ("constant", "kl"):
        raise ConfigError(f"{_where(text, 'q')}'physics.q' must be {{\"type\": \"constant\"|\"kl\", ...}}")
    if q["type"] == "constant":
        v = q.get("value")
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > -1:
            raise ConfigError(f"{_where(text, 'q')}constant contrast must be a number > -1")
    else:
        c = q.get("coords")
        if not isinstance(c, list) or not all(isinstance(t, (int, float)) for t in c):
            raise ConfigError(f"{_where(text, 'q')}KL contrast needs a numeric 'coords' list")
    if _num(cfg, text, "dtn", "N_dtn", positive=True, integer=True) < 8:
        raise ConfigError(f"{_where(text, 'N_dtn')}'dtn.N_dtn' must be at least 8")
    rad = _num(cfg, text, "absorbing", "radius", positive=True, allow_none=True)
    if rad is not None and rad < g["R"]:
        raise ConfigError(f"{_where(text, 'radius')}'absorbing.radius' must be at least R")
    _num(cfg, text, "prior", "s", positive=True)
    if _num(cfg, text, "prior", "J_KL", positive=True, integer=True) < 4:
        raise ConfigError(f"{_where(text, 'J_KL')}'prior.J_KL' must be at least 4")
    _num(cfg, text, "obs", "J", positive=True, integer=True)
    _num(cfg, text, "obs", "radius", positive=True, allow_none=True)
    _num(cfg, text, "obs", "moll_radius", positive=True, allow_none=True)
    _num(cfg, text, "noise", "sigma", positive=True, allow_none=True)
    _num(cfg, text, "noise", "relative", positive=True)
    run = cfg["run"]
    for key in ("tol", "beta", "disp_tol", "truth_scale"):
        _num(cfg, text, "run", key, positive=True)
    for key in ("n_samples", "n_steps", "max_evals", "disp_max_iter", "n_boot"):
        _num(cfg, text, "run", key, positive=True, integer=True)
    _num(cfg, text, "run", "seed", integer=True)
    if not run["beta"] <= 1:
        raise ConfigError(f"{_where(text, 'beta')}'run.beta' must lie in (0, 1]")
    if run["boundary"] not in ("dtn", "absorbing"):
        raise ConfigError(f"{_where(text, 'boundary')}'run.boundary' must be 'dtn' or 'absorbing'")
    if run["variant"] not in ("exact", "bae"):
        raise ConfigError(f"{_where(text, 'variant')}'run.variant' must be 'exact' or 'bae'")
    if run["optimizer"] not in ("gd", "bfgs"):
        raise ConfigError(f"{_where(text, 'optimizer')}'run.optimizer' must be 'gd' or 'bfgs'")
    for key in ("n_list", "deltas"):
        v = run[key]
        if not isinstance(v, list) or not v or not all(isinstance(t, (int, float)) and t > 0 for t in v):
            raise ConfigError(f"{_where(text, key)}'run.{key}' must be a nonempty list of positive numbers")
    if run["truth"] is not None and (not isinstance(run["truth"], list)
                                     or len(run["truth"]) != cfg["prior"]["J_KL"]):
        raise ConfigError(f"{_where(text, 'truth')}'run.truth' must list J_KL coordinates")
    return cfg


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------
class _Context:
    """Lazily built mesh, forms and forward maps for one configuration."""

    def __init__(self, cfg, threads: int):
        from .geometry import build_disk_mesh, mark_regions

        self.cfg, self.threads = cfg, threads
        g = cfg["geometry"]
        self.mesh = build_disk_mesh(g["R"], g["h"], (g["r_omega"], g["r_q"]))
        self.tags = mark_regions(self.mesh, g["r_omega"], g["r_q"])
        self._frac = {}
        self._setup = None

    @property
    def physics(self):
        return self.cfg["physics"]

    def frac(self, sigma):
        from .fraclap import assemble_fractional_form

        if sigma not in self._frac:
            self._frac[sigma] = assemble_fractional_form(self.mesh, self.tags, sigma)
        return self._frac[sigma]

    def loss_frac(self):
        p = self.physics
        return self.frac(p["gamma_tilde"] + 0.5) if p["tau_tilde"] > 0 else None

    def setup(self):
        from .inversion import ScatteringSetup, make_observation_set

        if self._setup is None:
            p, o = self.physics, self.cfg["obs"]
            obs = make_observation_set(self.mesh, self.tags, J_obs=o["J"], radius=o["radius"],
                                       moll_radius=o["moll_radius"])
            self._setup = ScatteringSetup(
                self.mesh, self.tags, p["k"], p["gamma_tilde"], p["tau_tilde"], self.loss_frac(),
                obs=obs, s=self.cfg["prior"]["s"], J_KL=self.cfg["prior"]["J_KL"],
                N_dtn=self.cfg["dtn"]["N_dtn"], absorbing_radius=self.cfg["absorbing"]["radius"],
                omega_freq=p["omega_freq"], theta=p["theta"])
        return self._setup

    def q_values(self):
        q = self.physics["q"]
        if q["type"] == "constant":
            return np.full(len(self.tags.suppq_triangles), float(q["value"]))
        return self.setup().contrast(np.asarray(q["coords"], float))

    def truth(self, seed):
        from .measures import sample

        run = self.cfg["run"]
        prior = self.setup().prior
        if run["truth"] is not None:
            return np.asarray(run["truth"], float)
        return prior.mean + run["truth_scale"] * (sample(prior, seed) - prior.mean)

    def noise_sigma(self, G_true):
        n = self.cfg["noise"]
        if n["sigma"] is not None:
            return float(n["sigma"])
        return float(n["relative"] * np.max(np.abs(G_true)))

    def bae(self, sigma, seed):
        from .inversion import bae_calibrate

        S = self.setup()
        m = S.obs.dim
        return bae_calibrate(S.prior, S.G, S.G_a, self.cfg["run"]["n_samples"], seed=seed,
                             C_eta=sigma ** 2 * np.eye(m), threads=self.threads, meta=S.describe())

    def posterior(self, seed):
        """Synthetic data from the truth and the resulting PosteriorSpec."""
        from .inversion import PosteriorSpec

        S = self.setup()
        rng = np.random.default_rng([seed, 1])
        x_true = self.truth(rng)
        G_true = S.G(x_true)
        sigma = self.noise_sigma(G_true)
        y = G_true + sigma * rng.standard_normal(len(G_true))
        if self.cfg["run"]["variant"] == "bae":
            bae = self.bae(sigma, [seed, 2])
            spec = PosteriorSpec(S.prior, S.G_a, y, "bae", bae=bae)
        else:
            spec = PosteriorSpec(S.prior, S.G, y, "exact", noise_cov=sigma ** 2 * np.eye(len(y)))
        return spec, x_true, sigma


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _field_rows(values, mesh):
    v = np.asarray(values, complex)
    return [(i, float(mesh.nodes[i, 0]), float(mesh.nodes[i, 1]), float(v[i].real), float(v[i].imag))
            for i in range(len(v))]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_forward_loss(ctx, out, seed):
    from .forward_loss import LossProblem, h1_norm, l2_norm

    p, run = ctx.physics, ctx.cfg["run"]
    kw = dict(omega_freq=p["omega_freq"], N_dtn=ctx.cfg["dtn"]["N_dtn"], theta=p["theta"])
    if run["boundary"] == "absorbing":
        kw.update(boundary="absorbing", absorbing_radius=ctx.cfg["absorbing"]["radius"])
    prob = LossProblem(ctx.mesh, ctx.tags, p["k"], p["gamma_tilde"], p["tau_tilde"], ctx.loss_frac(), **kw)
    u = prob.solve(ctx.q_values())
    _write_rows(out / "field.csv", ["node_index", "x", "y", "re", "im"], _field_rows(u.values, ctx.mesh))
    summary = {"h1_norm": h1_norm(u, ctx.mesh), "incident_l2_norm": l2_norm(prob.incident, ctx.mesh),
               "n_nodes": ctx.mesh.n_nodes, "boundary": run["boundary"]}
    _write_json(out / "summary.json", summary)
    return ["field.csv", "summary.json"]


def cmd_forward_disp(ctx, out, seed):
    from .forward_disp import (DispProblem, calibrate_contraction_constant, check_contraction_condition,
                               solve_disp_iterative, write_history_csv)
    from .geometry import ScattererConfig

    p, run = ctx.physics, ctx.cfg["run"]
    sc = ScattererConfig(q_values=ctx.q_values(), gamma_tilde=p["gamma_tilde"], tau_tilde=p["tau_tilde"],
                         k=p["k"], R=ctx.mesh.R, omega_freq=p["omega_freq"])
    frac_D = ctx.frac(p["gamma_tilde"]) if p["gamma_tilde"] > 0 else ctx.frac(0.0)
    prob = DispProblem(ctx.mesh, ctx.tags, sc, frac_D, N_dtn=ctx.cfg["dtn"]["N_dtn"], theta=p["theta"])
    C_cal, rho0 = calibrate_contraction_constant(prob)
    ok, margin = check_contraction_condition(p["k"], sc.q_values, C_cal)
    st = solve_disp_iterative(prob, tol=run["disp_tol"], max_iter=run["disp_max_iter"], C_cal=C_cal)
    write_history_csv(st.history, out / "history.csv")
    _write_rows(out / "field.csv", ["node_index", "x", "y", "re", "im"], _field_rows(st.g.values, ctx.mesh))
    _write_json(out / "summary.json", {"iterations": st.iterate_index, "final_update_norm": st.diff_norm,
                                       "C_cal": C_cal, "rho0": rho0, "contraction_ok": bool(ok),
                                       "margin": margin})
    return ["history.csv", "field.csv", "summary.json"]


def cmd_observe(ctx, out, seed):
    from .inversion import log_transform, observe

    S = ctx.setup()
    q = ctx.q_values()
    prob_G = S.problem(None)
    prob_Ga = S.problem(S.absorbing_radius)
    yG = observe(prob_G.solve(q), S.obs)
    yGa = observe(prob_Ga.solve(q), S.obs)
    _write_json(out / "observations.json", {"G": yG.tolist(), "G_a": yGa.tolist(),
                                            "receivers": S.obs.receiver_centers.tolist(),
                                            "moll_radius": S.obs.moll_radius,
                                            "q_tilde_max": float(np.max(np.abs(log_transform(q))))})
    return ["observations.json"]


def cmd_bae_calibrate(ctx, out, seed):
    S = ctx.setup()
    sigma = ctx.noise_sigma(S.G(S.prior.mean))
    bae = ctx.bae(sigma, seed)
    nm = bae.noise
    _write_json(out / "bae.json", {"n_calib": bae.n_calib, "eps_mean": nm.eps_mean.tolist(),
                                   "C_eps": nm.C_eps.tolist(), "C_eps_x": nm.C_eps_x.tolist(),
                                   "C_eta": nm.C_eta.tolist(), "meta": bae.meta})
    return ["bae.json"]


def cmd_map(ctx, out, seed):
    from .inversion import map_estimate, potential_phi

    run = ctx.cfg["run"]
    spec, x_true, sigma = ctx.posterior(seed)
    res = map_estimate(spec, spec.prior.mean, method=run["optimizer"], tol=run["tol"],
                       max_evals=run["max_evals"])
    _write_json(out / "map.json", {"x_map": res.x.tolist(), "x_true": x_true.tolist(),
                                   "objective": res.objective, "phi": potential_phi(res.x, spec.y, spec),
                                   "n_evals": res.n_evals, "grad_norm": res.grad_norm,
                                   "converged": res.converged, "noise_sigma": sigma})
    _write_rows(out / "map_trace.csv", ["step", "objective"], list(enumerate(res.trace)))
    return ["map.json", "map_trace.csv"]


def cmd_pcn(ctx, out, seed):
    from .inversion import pcn_sample

    run = ctx.cfg["run"]
    spec, x_true, sigma = ctx.posterior(seed)
    chain, acc = pcn_sample(spec, run["n_steps"], run["beta"], seed=[seed, 3])
    _write_rows(out / "chain.csv", ["step"] + [f"x{j + 1}" for j in range(chain.shape[1])],
                [[i] + [float(v) for v in row] for i, row in enumerate(chain)])
    _write_json(out / "pcn.json", {"acceptance_rate": acc, "mean": chain.mean(axis=0).tolist(),
                                   "x_true": x_true.tolist(), "noise_sigma": sigma})
    return ["chain.csv", "pcn.json"]


def cmd_hellinger_probe(ctx, out, seed):
    from .inversion import hellinger_lipschitz_probe

    run = ctx.cfg["run"]
    spec, _, _ = ctx.posterior(seed)
    rows = hellinger_lipschitz_probe(spec, spec.y, run["deltas"], run["n_samples"] * 10, seed=[seed, 4],
                                     n_boot=run["n_boot"], threads=ctx.threads)
    _write_rows(out / "hellinger.csv", ["delta", "distance", "se", "ratio"],
                [[r["delta"], r["distance"], r["se"], r["ratio"]] for r in rows])
    return ["hellinger.csv"]


def cmd_consistency(ctx, out, seed):
    from .inversion import consistency_experiment, write_consistency_csv

    run = ctx.cfg["run"]
    S = ctx.setup()
    x_true = ctx.truth(np.random.default_rng([seed, 1]))
    sigma = ctx.noise_sigma(S.G(x_true))
    bae = ctx.bae(sigma, [seed, 2])
    rows = consistency_experiment(S, bae, [int(n) for n in run["n_list"]], x_true, seed=seed,
                                  method=run["optimizer"], tol=run["tol"], max_evals=run["max_evals"])
    write_consistency_csv(rows, out / "consistency.csv")
    return ["consistency.csv"]


def selftest_checks():
    """Quick checks of elementary identities across all modules; returns (name, passed) pairs."""
    from .fem import collapsed_rule, triangle_rule
    from .forward_disp import check_contraction_condition
    from .geometry import build_disk_mesh, mark_regions
    from .inversion import inverse_log_transform, log_transform
    from .measures import (GaussianMeasure, cameron_martin_norm, hellinger_gaussian_1d, kakutani_check)
    from .specfun import bessel_j, frac_constant, gamma

    checks = []
    checks.append(("gamma(5) = 24", abs(gamma(5.0) - 24.0) < 1e-12))
    checks.append(("J_0 near zero is one", abs(bessel_j(0, 1e-8) - 1.0) < 1e-15))
    checks.append(("frac constant positive", frac_constant(2, 0.5) > 0))
    b, w = triangle_rule(4)
    b2, w2 = collapsed_rule(5)
    checks.append(("quadrature weights sum to one", abs(w.sum() - 1) < 1e-12 and abs(w2.sum() - 1) < 1e-12))
    mesh = build_disk_mesh(1.0, 0.25, (0.3, 0.6))
    checks.append(("mesh area close to pi", abs(np.abs(mesh.areas()).sum() - math.pi) < 0.05))
    tags = mark_regions(mesh, 0.3, 0.6)
    checks.append(("omega inside supp(q)", set(tags.omega_triangles) <= set(tags.suppq_triangles)))
    checks.append(("log transform of zero", float(np.max(np.abs(log_transform(np.zeros(3)))) == 0.0)))
    checks.append(("log transform roundtrip",
                   abs(float(inverse_log_transform(log_transform(np.array([0.7])))[0]) - 0.7) < 1e-14))
    pm = GaussianMeasure(np.zeros(4), np.array([1.0, 0.5, 0.25, 0.125]))
    checks.append(("Cameron-Martin norm of mean", cameron_martin_norm(pm, np.zeros(4)) == 0.0))
    checks.append(("Hellinger of identical Gaussians", hellinger_gaussian_1d(0.0, 1.0, 0.0, 1.0) == 0.0))
    k = np.arange(1, 201, dtype=float)
    checks.append(("Kakutani identical variances",
                   kakutani_check(k ** -2.0, k ** -2.0, 2.0 ** -k)[2] == "equivalent"))
    checks.append(("contraction margin formula", abs(check_contraction_condition(0.25, [1.0], 0.5)[1] - 0.5) < 1e-15))
    return checks


def cmd_selftest(ctx, out, seed):
    checks = selftest_checks()
    _write_rows(out / "selftest.csv", ["check", "passed"], [[n, bool(p)] for n, p in checks])
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if not all(ok for _, ok in checks):
        raise AssertionError("selftest failed")
    return ["selftest.csv"]


HANDLERS = {
    "forward-loss": cmd_forward_loss, "forward-disp": cmd_forward_disp, "observe": cmd_observe,
    "bae-calibrate": cmd_bae_calibrate, "map": cmd_map, "pcn": cmd_pcn,
    "hellinger-probe": cmd_hellinger_probe, "consistency": cmd_consistency, "selftest": cmd_selftest,
}


def _versions():
    import scipy

    return {"frachelm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(command: str, config_path, seed: int | None = None, threads: int | None = None,
        output: str | None = None) -> int:
    """Execute one command; returns the process exit code."""
    from .forward_disp import DivergenceError
    from .forward_loss import SolverError
    from .inversion import OptimizerStall
    from .measures import ModelError

    try:
        if config_path is None:
            if command != "selftest":
                raise ConfigError("--config is required for this command")
            cfg = copy.deepcopy(DEFAULTS)
            cfg["run"]["command"] = command
        else:
            cfg = load_config(config_path, command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    if output is not None:
        cfg["run"]["output_dir"] = output
    if threads is None:
        env = os.environ.get("FRACHELM_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError:
            print(f"config error: FRACHELM_THREADS={env!r} is not an integer", file=sys.stderr)
            return 2
    if threads < 1:
        print("config error: thread count must be positive", file=sys.stderr)
        return 2
    out = Path(cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    seed_ = cfg["run"]["seed"]
    try:
        ctx = _Context(cfg, threads) if command != "selftest" else None
        files = HANDLERS[command](ctx, out, seed_)
    except (SolverError, DivergenceError, ModelError, OptimizerStall, OverflowError,
            np.linalg.LinAlgError, AssertionError) as exc:
        print(f"numerical failure in {type(exc).__module__}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _write_json(out / "manifest.json", {"command": command, "config": cfg, "seed": seed_,
                                        "threads": threads, "versions": _versions(), "outputs": files})
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="frachelm", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--threads", type=int, help="worker cap (fallback: FRACHELM_THREADS)")
    parser.add_argument("--output", help="override run.output_dir")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config, args.seed, args.threads, args.output)


if __name__ == "__main__":
    sys.exit(main())
