"""``seqdec`` command-line experiment runner.

    seqdec init --config exp.ini
    seqdec run --config exp.ini --out results/
    seqdec tune | solve-exact | bound --config exp.ini --out results/
    seqdec plot-data --out results/

All output tables are UTF-8 CSV with a header row.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import os
import sys
import time
from typing import NamedTuple

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, scaffold
from .core import estimate, path_values, simulate_trajectory
from .exact import backward_dp, snap, value_iteration
from .policies.bandit import make_selector
from .policies.storage import BANDIT_POLICIES, PolicyParams, make_policy
from .processes import PriceDataUnderrun
from .search import GaussianBandit, bandit_values, path_bounds, tune, write_trace
from .storage.model import TRAJECTORY_COLUMNS, make_storage_model, write_trajectory
from .storage.tabular import SIGNALS, discretized_storage_mdp

RESULT_COLUMNS = ("experiment_id", "policy_id", "theta", "mean", "stderr", "paths", "bound_mean", "runtime_ms")
PLOT_KINDS = ("policy-comparison", "trajectory", "tuning-surface")


class ResultRow(NamedTuple):
    experiment_id: str
    policy_id: str
    theta: str
    mean: float
    stderr: float
    paths: int
    bound_mean: float | None = None
    runtime_ms: float | None = None


def theta_snapshot(theta: dict) -> str:
    return ";".join(f"{k}={float(v)!r}" for k, v in theta.items())


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# modes


class _Clock:
    def __init__(self, on: bool):
        self.on = on
        self.t0 = time.perf_counter() if on else 0.0

    def ms(self):
        return (time.perf_counter() - self.t0) * 1000.0 if self.on else None


def _bandit(cfg: ExperimentConfig) -> GaussianBandit:
    return GaussianBandit(np.array(cfg.bandit["mu"]), cfg.bandit["sigma"])


def _bandit_row(cfg, params: PolicyParams, clock) -> ResultRow:
    sel = make_selector(params.policy_id, params.theta.get("theta", 0.0))
    vals = bandit_values(_bandit(cfg), sel, cfg.bandit["N"], cfg.objective, cfg.paths, cfg.seed,
                         cfg.bandit.get("noise"))
    est = estimate(vals)
    return ResultRow(cfg.experiment_id, params.policy_id, theta_snapshot(params.theta), est.mean, est.stderr,
                     cfg.paths, None, clock.ms())


def simulate(cfg: ExperimentConfig, out: str, with_bound: bool = False) -> list[ResultRow]:
    rows = []
    model = None
    bounds = None
    for label, params in cfg.policies:
        clock = _Clock(cfg.record_runtime)
        if params.policy_id in BANDIT_POLICIES:
            rows.append(_bandit_row(cfg, params, clock))
            continue
        if model is None:
            scfg = cfg.storage_config()
            model = make_storage_model(scfg, cfg.variant)
        policy = make_policy(params, scfg, cfg.variant)
        vals = path_values(model, policy, cfg.paths, cfg.seed, cfg.get_aggregator())
        est = estimate(vals)
        bound_mean = None
        if with_bound:
            if cfg.variant == "active":
                raise ConfigError("model", "variant", "no posterior bound for the active variant")
            if bounds is None:
                bounds = path_bounds(model, cfg.paths, cfg.seed)
                _write_bounds(os.path.join(out, "bounds.csv"), bounds)
            bound_mean = float(bounds.mean())
        for i in range(min(cfg.trajectory_samples, cfg.paths)):
            traj = simulate_trajectory(model, policy, cfg.seed, i)
            write_trajectory(os.path.join(out, f"trajectory_{label}_{i}.csv"), traj)
        rows.append(ResultRow(cfg.experiment_id, params.policy_id, theta_snapshot(params.theta), est.mean,
                              est.stderr, cfg.paths, bound_mean, clock.ms()))
    return rows


def _write_bounds(path, bounds) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "bound"])
        for i, b in enumerate(bounds):
            w.writerow([i, repr(float(b))])


def run_tune(cfg: ExperimentConfig, out: str) -> list[ResultRow]:
    clock = _Clock(cfg.record_runtime)
    spec = cfg.tuning_spec()
    params = cfg.policies[0][1]
    if spec.policy_id in BANDIT_POLICIES:
        problem = _bandit(cfg)

        def evaluate(theta, seed=spec.train_seed, reps=spec.n_paths):
            sel = make_selector(spec.policy_id, theta.get("theta", params.theta.get("theta", 0.0)))
            return bandit_values(problem, sel, cfg.bandit["N"], cfg.objective, reps, seed, cfg.bandit.get("noise"))

        res = tune(spec, evaluate=evaluate, objective=cfg.objective)
        final = estimate(evaluate(res.theta, cfg.seed if spec.eval_seed is None else spec.eval_seed, cfg.paths))
    else:
        scfg = cfg.storage_config()
        model = make_storage_model(scfg, cfg.variant)
        res = tune(spec, model, objective=cfg.objective)
        tuned = PolicyParams(spec.policy_id, {**spec.fixed, **res.theta})
        final = estimate(path_values(model, make_policy(tuned, scfg, cfg.variant), cfg.paths, spec.eval_seed,
                                     cfg.get_aggregator()))
    write_trace(os.path.join(out, "trace.csv"), res, spec.names)
    theta = {**spec.fixed, **res.theta}
    for r in res.invalid():
        print(f"warning: candidate {r.index} {dict(zip(spec.names, r.theta))} invalid: {r.error}", file=sys.stderr)
    return [ResultRow(cfg.experiment_id, spec.policy_id, theta_snapshot(theta), final.mean, final.stderr,
                      cfg.paths, None, clock.ms())]


def solve_exact(cfg: ExperimentConfig, out: str) -> list[ResultRow]:
    clock = _Clock(cfg.record_runtime)
    e = {"n_R": 11, "price_levels": (20.0, 30.0, 40.0), "gamma": 0.95, "method": "value-iteration", "tol": 1e-8}
    e.update(cfg.exact)
    scfg = cfg.storage_config()
    mdp, grid, actions = discretized_storage_mdp(scfg, e["n_R"], e["price_levels"], e.get("probs"), e["gamma"],
                                                 e.get("horizon"))
    if e["method"] == "value-iteration":
        res = value_iteration(mdp, tol=e["tol"])
        V, pol = res.V[None, :], res.policy[None, :]
    else:
        res = backward_dp(mdp)
        V, pol = res.V[:-1], res.policy
    mdp.save(os.path.join(out, "mdp.txt"))
    with open(os.path.join(out, "values.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "state", "R", "p", "V"])
        for t in range(V.shape[0]):
            for i, (R, p) in enumerate(grid):
                w.writerow([t, i, repr(float(R)), repr(float(p)), repr(float(V[t, i]))])
    with open(os.path.join(out, "policy.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "state", "R", "p", "action", "signal"])
        for t in range(pol.shape[0]):
            for i, (R, p) in enumerate(grid):
                a = int(pol[t, i])
                w.writerow([t, i, repr(float(R)), repr(float(p)), a, SIGNALS[a]])
    s0 = snap((scfg.initial_R, scfg.initial_price), grid)
    return [ResultRow(cfg.experiment_id, f"exact-{e['method']}", theta_snapshot({}), float(V[0, s0]), 0.0, 1, None,
                      clock.ms())]


def run_experiment(cfg: ExperimentConfig, out: str, mode: str | None = None) -> list[ResultRow]:
    """Run one experiment mode and write ``results.csv`` plus its artifacts into ``out``."""
    mode = mode or cfg.mode
    os.makedirs(out, exist_ok=True)
    if mode == "simulate":
        rows = simulate(cfg, out, with_bound=cfg.bound)
    elif mode == "bound":
        rows = simulate(cfg, out, with_bound=True)
    elif mode == "tune":
        rows = run_tune(cfg, out)
    elif mode == "solve-exact":
        rows = solve_exact(cfg, out)
    else:
        raise ConfigError("experiment", "mode", f"unknown mode {mode!r}")
    write_results(os.path.join(out, "results.csv"), rows)
    return rows


# ---------------------------------------------------------------------------
# plot data


def emit_plot_data(out: str, kinds=PLOT_KINDS) -> list[str]:
    """Turn the tables in ``out`` into flat plot-ready CSV files; returns the files written."""
    res_path = os.path.join(out, "results.csv")
    if not os.path.exists(res_path):
        raise FileNotFoundError(f"no results in {out}")
    results = read_results(res_path)
    if not results:
        raise ValueError(f"{res_path} has no result rows")
    written = []

    def dump(name, header, rows):
        path = os.path.join(out, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    if "policy-comparison" in kinds:
        dump("plot_policy_comparison.csv", ["policy_id", "mean", "stderr", "bound", "paths"],
             [[r["policy_id"], r["mean"], r["stderr"], r["bound_mean"], r["paths"]] for r in results])
    if "trajectory" in kinds:
        files = sorted(glob.glob(os.path.join(out, "trajectory_*.csv")))
        rows = []
        keep = ["t", "R", "p", *TRAJECTORY_COLUMNS[5:10]]
        for f in files:
            label = os.path.basename(f)[len("trajectory_"):-4]
            with open(f, newline="", encoding="utf-8") as fh:
                for r in csv.DictReader(fh):
                    rows.append([label] + [r[k] for k in keep])
        if rows:
            dump("plot_trajectory.csv", ["sample", *keep], rows)
    if "tuning-surface" in kinds:
        trace = os.path.join(out, "trace.csv")
        if os.path.exists(trace):
            with open(trace, newline="", encoding="utf-8") as fh:
                rd = csv.reader(fh)
                header = next(rd)
                names = header[1:-3]
                rows = [r[1:-2] for r in rd if r[-3] != "nan"]
            dump("plot_tuning_surface.csv", [*names, "value"], rows)
    return written


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqdec", description="Sequential decision experiments on energy storage.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, hlp in (("init", "write a starter config"), ("run", "run the config's mode"),
                      ("tune", "tune the first policy"), ("solve-exact", "solve the discretized model exactly"),
                      ("bound", "simulate and compute posterior bounds"), ("plot-data", "write plot-ready tables")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", default="experiment.ini")
        p.add_argument("--out", default="results")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        if name == "plot-data":
            p.add_argument("--kind", choices=PLOT_KINDS, action="append")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "init":
            if os.path.exists(args.config):
                raise ConfigError("file", "path", f"{args.config} already exists")
            with open(args.config, "w", encoding="utf-8") as fh:
                fh.write(scaffold().to_ini())
            print(f"wrote {args.config}")
            return 0
        if args.command == "plot-data":
            for f in emit_plot_data(args.out, tuple(args.kind or PLOT_KINDS)):
                print(f"wrote {f}")
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("experiment", "seed", "must be >= 0")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("experiment", "paths", "must be >= 1")
            cfg = dataclasses.replace(cfg, paths=args.paths)
        mode = None if args.command == "run" else args.command
        rows = run_experiment(cfg, args.out, mode)
        for r in rows:
            print(f"{r.policy_id}: mean {r.mean:.6g} (stderr {r.stderr:.3g}, {r.paths} paths)"
                  + ("" if r.bound_mean is None else f", bound {r.bound_mean:.6g}"))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except PriceDataUnderrun as exc:
        print(f"error: [model] price_file: {exc}", file=sys.stderr)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
