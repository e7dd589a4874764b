"""Policy search: grid and SPSA tuning under common random numbers,
posterior (perfect-hindsight) bounds, and the Gaussian bandit test problem.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np

from .core import (DECISION, EXOGENOUS, SUM, TRAINING, Aggregator, Estimate, SequentialModel, estimate,
                   path_values, period_rng)
from .lp.lookahead import assemble_lookahead, solve_lookahead
from .policies.bandit import BanditBelief
from .policies.storage import PolicyParams, make_policy

# ---------------------------------------------------------------------------
# tuning


@dataclass
class TuningSpec:
    """What to tune and how.

    ``domain`` maps parameter name -> (low, high, step); step ``None`` means a
    continuous interval (SPSA only).  ``budget`` is the number of SPSA
    iterations, or an upper limit on lattice size for grid search.
    """

    policy_id: str
    domain: dict
    method: str = "grid"
    n_paths: int = 100
    train_seed: int = 0
    eval_seed: int = 1
    budget: int = 10_000
    fixed: dict = field(default_factory=dict)
    spsa_a: float = 0.5
    spsa_c: float = 0.5
    spsa_A: float = 10.0
    start: dict | None = None

    def __post_init__(self):
        if self.method not in ("grid", "spsa"):
            raise ValueError(f"unknown tuning method {self.method!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not self.domain:
            raise ValueError("empty tuning domain")
        for name, spec in self.domain.items():
            lo, hi, step = spec
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"domain of {name!r} is empty or not finite: [{lo}, {hi}]")
            if self.method == "grid" and (step is None or step <= 0):
                raise ValueError(f"grid search needs a positive step for {name!r}")

    @property
    def names(self) -> tuple:
        return tuple(self.domain)

    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, hi, step in self.domain.values():
            k = int(math.floor((hi - lo) / step + 1e-9))
            out.append(np.round(lo + step * np.arange(k + 1), 12))
        return out

    def lattice(self) -> list[tuple]:
        pts = list(itertools.product(*(a.tolist() for a in self.axes())))
        if len(pts) > self.budget:
            raise ValueError(f"lattice has {len(pts)} points, budget is {self.budget}")
        return pts


@dataclass
class TraceRow:
    index: int
    theta: tuple
    mean: float
    stderr: float
    paths: int
    error: str = ""

    @property
    def valid(self) -> bool:
        return not self.error


@dataclass
class TuneResult:
    theta: dict
    value: Estimate
    trace: list

    def invalid(self) -> list:
        return [r for r in self.trace if not r.valid]


def storage_evaluator(model: SequentialModel, spec: TuningSpec, aggregator: Aggregator = SUM,
                      seed: int | None = None) -> Callable[[dict], np.ndarray]:
    """theta -> per-path values of the policy on ``spec.n_paths`` fixed paths (common random numbers)."""
    cfg, variant = model.context["cfg"], model.context["variant"]
    seed = spec.train_seed if seed is None else seed

    def evaluate(theta: dict) -> np.ndarray:
        params = PolicyParams(spec.policy_id, {**spec.fixed, **theta})
        return path_values(model, make_policy(params, cfg, variant), spec.n_paths, seed, aggregator)

    return evaluate


def _project(theta: np.ndarray, spec: TuningSpec) -> np.ndarray:
    lo = np.array([d[0] for d in spec.domain.values()])
    hi = np.array([d[1] for d in spec.domain.values()])
    return np.minimum(np.maximum(theta, lo), hi)


def tune(spec: TuningSpec, model: SequentialModel | None = None, objective: str = "cumulative",
         evaluate: Callable[[dict], np.ndarray] | None = None) -> TuneResult:
    """Maximise the estimated policy value over the tuning domain.

    Every candidate is evaluated on the same seed set.  Grid search visits
    the lattice in lexicographic order and keeps the first strict maximum,
    so ties go to the lexicographically smallest theta.  A candidate whose
    evaluation raises is kept in the trace with its error and skipped.
    """
    if objective not in ("cumulative", "final-reward"):
        raise ValueError(f"unknown objective kind {objective!r}")
    if evaluate is None:
        if model is None:
            raise ValueError("need a model or an evaluate function")
        evaluate = storage_evaluator(model, spec)
    names = spec.names
    trace: list[TraceRow] = []

    def run(theta_vec) -> Estimate | None:
        theta = dict(zip(names, (float(v) for v in theta_vec)))
        idx = len(trace)
        try:
            vals = np.asarray(evaluate(theta), dtype=float)
            if vals.size == 0 or not np.all(np.isfinite(vals)):
                raise ValueError("non-finite evaluation")
        except Exception as exc:  # candidate marked invalid, search continues
            trace.append(TraceRow(idx, tuple(theta.values()), math.nan, math.nan, 0, f"{type(exc).__name__}: {exc}"))
            return None
        est = estimate(vals)
        trace.append(TraceRow(idx, tuple(theta.values()), est.mean, est.stderr, vals.size))
        return est

    if spec.method == "grid":
        best, best_est = None, None
        for pt in spec.lattice():
            est = run(pt)
            if est is not None and (best_est is None or est.mean > best_est.mean):
                best, best_est = pt, est
        if best is None:
            raise RuntimeError("every candidate failed to evaluate")
        return TuneResult(dict(zip(names, best)), best_est, trace)

    # SPSA
    rng_key = spec.train_seed
    start = spec.start or {n: 0.5 * (d[0] + d[1]) for n, d in spec.domain.items()}
    theta = _project(np.array([float(start[n]) for n in names]), spec)
    for n in range(1, spec.budget + 1):
        a_n = spec.spsa_a / (n + spec.spsa_A) ** 0.602
        c_n = spec.spsa_c / n ** 0.101
        delta = np.where(period_rng(rng_key, n, 0, TRAINING).random(theta.size) < 0.5, -1.0, 1.0)
        tp = _project(theta + c_n * delta, spec)
        tm = _project(theta - c_n * delta, spec)
        ep, em = run(tp), run(tm)
        if ep is None or em is None:
            continue
        diff = tp - tm
        g = np.where(diff != 0, (ep.mean - em.mean) / np.where(diff != 0, diff, 1.0), 0.0)
        theta = _project(theta + a_n * g, spec)
    final = run(theta)
    if final is None:
        raise RuntimeError("final SPSA iterate failed to evaluate")
    return TuneResult(dict(zip(names, theta.tolist())), final, trace)


def write_trace(path, result: TuneResult, names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate", *names, "mean", "stderr", "paths"])
        for r in result.trace:
            w.writerow([r.index, *(repr(float(v)) for v in r.theta), repr(r.mean), repr(r.stderr), r.paths])


# ---------------------------------------------------------------------------
# paired comparisons


def t_quantile(p: float, df: int) -> float:
    """Student-t quantile via the Cornish-Fisher expansion (accurate to ~1e-4 for df >= 10)."""
    z = NormalDist().inv_cdf(p)
    g1 = (z ** 3 + z) / 4
    g2 = (5 * z ** 5 + 16 * z ** 3 + 3 * z) / 96
    g3 = (3 * z ** 7 + 19 * z ** 5 + 17 * z ** 3 - 15 * z) / 384
    return z + g1 / df + g2 / df ** 2 + g3 / df ** 3


@dataclass
class PairedComparison:
    mean_diff: float
    stderr: float
    t_stat: float
    n: int

    def greater(self, level: float = 0.95) -> bool:
        """One-sided test that the first arm of the comparison is better."""
        return self.t_stat > t_quantile(level, self.n - 1)


def paired_difference(a, b) -> PairedComparison:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    est = estimate(d)
    t = est.mean / est.stderr if est.stderr > 0 else (math.inf if est.mean > 0 else -math.inf if est.mean < 0 else 0.0)
    return PairedComparison(est.mean, est.stderr, t, d.size)


# ---------------------------------------------------------------------------
# posterior bound


def hindsight_rows(traj):
    """Realised (R_0, wind, demand, prices) over the periods of a storage trajectory."""
    T = traj.horizon
    st = traj.states[:T]
    return (traj.states[0].R, np.array([s.E for s in st]), np.array([s.D for s in st]),
            np.array([s.prices[0] for s in st]))


def posterior_bound(traj, cfg) -> float:
    """Best value attainable on a realised path with perfect hindsight.

    Solves the full-horizon deterministic LP on the realised wind, demand and
    price rows.  This bounds any nonanticipative policy whose exogenous path
    does not depend on its decisions (every variant except ``active``).
    """
    if traj.horizon == 0:
        return 0.0
    R0, E, D, p = hindsight_rows(traj)
    sol = solve_lookahead(assemble_lookahead(R0, cfg, E, D, p))
    return -sol.objective


def path_bounds(model: SequentialModel, n_paths: int, seed: int, first_path: int = 0) -> np.ndarray:
    """Posterior bound for each of ``n_paths`` exogenous paths of a storage model."""
    from .core import simulate_trajectory
    from .policies.storage import zero_policy

    cfg, variant = model.context["cfg"], model.context["variant"]
    if variant == "active":
        raise ValueError("prices depend on decisions in the active variant; no pathwise bound")
    out = np.empty(n_paths)
    for i in range(n_paths):
        traj = simulate_trajectory(model, lambda s, rng: zero_policy(s, cfg), seed, first_path + i)
        out[i] = posterior_bound(traj, cfg)
    return out


# ---------------------------------------------------------------------------
# Gaussian bandit


@dataclass
class GaussianBandit:
    mu: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.size < 2:
            raise ValueError("a bandit needs at least two arms")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def K(self) -> int:
        return self.mu.size

    def noise_table(self, N: int, seed: int, rep: int) -> np.ndarray:
        """N x K standard normals: pulling arm a at step n observes mu_a + sigma Z[n, a]."""
        return period_rng(seed, rep, 0, EXOGENOUS).standard_normal((N, self.K))

    def as_model(self) -> SequentialModel:
        """One-period state-independent model: choose an arm, earn mu_x + sigma W."""
        mu, sigma = self.mu, self.sigma
        return SequentialModel(
            initial_state=None,
            exogenous=lambda s, x, rng: float(rng.standard_normal()),
            transition=lambda s, x, w: None,
            contribution=lambda s, x, w: float(mu[int(x)] + sigma * w),
            horizon=1,
        )


def bandit_episode(problem: GaussianBandit, selector, N: int, seed: int, rep: int, noise: float | None = None):
    """Run N pulls; returns (belief, sum of observed rewards)."""
    Z = problem.noise_table(N, seed, rep)
    rng = period_rng(seed, rep, 0, DECISION)
    b = BanditBelief.new(problem.K, noise)
    total = 0.0
    mu, sigma = problem.mu, problem.sigma
    for n in range(N):
        a = selector(b, rng)
        y = float(mu[a] + sigma * Z[n, a])
        b.update(a, y)
        total += y
    return b, total


def bandit_values(problem: GaussianBandit, selector, N: int, objective: str = "cumulative", reps: int = 200,
                  seed: int = 0, noise: float | None = None) -> np.ndarray:
    """Per-replication performance.

    ``cumulative``: sum of the N observed rewards.  ``final-reward``: true
    mean of argmax mu_bar after N pulls (ties to the lowest index).
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if objective not in ("cumulative", "final-reward"):
        raise ValueError(f"unknown objective kind {objective!r}")
    out = np.empty(reps)
    for r in range(reps):
        b, total = bandit_episode(problem, selector, N, seed, r, noise)
        out[r] = total if objective == "cumulative" else problem.mu[int(np.argmax(b.mu))]
    return out


def bandit_run(problem: GaussianBandit, selector, N: int, objective: str = "cumulative", reps: int = 200,
               seed: int = 0, noise: float | None = None) -> Estimate:
    return estimate(bandit_values(problem, selector, N, objective, reps, seed, noise))


def bandit_learner(problem: GaussianBandit, selector, noise: float | None = None):
    """Learning policy for evaluate_final_reward: pull N times, return argmax of the sample means."""

    def learn(model, budget, rng):
        b = BanditBelief.new(problem.K, noise)
        for _ in range(budget):
            a = selector(b, rng)
            b.update(a, float(problem.mu[a] + problem.sigma * rng.standard_normal()))
        return int(np.argmax(b.mu))

    return learn
