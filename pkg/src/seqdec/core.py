"""Five-element sequential decision model, trajectory simulation and objectives.

A model is the tuple (state, decision, exogenous information, transition,
contribution) over a finite horizon.  Policies are callables
``policy(state, rng) -> decision``; the rng is a per-period decision stream
that deterministic policies simply ignore.

Randomness is counter based: every (seed, stream family, path, period) key
maps to its own Philox stream, so a path replays bit-exactly no matter how
paths are scheduled, and competing policies see identical exogenous draws
(common random numbers) as long as the exogenous sampler draws a fixed number
of variates per period.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

STATE_KINDS = ("physical", "information", "belief")

# stream families
EXOGENOUS = 0
DECISION = 1
TRAINING = 2

_MASK48 = (1 << 48) - 1
_MASK64 = (1 << 64) - 1


def period_rng(seed: int, path: int, period: int, family: int = EXOGENOUS) -> np.random.Generator:
    """Independent generator keyed by (seed, family, path, period)."""
    if seed < 0 or path < 0 or period < 0:
        raise ValueError("seed, path and period must be non-negative")
    key = np.array([seed & _MASK64, ((family & 0xFFFF) << 48) | (path & _MASK48)], dtype=np.uint64)
    counter = np.array([0, 0, period, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class InfeasibleDecisionError(ValueError):
    """A decision violated the model constraints."""

    def __init__(self, period: int | None, violations: Sequence[str]):
        self.period = period
        self.violations = list(violations)
        where = f" at period {period}" if period is not None else ""
        super().__init__(f"infeasible decision{where}: " + "; ".join(self.violations))


class StateSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str = "physical"
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in STATE_KINDS + ("decision",):
            raise ValueError(f"unknown dimension kind {self.kind!r}")


def wrap_contribution(fn: Callable[[Any, Any], float]) -> Callable[[Any, Any, Any], float]:
    """Lift a two-argument C(S, x) to the canonical C(S, x, W)."""

    def contribution(state, decision, exogenous):
        return fn(state, decision)

    contribution.__wrapped__ = fn
    return contribution


@dataclass
class SequentialModel:
    """State, decision, exogenous sampler, transition and contribution over ``horizon`` periods.

    ``exogenous(state, decision, rng)`` draws W_{t+1} after the decision is
    made, so it may depend on both.  ``state_vector`` flattens a state for the
    schema check; when omitted the state itself is treated as the vector.
    """

    initial_state: Any
    exogenous: Callable[[Any, Any, np.random.Generator], Any]
    transition: Callable[[Any, Any, Any], Any]
    contribution: Callable[[Any, Any, Any], float]
    horizon: int
    state_schema: tuple[Dimension, ...] = ()
    decision_schema: tuple[Dimension, ...] = ()
    state_vector: Callable[[Any], np.ndarray] | None = None
    decision_vector: Callable[[Any], np.ndarray] | None = None
    constraints: Callable[[Any, Any], list[str]] | None = None
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")

    def check_state(self, state, tol: float = 1e-9) -> list[str]:
        if not self.state_schema:
            return []
        vec = np.atleast_1d(np.asarray(self.state_vector(state) if self.state_vector else state, dtype=float))
        if vec.shape[0] != len(self.state_schema):
            return [f"state has {vec.shape[0]} dimensions, schema declares {len(self.state_schema)}"]
        return _bound_violations(vec, self.state_schema, tol)

    def check_decision(self, state, decision, tol: float = 1e-9) -> list[str]:
        out = list(self.constraints(state, decision)) if self.constraints else []
        if self.decision_schema:
            vec = np.atleast_1d(
                np.asarray(self.decision_vector(decision) if self.decision_vector else decision, dtype=float)
            )
            out += _bound_violations(vec, self.decision_schema, tol)
        return out


def _bound_violations(vec, schema, tol):
    out = []
    for value, dim in zip(vec, schema):
        if math.isnan(value):
            out.append(f"{dim.name} is NaN")
        elif value < dim.lower - tol or value > dim.upper + tol:
            out.append(f"{dim.name}={value:g} outside [{dim.lower:g}, {dim.upper:g}]")
    return out


@dataclass
class Trajectory:
    states: list
    decisions: list
    exogenous: list
    contributions: list[float]
    seed: int
    path: int = 0

    @property
    def horizon(self) -> int:
        return len(self.decisions)

    def total(self) -> float:
        return Aggregator("sum")(self.contributions)


def simulate_trajectory(
    model: SequentialModel,
    policy: Callable,
    seed: int,
    path: int = 0,
    check: bool = True,
) -> Trajectory:
    """Run ``policy`` through the model for one sample path."""
    s = model.initial_state
    states, decisions, exo, contribs = [s], [], [], []
    for t in range(model.horizon):
        x = policy(s, period_rng(seed, path, t, DECISION))
        if check:
            bad = model.check_decision(s, x)
            if bad:
                raise InfeasibleDecisionError(t, bad)
        w = model.exogenous(s, x, period_rng(seed, path, t, EXOGENOUS))
        c = float(model.contribution(s, x, w))
        if not math.isfinite(c):
            raise ValueError(f"non-finite contribution at period {t}")
        s = model.transition(s, x, w)
        if check:
            bad = model.check_state(s)
            if bad:
                raise StateSchemaError(f"invalid state after period {t}: " + "; ".join(bad))
        states.append(s)
        decisions.append(x)
        exo.append(w)
        contribs.append(c)
    return Trajectory(states, decisions, exo, contribs, seed, path)


_AGG_RE = re.compile(r"^\s*(sum|min|max|discounted-sum|quantile)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")


@dataclass(frozen=True)
class Aggregator:
    """The rho operator: reduces a whole contribution sequence to one number."""

    kind: str = "sum"
    param: float | None = None

    def __post_init__(self):
        if self.kind not in ("sum", "discounted-sum", "min", "max", "quantile"):
            raise ValueError(f"unknown aggregator {self.kind!r}")
        if self.kind == "discounted-sum" and not (self.param is not None and 0 <= self.param <= 1):
            raise ValueError("discounted-sum needs a discount in [0, 1]")
        if self.kind == "quantile" and not (self.param is not None and 0 <= self.param <= 1):
            raise ValueError("quantile needs q in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "Aggregator":
        m = _AGG_RE.match(text)
        if not m:
            raise ValueError(f"cannot parse aggregator {text!r}")
        kind, arg = m.groups()
        return cls(kind, float(arg) if arg is not None else None)

    def __str__(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param!r})"

    def __call__(self, values: Sequence[float]) -> float:
        if self.kind in ("sum", "discounted-sum"):
            # plain left-to-right accumulation so a unit discount reproduces the sum exactly
            g = 1.0 if self.kind == "sum" else self.param
            acc, w = 0.0, 1.0
            for v in values:
                acc += w * v
                w *= g
            return acc
        if len(values) == 0:
            raise ValueError(f"{self.kind} of an empty sequence")
        if self.kind == "min":
            return float(min(values))
        if self.kind == "max":
            return float(max(values))
        return float(np.quantile(np.asarray(values, dtype=float), self.param))


SUM = Aggregator("sum")


class Estimate(NamedTuple):
    mean: float
    stderr: float


def estimate(values) -> Estimate:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return Estimate(float(v.mean()), se)


def path_values(
    model: SequentialModel,
    policy: Callable,
    n_paths: int,
    seed: int,
    aggregator: Aggregator = SUM,
    first_path: int = 0,
) -> np.ndarray:
    """Aggregated contribution of each of ``n_paths`` independent paths."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    out = np.empty(n_paths)
    for i in range(n_paths):
        traj = simulate_trajectory(model, policy, seed, first_path + i)
        out[i] = aggregator(traj.contributions)
    return out


def evaluate_cumulative(
    model: SequentialModel,
    policy: Callable,
    n_paths: int,
    aggregator: Aggregator = SUM,
    seed: int = 0,
) -> Estimate:
    return estimate(path_values(model, policy, n_paths, seed, aggregator))


def evaluate_final_reward(
    learning_policy: Callable,
    implementation_family: Callable,
    model: SequentialModel,
    budget: int,
    n_test: int,
    seed: int,
    aggregator: Aggregator = SUM,
) -> float:
    """Train with ``learning_policy`` on ``budget`` observations, then test the implementation policy.

    ``learning_policy(model, budget, rng)`` returns a parameter for
    ``implementation_family(theta) -> policy``.  Training draws from the
    TRAINING stream family and testing from the usual exogenous family, so
    the two never share variates.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    theta = learning_policy(model, budget, period_rng(seed, 0, 0, TRAINING))
    policy = implementation_family(theta)
    return evaluate_cumulative(model, policy, n_test, aggregator, seed).mean
