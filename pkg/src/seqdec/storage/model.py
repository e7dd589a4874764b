"""Energy storage with wind, demand, grid and a battery, in five variants.

``base``        price observed directly (seasonal synthetic or replayed data)
``timeseries``  AR(3) price; state carries (p_t, p_{t-1}, p_{t-2})
``passive``     as timeseries, plus an RLS belief on the AR coefficients
``active``      grid purchases move prices (theta3 * x_GB); 4-coefficient belief
``forecast``    AR(3) price plus a rolling wind forecast f^E_t of length H
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core import Dimension, InfeasibleDecisionError, SequentialModel
from ..processes import (RlsBelief, demand_baseline, demand_drift, rls_update, roll_forecast,
                         sample_exogenous)

VARIANTS = ("base", "timeseries", "passive", "active", "forecast")
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class StorageConfig:
    eta: float = 0.9
    r_max: float = 100.0
    charge_rate: float = 10.0
    discharge_rate: float = 10.0
    horizon: int = 24
    theta: tuple = (0.7, 0.2, 0.05)
    theta3: float = 0.1
    price_intercept: float = 1.5
    sigma_price: float = 1.0
    sigma_wind: float = 1.0
    sigma_demand: float = 0.5
    forecast_horizon: int = 12
    sigma_forecast: float = 2.0
    demand_mean: float = 5.0
    demand_amplitude: float = 2.0
    demand_period: int = 24
    price_mean: float = 30.0
    price_amplitude: float = 10.0
    wind_mean: float = 4.0
    wind_amplitude: float = 0.0
    initial_R: float = 0.0
    initial_wind: float = 4.0
    initial_price: float = 30.0
    initial_forecast: tuple | None = None
    price_data: tuple | None = None
    rls_prior: float = 100.0
    rls_literal: bool = False

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.r_max <= 0:
            raise ValueError("r_max must be > 0")
        if self.charge_rate <= 0 or self.discharge_rate <= 0:
            raise ValueError("charge and discharge rates must be > 0")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.forecast_horizon < 1:
            raise ValueError("forecast_horizon must be >= 1")
        if len(self.theta) != 3:
            raise ValueError("theta needs three AR coefficients")
        if min(self.sigma_price, self.sigma_wind, self.sigma_demand, self.sigma_forecast) < 0:
            raise ValueError("noise scales must be >= 0")
        if not 0.0 <= self.initial_R <= self.r_max:
            raise ValueError("initial_R outside [0, r_max]")
        if self.initial_forecast is not None and len(self.initial_forecast) != self.forecast_horizon:
            raise ValueError("initial_forecast needs forecast_horizon entries")
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if self.price_data is not None:
            object.__setattr__(self, "price_data", tuple(float(v) for v in self.price_data))
        if self.initial_forecast is not None:
            object.__setattr__(self, "initial_forecast", tuple(float(v) for v in self.initial_forecast))


@dataclass(frozen=True, eq=False)
class StorageState:
    R: float
    E: float
    D: float
    prices: tuple  # (p_t, p_{t-1}, p_{t-2})
    t: int = 0
    belief: RlsBelief | None = None
    forecast: tuple | None = None  # f^E_{t,t+1..t+H}

    @property
    def p(self) -> float:
        return self.prices[0]

    def vector(self, variant: str) -> np.ndarray:
        """Flat state for the given variant; its length never changes along a trajectory."""
        parts = [self.R, self.E, self.D]
        parts += [self.prices[0]] if variant == "base" else list(self.prices)
        out = np.array(parts, dtype=float)
        if variant in ("passive", "active"):
            out = np.concatenate([out, self.belief.vector()])
        if variant == "forecast":
            out = np.concatenate([out, np.asarray(self.forecast, dtype=float)])
        return out

    def __eq__(self, other):
        if not isinstance(other, StorageState):
            return NotImplemented
        return (self.R == other.R and self.E == other.E and self.D == other.D and self.prices == other.prices
                and self.t == other.t and self.belief == other.belief and self.forecast == other.forecast)


class StorageDecision(NamedTuple):
    x_gb: float = 0.0  # grid -> battery (negative: battery -> grid)
    x_gd: float = 0.0  # grid -> demand
    x_eb: float = 0.0  # wind -> battery
    x_ed: float = 0.0  # wind -> demand
    x_bd: float = 0.0  # battery -> demand

    def vector(self) -> np.ndarray:
        return np.array(self, dtype=float)


def feasible(x: StorageDecision, s: StorageState, cfg: StorageConfig, tol: float = FEAS_TOL) -> list[str]:
    """All constraint violations of ``x`` in state ``s`` (empty list: feasible)."""
    out = []
    gb, gd, eb, ed, bd = (float(v) for v in x)
    if any(math.isnan(v) for v in (gb, gd, eb, ed, bd)):
        return ["nonnegativity: NaN flow"]
    for name, v in (("x_GD", gd), ("x_EB", eb), ("x_ED", ed), ("x_BD", bd)):
        if v < -tol:
            out.append(f"nonnegativity: {name}={v:g} < 0")
    if eb + ed > s.E + tol * max(1.0, abs(s.E)):
        out.append(f"wind limit: x_EB+x_ED={eb + ed:g} > E={s.E:g}")
    if abs(gd + bd + ed - s.D) > tol * max(1.0, abs(s.D)):
        out.append(f"demand balance: x_GD+x_BD+x_ED={gd + bd + ed:g} != D={s.D:g}")
    if bd > s.R + tol * max(1.0, abs(s.R)):
        out.append(f"battery balance: x_BD={bd:g} > R={s.R:g}")
    if gb + eb > cfg.charge_rate + tol * cfg.charge_rate:
        out.append(f"charge rate: x_GB+x_EB={gb + eb:g} > {cfg.charge_rate:g}")
    if bd - min(gb, 0.0) > cfg.discharge_rate + tol * cfg.discharge_rate:
        out.append(f"discharge rate: x_BD-min(x_GB,0)={bd - min(gb, 0.0):g} > {cfg.discharge_rate:g}")
    r_next = s.R + cfg.eta * (gb + eb - bd)
    if r_next < -tol * max(1.0, cfg.r_max) or r_next > cfg.r_max * (1 + tol):
        out.append(f"capacity: R'={r_next:g} outside [0, {cfg.r_max:g}]")
    return out


def contribution(s: StorageState, x: StorageDecision, w=None) -> float:
    """Money earned this period: -p_t (x_GB + x_GD); selling (x_GB < 0) earns revenue."""
    return -s.prices[0] * (x.x_gb + x.x_gd)


def _ar(theta, prices) -> float:
    return theta[0] * prices[0] + theta[1] * prices[1] + theta[2] * prices[2]


def transition(s: StorageState, x: StorageDecision, w, variant: str, cfg: StorageConfig,
               check: bool = True) -> StorageState:
    if check:
        bad = feasible(x, s, cfg)
        if bad:
            raise InfeasibleDecisionError(s.t, bad)
    R = s.R + cfg.eta * (x.x_gb + x.x_eb - x.x_bd)
    D = max(0.0, s.D + w.d_hat)
    forecast = s.forecast
    if variant == "forecast":
        E, f = roll_forecast(s.forecast, w.forecast_errors)
        forecast = tuple(f.tolist())
    else:
        E = max(0.0, s.E + w.e_hat)
    belief = s.belief
    if variant == "base":
        p = w.p_hat
    else:
        p = _ar(cfg.theta, s.prices) + w.p_hat
        if variant in ("passive", "active"):
            feats = list(s.prices) + ([x.x_gb] if variant == "active" else [])
            belief, _, _ = rls_update(s.belief, feats, p - cfg.price_intercept, literal=cfg.rls_literal)
    prices = (p, s.prices[0], s.prices[1])
    return StorageState(R, E, D, prices, s.t + 1, belief, forecast)


def project_feasible(x_raw, s: StorageState, cfg: StorageConfig) -> StorageDecision:
    """Deterministic repair of a raw decision.

    A feasible input is returned unchanged.  Otherwise demand is served from
    wind, then battery, then grid; the raw wind->battery and grid<->battery
    intents are kept but clipped to wind availability, charge/discharge rates
    and battery capacity.
    """
    x_raw = StorageDecision(*(float(v) for v in x_raw))
    if not feasible(x_raw, s, cfg):
        return x_raw
    eta = cfg.eta
    R = max(0.0, s.R)
    E = max(0.0, s.E)
    D = max(0.0, s.D)
    ed = min(E, D)
    bd = min(D - ed, R, cfg.discharge_rate)
    gd = D - ed - bd
    headroom = (cfg.r_max - R) / eta + bd  # net inflow that keeps R' <= r_max
    eb = min(max(x_raw.x_eb, 0.0), E - ed, cfg.charge_rate, max(headroom, 0.0))
    hi = min(cfg.charge_rate - eb, headroom - eb)
    lo = -min(cfg.discharge_rate - bd, R / eta + eb - bd)
    gb = min(max(x_raw.x_gb, lo), hi)
    return StorageDecision(gb, gd, eb, ed, bd)


def signal_decision(signal: int, s: StorageState, cfg: StorageConfig) -> StorageDecision:
    """Map a charge/hold/discharge signal (+1/0/-1) to flows.

    Wind serves demand first and any surplus goes to the battery.  +1 buys
    from the grid into the battery at the largest feasible rate; -1 serves the
    remaining demand from the battery and sells what rate and charge allow;
    0 leaves the battery alone (demand not met by wind is bought).
    """
    eta = cfg.eta
    R = max(0.0, s.R)
    E = max(0.0, s.E)
    D = max(0.0, s.D)
    ed = min(E, D)
    bd = min(D - ed, R, cfg.discharge_rate) if signal < 0 else 0.0
    gd = D - ed - bd
    headroom = max((cfg.r_max - R) / eta + bd, 0.0)
    eb = min(E - ed, cfg.charge_rate, headroom)
    gb = 0.0
    if signal > 0:
        gb = max(0.0, min(cfg.charge_rate - eb, headroom - eb))
    elif signal < 0:
        gb = -max(0.0, min(cfg.discharge_rate - bd, R / eta + eb - bd))
    return project_feasible(StorageDecision(gb, gd, eb, ed, bd), s, cfg)


# ---------------------------------------------------------------------------
# model assembly


def initial_state(cfg: StorageConfig, variant: str) -> StorageState:
    if variant not in VARIANTS:
        raise ValueError(f"unknown storage variant {variant!r}")
    p0 = float(cfg.initial_price)
    D0 = max(0.0, demand_baseline(0, cfg.demand_mean, cfg.demand_amplitude, cfg.demand_period))
    belief = None
    if variant == "passive":
        belief = RlsBelief.prior(3, cfg.rls_prior)
    elif variant == "active":
        belief = RlsBelief.prior(4, cfg.rls_prior)
    forecast = None
    if variant == "forecast":
        if cfg.initial_forecast is not None:
            forecast = tuple(cfg.initial_forecast)
        else:
            forecast = tuple(max(0.0, wind_baseline(k, cfg)) for k in range(1, cfg.forecast_horizon + 1))
    return StorageState(float(cfg.initial_R), float(cfg.initial_wind), D0, (p0, p0, p0), 0, belief, forecast)


def wind_baseline(t: int, cfg: StorageConfig) -> float:
    return cfg.wind_mean + cfg.wind_amplitude * math.sin(2.0 * math.pi * t / cfg.demand_period)


def state_schema(cfg: StorageConfig, variant: str) -> tuple:
    dims = [Dimension("R", "physical", 0.0, cfg.r_max), Dimension("E", "physical", 0.0),
            Dimension("D", "physical", 0.0)]
    if variant == "base":
        dims.append(Dimension("p", "information"))
    else:
        dims += [Dimension(n, "information") for n in ("p", "p_lag1", "p_lag2")]
    if variant in ("passive", "active"):
        k = 3 if variant == "passive" else 4
        dims += [Dimension(f"theta_bar{i}", "belief") for i in range(k)]
        dims += [Dimension(f"M{i}{j}", "belief") for i in range(k) for j in range(k)]
    if variant == "forecast":
        dims += [Dimension(f"fE{k}", "belief", 0.0) for k in range(1, cfg.forecast_horizon + 1)]
    return tuple(dims)


DECISION_NAMES = ("x_GB", "x_GD", "x_EB", "x_ED", "x_BD")


def make_storage_model(cfg: StorageConfig, variant: str = "base") -> SequentialModel:
    s0 = initial_state(cfg, variant)
    return SequentialModel(
        initial_state=s0,
        exogenous=lambda s, x, rng: sample_exogenous(cfg, variant, s, x, rng),
        transition=lambda s, x, w: transition(s, x, w, variant, cfg, check=False),
        contribution=contribution,
        horizon=cfg.horizon,
        state_schema=state_schema(cfg, variant),
        decision_schema=tuple(Dimension(n, "decision") for n in DECISION_NAMES),
        state_vector=lambda s: s.vector(variant),
        decision_vector=lambda x: np.asarray(x, dtype=float),
        constraints=lambda s, x: feasible(x, s, cfg),
        context={"cfg": cfg, "variant": variant},
    )


# ---------------------------------------------------------------------------
# lookahead inputs: what a deterministic planner at state s believes


def price_forecast(s: StorageState, cfg: StorageConfig, variant: str, K: int) -> np.ndarray:
    """Point forecast of p_t..p_{t+K-1}: persistence for ``base``, AR rollout with zero innovation otherwise.

    The learning variants roll out their current belief theta_bar instead of
    the true coefficients; future grid purchases are not known, so the active
    term is left out of the rollout.
    """
    out = np.empty(K)
    if variant == "base":
        out[:] = s.prices[0]
        return out
    theta = cfg.theta if variant in ("timeseries", "forecast") else tuple(s.belief.theta[:3].tolist())
    lags = list(s.prices)
    out[0] = lags[0]
    for k in range(1, K):
        p = _ar(theta, lags) + cfg.price_intercept
        lags = [p, lags[0], lags[1]]
        out[k] = p
    return out


def demand_forecast(s: StorageState, cfg: StorageConfig, K: int) -> np.ndarray:
    out = np.empty(K)
    d = s.D
    for k in range(K):
        out[k] = d
        d = max(0.0, d + demand_drift(s.t + k, cfg.demand_mean, cfg.demand_amplitude, cfg.demand_period))
    return out


def wind_forecast(s: StorageState, cfg: StorageConfig, variant: str, K: int) -> np.ndarray:
    """E_t followed by f^E_{t,t+1..} for the forecast variant, persistence otherwise."""
    out = np.full(K, s.E)
    if variant == "forecast" and K > 1:
        f = np.asarray(s.forecast, dtype=float)
        n = min(K - 1, f.size)
        out[1:1 + n] = f[:n]
        out[1 + n:] = f[-1]
    return out


# ---------------------------------------------------------------------------
# export

TRAJECTORY_COLUMNS = ("t", "R", "E", "D", "p", "x_GB", "x_GD", "x_EB", "x_ED", "x_BD", "contribution")


def trajectory_rows(traj) -> list[tuple]:
    rows = []
    for t, (s, x, c) in enumerate(zip(traj.states, traj.decisions, traj.contributions)):
        rows.append((t, s.R, s.E, s.D, s.prices[0], *(float(v) for v in x), c))
    return rows


def write_trajectory(path, traj) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(traj):
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
