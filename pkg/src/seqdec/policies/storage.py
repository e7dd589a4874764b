"""Storage policies from all four classes plus hybrids.

Policies built by :func:`make_policy` have the simulator signature
``policy(state, rng) -> StorageDecision``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..lp.lookahead import assemble_lookahead, first_period, solve_lookahead
from ..storage.model import (StorageConfig, StorageDecision, StorageState, demand_forecast, feasible,
                             price_forecast, project_feasible, signal_decision, wind_forecast)

# ---------------------------------------------------------------------------
# PFAs


def threshold_signal(p: float, theta_charge: float, theta_discharge: float) -> int:
    """Buy low (+1), hold (0), sell high (-1)."""
    if p < theta_charge:
        return 1
    if p > theta_discharge:
        return -1
    return 0


def pfa_threshold(s: StorageState, theta_charge: float, theta_discharge: float, cfg: StorageConfig) -> StorageDecision:
    if theta_charge > theta_discharge:
        raise ValueError("theta_charge must not exceed theta_discharge")
    return signal_decision(threshold_signal(s.prices[0], theta_charge, theta_discharge), s, cfg)


def pfa_affine(s, theta, basis, cfg: StorageConfig | None = None):
    """sum_f theta_f phi_f(s).

    Without ``cfg`` the raw control (scalar or vector) is returned.  With a
    storage config the value is read as the grid<->battery intent x_GB, laid
    over the hold decision and projected onto the feasible set.
    """
    theta = np.asarray(theta, dtype=float)
    phis = np.array([phi(s) for phi in basis], dtype=float)
    u = phis.T @ theta if phis.ndim > 1 else float(phis @ theta)
    if cfg is None:
        return u
    raw = signal_decision(0, s, cfg)._replace(x_gb=float(u))
    return project_feasible(raw, s, cfg)


# ---------------------------------------------------------------------------
# decision grid and VFA


def _axis(ub: float, step: float) -> np.ndarray:
    """0, step, 2 step, ... below ub, then ub itself."""
    ub = max(0.0, float(ub))
    k = int(math.floor(ub / step + 1e-12))
    vals = step * np.arange(k + 1)
    vals = vals[vals < ub - 1e-12]
    return np.append(vals, ub)


def decision_grid(s: StorageState, cfg: StorageConfig, divisions: int = 5, step: float | None = None) -> np.ndarray:
    """Feasible decisions on a lattice, as rows (x_GB, x_GD, x_EB, x_ED, x_BD).

    Each flow axis starts at 0 in steps of rate/divisions (or ``step``) and
    also contains its upper limit; x_GD follows from demand balance.  Rows are
    in lexicographic order of (x_GB, x_EB, x_ED, x_BD), so an argmax over the
    grid picks a reproducible first occurrence.
    """
    eta = cfg.eta
    R, E, D = max(0.0, s.R), max(0.0, s.E), max(0.0, s.D)
    st_c = step or cfg.charge_rate / divisions
    st_d = step or cfg.discharge_rate / divisions
    hi = min(cfg.charge_rate, (cfg.r_max - R) / eta)
    lo = min(cfg.discharge_rate, R / eta)
    gb = np.unique(np.concatenate([-_axis(lo, st_d), _axis(hi, st_c)]))
    eb = _axis(min(E, cfg.charge_rate), st_c)
    ed = _axis(min(E, D), st_c)
    bd = _axis(min(R, D, cfg.discharge_rate), st_d)
    G = np.stack(np.meshgrid(gb, eb, ed, bd, indexing="ij"), axis=-1).reshape(-1, 4)
    gbv, ebv, edv, bdv = G.T
    gd = D - edv - bdv
    tol = 1e-9
    ok = ((gd >= -tol) & (ebv + edv <= E + tol) & (gbv + ebv <= cfg.charge_rate + tol)
          & (bdv - np.minimum(gbv, 0.0) <= cfg.discharge_rate + tol))
    r_next = R + eta * (gbv + ebv - bdv)
    ok &= (r_next >= -tol) & (r_next <= cfg.r_max + tol)
    X = np.column_stack([gbv, np.maximum(gd, 0.0), ebv, edv, bdv])[ok]
    return X


def grid_contributions(s: StorageState, X: np.ndarray) -> np.ndarray:
    return -s.prices[0] * (X[:, 0] + X[:, 1])


def vfa_features(s: StorageState, X: np.ndarray, cfg: StorageConfig) -> np.ndarray:
    """(R', R'^2, (x_EB+x_ED)^2, (x_ED+x_BD+x_GD)^2) per grid row; R' is the post-decision level."""
    X = np.atleast_2d(X)
    r_next = s.R + cfg.eta * (X[:, 0] + X[:, 2] - X[:, 4])
    wind = X[:, 2] + X[:, 3]
    served = X[:, 3] + X[:, 4] + X[:, 1]
    return np.column_stack([r_next, r_next ** 2, wind ** 2, served ** 2])


def vfa_policy(s: StorageState, theta, cfg: StorageConfig, divisions: int = 5, step: float | None = None) -> StorageDecision:
    """argmax over the decision grid of C(s, x) + theta . phi(s, x)."""
    X = decision_grid(s, cfg, divisions, step)
    vals = grid_contributions(s, X) + vfa_features(s, X, cfg) @ np.asarray(theta, dtype=float)
    return StorageDecision(*X[int(np.argmax(vals))].tolist())


def hybrid_vfa_pfa(s: StorageState, theta_vfa, theta_pfa, weight: float, cfg: StorageConfig,
                   divisions: int = 5, step: float | None = None) -> StorageDecision:
    """VFA objective minus weight * ||x - X^PFA(s)||_2 over the decision grid."""
    if weight < 0:
        raise ValueError("PFA-VFA weight must be >= 0")
    anchor = np.asarray(pfa_threshold(s, theta_pfa[0], theta_pfa[1], cfg), dtype=float)
    X = decision_grid(s, cfg, divisions, step)
    vals = grid_contributions(s, X) + vfa_features(s, X, cfg) @ np.asarray(theta_vfa, dtype=float)
    if weight:
        vals = vals - weight * np.linalg.norm(X - anchor, axis=1)
    return StorageDecision(*X[int(np.argmax(vals))].tolist())


# ---------------------------------------------------------------------------
# DLA


def lookahead_length(s: StorageState, cfg: StorageConfig, H: int) -> int:
    """Periods in the lookahead at s: t..t+H, cut off at the last period of the horizon."""
    if H < 1:
        raise ValueError("lookahead horizon must be >= 1")
    return min(H, max(cfg.horizon - 1 - s.t, 0)) + 1


def lookahead_problem(s: StorageState, cfg: StorageConfig, variant: str, H: int, multipliers=None):
    K = lookahead_length(s, cfg, H)
    return assemble_lookahead(s.R, cfg, wind_forecast(s, cfg, variant, K), demand_forecast(s, cfg, K),
                              price_forecast(s, cfg, variant, K), multipliers)


def polish(x, s: StorageState, cfg: StorageConfig) -> StorageDecision:
    """Remove LP round-off so the decision passes the simulator's 1e-9 feasibility check."""
    gb, gd, eb, ed, bd = (float(v) for v in x)
    R, E, D = max(0.0, s.R), max(0.0, s.E), max(0.0, s.D)
    bd = min(max(bd, 0.0), R, cfg.discharge_rate, D)
    ed = min(max(ed, 0.0), E, D - bd)
    eb = min(max(eb, 0.0), E - ed, cfg.charge_rate)
    gd = D - ed - bd
    hi = min(cfg.charge_rate - eb, (cfg.r_max - R) / cfg.eta - eb + bd)
    lo = -min(cfg.discharge_rate - bd, R / cfg.eta + eb - bd)
    gb = min(max(gb, lo), hi)
    out = StorageDecision(gb, gd, eb, ed, bd)
    return out if not feasible(out, s, cfg) else project_feasible(out, s, cfg)


def dla_plan(s: StorageState, cfg: StorageConfig, variant: str, H: int, multipliers=None):
    """(first-period decision, LP solution) of the deterministic lookahead."""
    p = lookahead_problem(s, cfg, variant, H, multipliers)
    sol = solve_lookahead(p)
    return polish(first_period(sol.x), s, cfg), sol


def dla_policy(s: StorageState, cfg: StorageConfig, variant: str, H: int) -> StorageDecision:
    return dla_plan(s, cfg, variant, H)[0]


def dla_cfa_policy(s: StorageState, cfg: StorageConfig, variant: str, H: int, multipliers) -> StorageDecision:
    """DLA with wind caps theta_tau * f^E at lead time tau (theta indexed by lead, not clock time)."""
    m = np.asarray(multipliers, dtype=float)
    if m.size != H:
        raise ValueError(f"need {H} multipliers, got {m.size}")
    if np.any(m < 0) or np.any(m > 2):
        raise ValueError("DLA-CFA multipliers must lie in [0, 2]")
    return dla_plan(s, cfg, variant, H, m)[0]


def bucket_multipliers(values, H: int) -> np.ndarray:
    """Expand per-bucket multipliers to one per lead time; buckets split 1..H into equal consecutive runs."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    nb = values.size
    if nb < 1 or nb > H:
        raise ValueError("need between 1 and H buckets")
    idx = (np.arange(H) * nb) // H
    return values[idx]


# ---------------------------------------------------------------------------
# parameters and registry

STORAGE_POLICIES = ("zero", "pfa-threshold", "pfa-affine", "vfa", "vfa-pfa", "dla", "dla-cfa")
BANDIT_POLICIES = ("greedy", "cfa-ie", "cfa-ucb", "pfa-boltzmann")
POLICY_IDS = STORAGE_POLICIES + BANDIT_POLICIES

# parameter names and defaults by policy id
PARAM_DEFAULTS = {
    "zero": {},
    "pfa-threshold": {"theta_charge": 25.0, "theta_discharge": 35.0},
    "pfa-affine": {"bias": 0.0, "price": 0.0, "level": 0.0},
    "vfa": {"theta1": 0.0, "theta2": 0.0, "theta3": 0.0, "theta4": 0.0, "divisions": 5.0},
    "vfa-pfa": {"theta1": 0.0, "theta2": 0.0, "theta3": 0.0, "theta4": 0.0, "theta_charge": 25.0,
                "theta_discharge": 35.0, "weight": 0.0, "divisions": 5.0},
    "dla": {"H": 12.0},
    "dla-cfa": {"H": 12.0, "bucket1": 1.0, "bucket2": 1.0},
    "greedy": {},
    "cfa-ie": {"theta": 1.0},
    "cfa-ucb": {"theta": 1.0},
    "pfa-boltzmann": {"theta": 1.0},
}


@dataclass
class PolicyParams:
    """A policy id with named real parameters; unnamed ones take their defaults."""

    policy_id: str
    theta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.policy_id not in PARAM_DEFAULTS:
            raise ValueError(f"unknown policy id {self.policy_id!r}")
        allowed = PARAM_DEFAULTS[self.policy_id]
        extra = [k for k in self.theta if k not in allowed and not k.startswith("bucket")]
        if extra:
            raise ValueError(f"policy {self.policy_id!r} has no parameter {extra[0]!r}")
        full = dict(allowed)
        full.update({k: float(v) for k, v in self.theta.items()})
        self.theta = full
        self.validate()

    def validate(self) -> None:
        th = self.theta
        if "theta_charge" in th and th["theta_charge"] > th["theta_discharge"]:
            raise ValueError("theta_charge must not exceed theta_discharge")
        if self.policy_id == "dla-cfa":
            for k, v in th.items():
                if k.startswith("bucket") and not 0.0 <= v <= 2.0:
                    raise ValueError(f"{k}={v} outside [0, 2]")
        if self.policy_id in ("dla", "dla-cfa") and (th["H"] < 1 or th["H"] != int(th["H"])):
            raise ValueError("H must be a positive integer")
        if self.policy_id in ("cfa-ie", "cfa-ucb", "pfa-boltzmann") and th["theta"] < 0:
            raise ValueError("theta must be >= 0")
        if self.policy_id == "vfa-pfa" and th["weight"] < 0:
            raise ValueError("weight must be >= 0")
        if "divisions" in th and (th["divisions"] < 1 or th["divisions"] != int(th["divisions"])):
            raise ValueError("divisions must be a positive integer")
        if not all(math.isfinite(v) for v in th.values()):
            raise ValueError("parameters must be finite")

    def with_theta(self, **kw) -> "PolicyParams":
        th = dict(self.theta)
        th.update(kw)
        return PolicyParams(self.policy_id, th)

    def buckets(self) -> np.ndarray:
        keys = sorted((k for k in self.theta if k.startswith("bucket")), key=lambda k: int(k[6:]))
        return np.array([self.theta[k] for k in keys])


def zero_policy(s: StorageState, cfg: StorageConfig) -> StorageDecision:
    """No battery or wind use: all demand bought from the grid."""
    return StorageDecision(0.0, max(0.0, s.D), 0.0, 0.0, 0.0)


def make_policy(params: PolicyParams, cfg: StorageConfig, variant: str):
    """Storage policy callable ``policy(state, rng)`` for a parameter set."""
    pid, th = params.policy_id, params.theta
    if pid == "zero":
        return lambda s, rng=None: zero_policy(s, cfg)
    if pid == "pfa-threshold":
        c, d = th["theta_charge"], th["theta_discharge"]
        return lambda s, rng=None: pfa_threshold(s, c, d, cfg)
    if pid == "pfa-affine":
        w = (th["bias"], th["price"], th["level"])
        basis = (lambda s: 1.0, lambda s: s.prices[0], lambda s: s.R)
        return lambda s, rng=None: pfa_affine(s, w, basis, cfg)
    if pid == "vfa":
        w = [th[f"theta{i}"] for i in range(1, 5)]
        div = int(th["divisions"])
        return lambda s, rng=None: vfa_policy(s, w, cfg, div)
    if pid == "vfa-pfa":
        w = [th[f"theta{i}"] for i in range(1, 5)]
        pf = (th["theta_charge"], th["theta_discharge"])
        div = int(th["divisions"])
        return lambda s, rng=None: hybrid_vfa_pfa(s, w, pf, th["weight"], cfg, div)
    if pid == "dla":
        H = int(th["H"])
        return lambda s, rng=None: dla_policy(s, cfg, variant, H)
    if pid == "dla-cfa":
        H = int(th["H"])
        m = bucket_multipliers(params.buckets(), H)
        return lambda s, rng=None: dla_cfa_policy(s, cfg, variant, H, m)
    raise ValueError(f"{pid!r} is a bandit policy, not a storage policy")
