"""Exogenous information for the storage models.

Wind, demand and price generators, the recursive-least-squares belief update
used by the learning variants, and the rolling wind-forecast error model.

Every call to :func:`sample_exogenous` consumes exactly three standard normals
(wind, demand, price) followed by ``H`` more for the forecast variant, so two
policies simulated with the same period streams see identical noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class PriceDataUnderrun(RuntimeError):
    """Raised when a price replay runs out of data."""

    def __init__(self, period: int, available: int):
        self.period = period
        super().__init__(f"price data underrun at period {period} ({available} prices available)")


class ExoSample(NamedTuple):
    """W_{t+1} = (E_hat, D_hat, p_hat[, forecast errors]).

    For the forecast variant ``e_hat`` is the one-step forecast error that
    drives E_{t+1}; otherwise it is the change in wind.  ``p_hat`` is the
    observed price for price-taking variants and the price innovation for the
    autoregressive ones.
    """

    e_hat: float
    d_hat: float
    p_hat: float
    forecast_errors: tuple | None = None


# ---------------------------------------------------------------------------
# demand profile


def demand_baseline(t: int, mean: float, amplitude: float, period: int = 24) -> float:
    return mean + amplitude * math.sin(2.0 * math.pi * t / period)


def demand_drift(t: int, mean: float, amplitude: float, period: int = 24) -> float:
    """Deterministic part of D_hat_{t+1}: change of the baseline from t to t+1."""
    return demand_baseline(t + 1, mean, amplitude, period) - demand_baseline(t, mean, amplitude, period)


# ---------------------------------------------------------------------------
# price replay files


def read_price_file(path) -> np.ndarray:
    """Read a ``# price`` file (one price per line); errors carry the line number."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return parse_prices(lines, source=str(path))


def parse_prices(lines: Sequence[str], source: str = "<prices>") -> np.ndarray:
    if not lines or lines[0].strip() != "# price":
        raise ValueError(f"{source}:1: expected header '# price'")
    out = []
    for k, ln in enumerate(lines[1:], start=2):
        txt = ln.strip()
        if not txt:
            continue
        try:
            v = float(txt)
        except ValueError:
            raise ValueError(f"{source}:{k}: cannot parse price {txt!r}") from None
        if not math.isfinite(v):
            raise ValueError(f"{source}:{k}: price must be finite")
        out.append(v)
    return np.array(out)


def write_price_file(path, prices) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# price\n")
        for p in prices:
            fh.write(f"{float(p)!r}\n")


# ---------------------------------------------------------------------------
# recursive least squares


@dataclass(frozen=True, eq=False)
class RlsBelief:
    """Coefficient estimate theta_bar and its scaled covariance M."""

    theta: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float).ravel()
        M = np.asarray(self.M, dtype=float)
        if M.shape != (th.size, th.size):
            raise ValueError(f"M has shape {M.shape}, expected {(th.size, th.size)}")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "M", M)

    @classmethod
    def prior(cls, n: int, scale: float = 100.0) -> "RlsBelief":
        return cls(np.zeros(n), scale * np.eye(n))

    def predict(self, features) -> float:
        return _dot(np.asarray(features, dtype=float), self.theta)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.M.ravel()])

    def __eq__(self, other):
        return (isinstance(other, RlsBelief) and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.M, other.M))


def _dot(a, b) -> float:
    # sequential accumulation: appending a zero feature leaves the result unchanged bit-for-bit
    acc = 0.0
    for u, v in zip(a.tolist(), b.tolist()):
        acc += u * v
    return acc


def rls_update(b: RlsBelief, features, y: float, literal: bool = False, step: float = 1.0):
    """One recursive-least-squares step.

    eps = features.theta - y (prediction minus observation),
    gamma = 1 + features' M features, theta' = theta - step/gamma M features eps,
    M' = M - (1/gamma) (M features)(M features)'.

    ``literal=True`` uses gamma = 1 - features' M features and the ``+`` sign on
    the coefficient update, for comparison only.  ``step`` scales the
    coefficient correction (1 gives textbook RLS).

    Returns (belief, gamma, eps).
    """
    p = np.asarray(features, dtype=float).ravel()
    if p.size != b.theta.size:
        raise ValueError(f"{p.size} features for {b.theta.size} coefficients")
    if not np.all(np.isfinite(b.M)):
        raise ValueError("M is not finite")
    Mp = (b.M * p).sum(axis=1)
    quad = _dot(p, Mp)
    gamma = 1.0 - quad if literal else 1.0 + quad
    if abs(gamma) < 1e-12:
        raise ValueError("degenerate update")
    eps = _dot(p, b.theta) - float(y)
    sign = 1.0 if literal else -1.0
    theta = b.theta + sign * (step / gamma) * Mp * eps
    M = b.M - np.outer(Mp, Mp) / gamma
    M = 0.5 * (M + M.T)
    return RlsBelief(theta, M), gamma, eps


# ---------------------------------------------------------------------------
# rolling forecasts


def forecast_errors(H: int, sigma: float, z) -> np.ndarray:
    """Scale standard normals so error i (lead i+1) has variance (i+1) sigma^2."""
    z = np.asarray(z, dtype=float)[:H]
    return np.sqrt(np.arange(1, H + 1)) * sigma * z


def roll_forecast(f, errors):
    """Apply given errors: E' = max(0, f[0] + e[0]); f'[k] = max(0, f[k+1] + e[k+1]); last entry held flat."""
    f = np.asarray(f, dtype=float)
    H = f.size
    if H < 1:
        raise ValueError("forecast horizon must be >= 1")
    e = np.asarray(errors, dtype=float)
    E_next = max(0.0, float(f[0] + e[0]))
    new = np.empty(H)
    if H > 1:
        new[:-1] = np.maximum(0.0, f[1:] + e[1:H])
    new[-1] = f[-1]
    return E_next, new


def forecast_roll(f, sigma_f: float, rng: np.random.Generator):
    """Draw forecast errors from ``rng`` and roll the forecast vector one period."""
    f = np.asarray(f, dtype=float)
    e = forecast_errors(f.size, sigma_f, rng.standard_normal(f.size))
    return roll_forecast(f, e)


# ---------------------------------------------------------------------------
# exogenous sampler for the storage variants


def sample_exogenous(cfg, variant: str, s, x, rng: np.random.Generator) -> ExoSample:
    """Draw W_{t+1} given the pre-decision state ``s`` and decision ``x``.

    Price handling by variant: ``base`` observes the next price directly (a
    seasonal price around ``price_mean``, or the next entry of
    ``cfg.price_data`` when replaying); the autoregressive variants receive an
    innovation ``price_intercept + sigma_price * z``, and ``active`` adds
    ``theta3 * x_GB`` to it.
    """
    z = rng.standard_normal(3)
    e_hat = cfg.sigma_wind * float(z[0])
    d_hat = demand_drift(s.t, cfg.demand_mean, cfg.demand_amplitude, cfg.demand_period) + cfg.sigma_demand * float(z[1])
    if variant == "base":
        if cfg.price_data is not None:
            if s.t >= len(cfg.price_data):
                raise PriceDataUnderrun(s.t, len(cfg.price_data))
            p_hat = float(cfg.price_data[s.t])
        else:
            p_hat = (cfg.price_mean + cfg.price_amplitude * math.sin(2.0 * math.pi * (s.t + 1) / cfg.demand_period)
                     + cfg.sigma_price * float(z[2]))
    else:
        p_hat = cfg.price_intercept + cfg.sigma_price * float(z[2])
        if variant == "active":
            p_hat = p_hat + cfg.theta3 * float(x.x_gb)
    errs = None
    if variant == "forecast":
        H = cfg.forecast_horizon
        errs = tuple(forecast_errors(H, cfg.sigma_forecast, rng.standard_normal(H)).tolist())
        e_hat = errs[0]
    return ExoSample(e_hat, d_hat, p_hat, errs)
