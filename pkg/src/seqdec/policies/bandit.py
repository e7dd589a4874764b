"""Arm-selection policies for multi-armed bandits.

Every selector has the form ``selector(belief, rng) -> arm`` and breaks ties
toward the lowest arm index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BanditBelief:
    """Running per-arm sample means, standard errors and counts.

    With a known noise level the standard error is ``noise / sqrt(N_x)``;
    otherwise it comes from the sample variance (infinite below two samples).
    """

    mu: np.ndarray
    counts: np.ndarray
    sumsq: np.ndarray
    noise: float | None = None

    @classmethod
    def new(cls, K: int, noise: float | None = None, prior_mean: float = 0.0) -> "BanditBelief":
        if K < 1:
            raise ValueError("need at least one arm")
        return cls(np.full(K, float(prior_mean)), np.zeros(K, dtype=np.int64), np.zeros(K), noise)

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def stderr(self) -> np.ndarray:
        N = self.counts.astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.noise is not None:
                return np.where(N > 0, self.noise / np.sqrt(N), np.inf)
            var = np.where(N > 1, self.sumsq / np.maximum(N - 1, 1), np.inf)
            return np.sqrt(var / np.maximum(N, 1))

    def update(self, arm: int, y: float) -> None:
        """Welford update of arm ``arm`` with observation ``y`` (in place)."""
        n = self.counts[arm] + 1
        delta = y - (self.mu[arm] if self.counts[arm] else 0.0)
        mean = y if n == 1 else self.mu[arm] + delta / n
        if n > 1:
            self.sumsq[arm] += delta * (y - mean)
        self.mu[arm] = mean
        self.counts[arm] = n

    def copy(self) -> "BanditBelief":
        return BanditBelief(self.mu.copy(), self.counts.copy(), self.sumsq.copy(), self.noise)


def _first_unsampled(b: BanditBelief) -> int | None:
    idx = np.flatnonzero(b.counts == 0)
    return int(idx[0]) if idx.size else None


def greedy(b: BanditBelief, rng=None) -> int:
    """Unsampled arms first, then argmax of the sample means."""
    a = _first_unsampled(b)
    return a if a is not None else int(np.argmax(b.mu))


def cfa_interval_estimation(b: BanditBelief, theta: float, rng=None) -> int:
    """argmax mu_x + theta * stderr_x, after sampling every arm once (least-sampled first)."""
    a = _first_unsampled(b)
    if a is not None:
        return a
    if theta == 0:
        return int(np.argmax(b.mu))
    return int(np.argmax(b.mu + theta * b.stderr))


def cfa_ucb(b: BanditBelief, theta: float, rng=None) -> int:
    """argmax mu_a + theta sqrt(ln n / N_a); unsampled arms first."""
    a = _first_unsampled(b)
    if a is not None:
        return a
    if theta == 0:
        return int(np.argmax(b.mu))
    return int(np.argmax(b.mu + theta * np.sqrt(math.log(b.n) / b.counts)))


def boltzmann_probabilities(mu, theta: float) -> np.ndarray:
    z = theta * (np.asarray(mu, dtype=float) - np.max(mu))
    w = np.exp(z)
    return w / w.sum()


def pfa_boltzmann(b: BanditBelief, theta: float, rng: np.random.Generator) -> int:
    """Sample arm a with probability proportional to exp(theta * mu_a) (max-shifted)."""
    if theta < 0:
        raise ValueError("Boltzmann parameter must be >= 0")
    cdf = np.cumsum(boltzmann_probabilities(b.mu, theta))
    a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(a, b.K - 1)


def make_selector(policy_id: str, theta: float = 0.0):
    """Bandit selector by stable id: greedy, cfa-ie, cfa-ucb, pfa-boltzmann."""
    if policy_id == "greedy":
        return greedy
    if policy_id == "cfa-ie":
        return lambda b, rng=None: cfa_interval_estimation(b, theta)
    if policy_id == "cfa-ucb":
        return lambda b, rng=None: cfa_ucb(b, theta)
    if policy_id == "pfa-boltzmann":
        return lambda b, rng: pfa_boltzmann(b, theta, rng)
    raise ValueError(f"unknown bandit policy {policy_id!r}")
