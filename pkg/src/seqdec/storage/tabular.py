"""Discretized storage model for the exact solvers.

The state is (R, p) on a product grid, the action is a charge/hold/discharge
signal mapped to flows with :func:`signal_decision`, demand and wind are
zero, and the next price is drawn i.i.d. from a few levels.  Successor battery
levels snap to the nearest grid point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exact import build_transition_matrix
from .model import StorageConfig, StorageState, contribution, signal_decision

SIGNALS = (-1, 0, 1)


@dataclass
class GridStorage:
    """transition/contribution on (R, p) grid points, in the form build_transition_matrix expects."""

    cfg: StorageConfig

    def _decision(self, s, a):
        R, p = float(s[0]), float(s[1])
        st = StorageState(R, 0.0, 0.0, (p, p, p))
        return st, signal_decision(a, st, self.cfg)

    def transition(self, s, a, w):
        st, x = self._decision(s, a)
        return np.array([st.R + self.cfg.eta * (x.x_gb + x.x_eb - x.x_bd), float(w)])

    def contribution(self, s, a, w):
        st, x = self._decision(s, a)
        return contribution(st, x)


def storage_grid(cfg: StorageConfig, n_R: int, price_levels) -> np.ndarray:
    """Grid rows (R, p), R-major: index = i_R * len(price_levels) + i_p."""
    R = np.linspace(0.0, cfg.r_max, n_R)
    P = np.asarray(price_levels, dtype=float)
    return np.array([(r, p) for r in R for p in P])


def discretized_storage_mdp(cfg: StorageConfig, n_R: int = 11, price_levels=(20.0, 30.0, 40.0), probs=None,
                            gamma: float = 0.95, horizon: int | None = None):
    """(TabularMdp, grid, actions) for the zero-demand arbitrage problem."""
    grid = storage_grid(cfg, n_R, price_levels)
    mdp = build_transition_matrix(GridStorage(cfg), grid, SIGNALS, list(price_levels), probs,
                                  gamma=gamma, horizon=horizon)
    return mdp, grid, SIGNALS
