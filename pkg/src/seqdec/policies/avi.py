"""Approximate value iteration around the post-decision state.

A linear model V(post-state) = theta . phi(s, x) is fitted by stepping
forward through the model: at each state the greedy value
v_hat = max_x C(s, x) + theta . phi(s, x) becomes the regression target for
the post-decision features of the previous step, and theta is corrected by
an RLS step scaled by the stepsize alpha_n.  The terminal post-decision
state is regressed on zero.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import TRAINING, SequentialModel, period_rng
from ..processes import RlsBelief, rls_update
from ..storage.model import StorageConfig, StorageDecision
from .storage import decision_grid, grid_contributions, vfa_features


class AviDivergence(RuntimeError):
    def __init__(self, iteration: int, period: int, theta: np.ndarray):
        self.iteration, self.period, self.theta = iteration, period, theta
        super().__init__(f"AVI diverged at iteration {iteration}, period {period}: "
                         f"||theta|| = {np.linalg.norm(theta):.3g} > 1e6 (theta = {np.array2string(theta, precision=3)})")


def vfa_train_avi(model: SequentialModel, candidates: Callable, stepsize: Callable, n_iters: int, seed: int = 0,
                  epsilon: float = 0.1, theta0=None, prior: float = 100.0, n_features: int | None = None,
                  trace: list | None = None) -> np.ndarray:
    """Fit value-function weights by forward passes.

    ``candidates(s)`` returns ``(decisions, contributions, Phi)``: the
    decisions considered at s, their contributions C(s, x) and the
    post-decision feature rows.  ``stepsize(n)`` gives alpha for iteration
    n = 1, 2, ...  Exploration is epsilon-greedy.  All randomness comes from
    the TRAINING stream family of ``seed``.
    """
    if n_iters < 0:
        raise ValueError("n_iters must be >= 0")
    if theta0 is None:
        if n_features is None:
            _, _, Phi = candidates(model.initial_state)
            n_features = Phi.shape[1]
        theta0 = np.zeros(n_features)
    belief = RlsBelief(np.asarray(theta0, dtype=float).copy(), prior * np.eye(len(theta0)))
    for n in range(1, n_iters + 1):
        alpha = float(stepsize(n))
        s = model.initial_state
        prev = None
        for t in range(model.horizon):
            decs, C, Phi = candidates(s)
            vals = C + Phi @ belief.theta
            best = int(np.argmax(vals))
            if prev is not None:
                belief, _, _ = rls_update(belief, prev, vals[best], step=alpha)
            rng = period_rng(seed, 2 * n, t, TRAINING)
            a = best
            if rng.random() < epsilon:
                a = int(rng.integers(len(decs)))
            x = decs[a]
            prev = Phi[a]
            w = model.exogenous(s, x, period_rng(seed, 2 * n + 1, t, TRAINING))
            s = model.transition(s, x, w)
            if not np.all(np.isfinite(belief.theta)) or np.linalg.norm(belief.theta) > 1e6:
                raise AviDivergence(n, t, belief.theta)
        if prev is not None:
            belief, _, _ = rls_update(belief, prev, 0.0, step=alpha)
        if not np.all(np.isfinite(belief.theta)) or np.linalg.norm(belief.theta) > 1e6:
            raise AviDivergence(n, model.horizon, belief.theta)
        if trace is not None:
            trace.append(belief.theta.copy())
    return belief.theta


def storage_candidates(cfg: StorageConfig, divisions: int = 5):
    """Candidate generator for the storage VFA basis."""

    def candidates(s):
        X = decision_grid(s, cfg, divisions)
        decs = [StorageDecision(*row) for row in X.tolist()]
        return decs, grid_contributions(s, X), vfa_features(s, X, cfg)

    return candidates
