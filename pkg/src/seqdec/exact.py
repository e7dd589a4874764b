"""Exact solvers for small problems: tabular MDPs and finite-horizon LQR.

These serve as oracles for the approximate policies.  Every argmax breaks
ties toward the lowest action index.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .core import period_rng, TRAINING


class OutsideGridError(ValueError):
    pass


@dataclass(eq=False)
class TabularMdp:
    """Finite MDP: P[s, a, s'], r[s, a], discount and (optional) finite horizon T."""

    P: np.ndarray
    r: np.ndarray
    gamma: float = 1.0
    horizon: int | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError(f"P must have shape (S, A, S), got {self.P.shape}")
        if self.r.shape != self.P.shape[:2]:
            raise ValueError(f"r must have shape {self.P.shape[:2]}, got {self.r.shape}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if np.any(self.P < 0):
            raise ValueError("negative transition probability")
        bad = np.abs(self.P.sum(axis=2) - 1.0) > 1e-9
        if bad.any():
            s, a = np.argwhere(bad)[0]
            raise ValueError(f"p[{s}][{a}] sums to {self.P[s, a].sum()!r}")
        if not np.all(np.isfinite(self.r)):
            raise ValueError("rewards must be finite")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be >= 0")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def dumps(self) -> str:
        """Plain-text form: header lines, then rewards (one state per line), then row-major probabilities."""
        S, A = self.r.shape
        lines = ["# tabular-mdp v1", f"states {S}", f"actions {A}", f"discount {self.gamma!r}",
                 f"horizon {'stationary' if self.horizon is None else self.horizon}", "rewards"]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.r]
        lines.append("transitions")
        for s in range(S):
            for a in range(A):
                lines.append(" ".join(repr(float(v)) for v in self.P[s, a]))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TabularMdp":
        lines = [ln.strip() for ln in text.splitlines()]
        if not lines or lines[0] != "# tabular-mdp v1":
            raise ValueError("line 1: expected '# tabular-mdp v1'")

        def keyed(i, key):
            parts = lines[i].split()
            if len(parts) != 2 or parts[0] != key:
                raise ValueError(f"line {i + 1}: expected '{key} <value>'")
            return parts[1]

        S, A = int(keyed(1, "states")), int(keyed(2, "actions"))
        gamma = float(keyed(3, "discount"))
        h = keyed(4, "horizon")
        horizon = None if h == "stationary" else int(h)
        if lines[5] != "rewards":
            raise ValueError("line 6: expected 'rewards'")
        r = np.array([[float(v) for v in lines[6 + s].split()] for s in range(S)])
        k = 6 + S
        if lines[k] != "transitions":
            raise ValueError(f"line {k + 1}: expected 'transitions'")
        rows = [[float(v) for v in lines[k + 1 + i].split()] for i in range(S * A)]
        return cls(np.array(rows).reshape(S, A, S), r.reshape(S, A), gamma, horizon)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "TabularMdp":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def snap(point, grid: np.ndarray) -> int:
    """Index of the nearest grid point; equidistant candidates resolve to the lowest index."""
    d = np.sum((grid - np.asarray(point, dtype=float).reshape(1, -1)) ** 2, axis=1)
    return int(np.argmin(d))


def build_transition_matrix(model, state_grid, action_grid: Sequence, support: Sequence, probs=None,
                            gamma: float = 1.0, horizon: int | None = None, hull_tol: float = 1e-9) -> TabularMdp:
    """One-step transition matrix of ``model`` on a grid.

    ``model`` needs ``transition(s, a, w)`` and ``contribution(s, a, w)``;
    states are passed as the grid rows.  p[s][a][s'] accumulates prob(w) for
    every support point whose successor snaps to s'; r[s][a] is the expected
    contribution.
    """
    grid = np.asarray(state_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    probs = np.full(len(support), 1.0 / len(support)) if probs is None else np.asarray(probs, dtype=float)
    if probs.size != len(support) or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
        raise ValueError("support probabilities must be nonnegative and sum to 1")
    lo, hi = grid.min(axis=0), grid.max(axis=0)
    S, A = grid.shape[0], len(action_grid)
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    scalar = grid.shape[1] == 1
    for i in range(S):
        s = float(grid[i, 0]) if scalar else grid[i].copy()
        for a, act in enumerate(action_grid):
            for w, pw in zip(support, probs):
                nxt = np.atleast_1d(np.asarray(model.transition(s, act, w), dtype=float))
                if np.any(nxt < lo - hull_tol) or np.any(nxt > hi + hull_tol):
                    raise OutsideGridError(f"transition leaves the grid hull: state {s!r}, action {act!r}, "
                                           f"outcome {w!r} -> {nxt.tolist()}")
                P[i, a, snap(nxt, grid)] += pw
                r[i, a] += pw * float(model.contribution(s, act, w))
    # renormalise accumulated round-off
    P /= P.sum(axis=2, keepdims=True)
    return TabularMdp(P, r, gamma, horizon)


@dataclass
class DpResult:
    V: np.ndarray       # (T+2, S); the last row is V_{T+1} = 0
    policy: np.ndarray  # (T+1, S)
    Q: np.ndarray       # (T+1, S, A)


def backward_dp(mdp: TabularMdp, horizon: int | None = None) -> DpResult:
    """Finite-horizon Bellman recursion over stages 0..T with V_{T+1} = 0."""
    T = mdp.horizon if horizon is None else horizon
    if T is None:
        raise ValueError("backward_dp needs a finite horizon")
    S, A = mdp.r.shape
    V = np.zeros((T + 2, S))
    Q = np.zeros((T + 1, S, A))
    pol = np.zeros((T + 1, S), dtype=np.int64)
    for t in range(T, -1, -1):
        Q[t] = mdp.r + mdp.gamma * (mdp.P @ V[t + 1])
        pol[t] = np.argmax(Q[t], axis=1)
        V[t] = Q[t][np.arange(S), pol[t]]
    return DpResult(V, pol, Q)


@dataclass
class ViResult:
    V: np.ndarray
    policy: np.ndarray
    sweeps: int
    deltas: list


def value_iteration(mdp: TabularMdp, tol: float = 1e-8, max_sweeps: int = 1_000_000, V0=None) -> ViResult:
    """Synchronous value iteration; stops once the sup-norm change is <= tol."""
    if mdp.gamma >= 1.0:
        raise ValueError("value iteration needs a discount < 1")
    V = np.zeros(mdp.n_states) if V0 is None else np.asarray(V0, dtype=float).copy()
    deltas = []
    for k in range(1, max_sweeps + 1):
        Vn = np.max(mdp.r + mdp.gamma * (mdp.P @ V), axis=1)
        delta = float(np.max(np.abs(Vn - V)))
        deltas.append(delta)
        V = Vn
        if delta <= tol:
            break
    pol = np.argmax(mdp.r + mdp.gamma * (mdp.P @ V), axis=1)
    return ViResult(V, pol, k, deltas)


def policy_values(mdp: TabularMdp, policy) -> np.ndarray:
    """Exact value of a stationary deterministic policy: solve (I - gamma P_pi) v = r_pi."""
    S = mdp.n_states
    pol = np.asarray(policy, dtype=np.int64)
    P = mdp.P[np.arange(S), pol]
    r = mdp.r[np.arange(S), pol]
    return np.linalg.solve(np.eye(S) - mdp.gamma * P, r)


# ---------------------------------------------------------------------------
# Q-learning


@dataclass
class QTable:
    q: np.ndarray
    counts: np.ndarray
    state: int = 0

    def greedy(self) -> np.ndarray:
        return np.argmax(self.q, axis=1)

    def values(self) -> np.ndarray:
        return self.q.max(axis=1)

    def within_bound(self, r_max: float, gamma: float) -> bool:
        """Divergence monitor: |Q| <= r_max / (1 - gamma)."""
        if gamma >= 1.0:
            return bool(np.all(np.isfinite(self.q)))
        return bool(np.all(np.abs(self.q) <= r_max / (1.0 - gamma) * (1 + 1e-12)))


def _schedule(fn, n: int, offset: int = 0) -> np.ndarray:
    if callable(fn):
        return np.array([float(fn(k)) for k in range(offset, offset + n)])
    return np.full(n, float(fn))


def q_learning(env, n_steps: int, alpha, epsilon, gamma: float | None = None, seed: int = 0,
               episode_length: int = 0, s0: int = 0, n_states: int | None = None,
               n_actions: int | None = None, q0=None) -> QTable:
    """Tabular epsilon-greedy Q-learning.

    ``alpha(n)`` is the stepsize for the n-th update of a state-action pair
    (n starts at 1) and ``epsilon(k)`` the exploration rate at global step k;
    constants are accepted for both.  ``env`` is either a :class:`TabularMdp`
    (sampled with pre-drawn uniforms by the compiled kernel when available) or
    a callable ``env(s, a, rng) -> (reward, next_state)``.  Every
    ``episode_length`` steps the state restarts uniformly at random.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    rng = period_rng(seed, 0, 0, TRAINING)
    if isinstance(env, TabularMdp):
        S, A = env.n_states, env.n_actions
        gamma = env.gamma if gamma is None else gamma
    else:
        if n_states is None or n_actions is None:
            raise ValueError("n_states and n_actions are required for a callable env")
        S, A = n_states, n_actions
        if gamma is None:
            raise ValueError("gamma is required for a callable env")
    Q = np.zeros((S, A)) if q0 is None else np.array(q0, dtype=float)
    N = np.zeros((S, A), dtype=np.int64)
    u = rng.random((n_steps, 3))
    restarts = rng.integers(0, S, size=n_steps).astype(np.int64)
    # stepsizes indexed by visit count; a pair can be visited at most n_steps times
    alphas = _schedule(alpha, n_steps + 1)
    eps = _schedule(epsilon, n_steps)
    if isinstance(env, TabularMdp):
        cdf = np.ascontiguousarray(np.cumsum(env.P, axis=2))
        last = np.ascontiguousarray(np.argmax(np.where(env.P > 0, np.arange(S), -1), axis=2).astype(np.int64))
        s = _kernels.q_learning_loop(cdf, last, np.ascontiguousarray(env.r), float(gamma), alphas, eps, u,
                                     restarts, int(episode_length), int(s0), Q, N)
        return QTable(Q, N, int(s))
    s = int(s0)
    for k in range(n_steps):
        if episode_length > 0 and k > 0 and k % episode_length == 0:
            s = int(restarts[k])
        if u[k, 0] < eps[k]:
            a = min(int(u[k, 1] * A), A - 1)
        else:
            a = int(np.argmax(Q[s]))
        reward, nxt = env(s, a, period_rng(seed, 1, k, TRAINING))
        N[s, a] += 1
        step = alphas[N[s, a]]
        Q[s, a] = (1.0 - step) * Q[s, a] + step * (reward + gamma * Q[nxt].max())
        s = int(nxt)
    return QTable(Q, N, s)


def q_learning_sweeps(mdp: TabularMdp, n_sweeps: int, alpha: float = 1.0, q0=None) -> QTable:
    """Synchronous Q-learning: every pair updated once per sweep from the previous sweep's table.

    Requires a deterministic MDP (each p[s][a] a unit row).
    """
    S, A = mdp.r.shape
    nxt = np.argmax(mdp.P, axis=2)
    if not np.all(mdp.P[np.arange(S)[:, None], np.arange(A)[None, :], nxt] == 1.0):
        raise ValueError("sweeps need a deterministic transition matrix")
    Q = np.zeros((S, A)) if q0 is None else np.array(q0, dtype=float)
    N = np.zeros((S, A), dtype=np.int64)
    for _ in range(n_sweeps):
        target = mdp.r + mdp.gamma * Q.max(axis=1)[nxt]
        Q = (1.0 - alpha) * Q + alpha * target
        N += 1
    return QTable(Q, N)


# ---------------------------------------------------------------------------
# LQR


def _check_psd(M, name, strict):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be square and symmetric")
    try:
        # shift by a hair for PSD so that singular-but-valid costs pass the Cholesky test
        np.linalg.cholesky(M if strict else M + 1e-12 * np.eye(M.shape[0]) * max(1.0, np.abs(M).max()))
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be {'positive definite' if strict else 'positive semidefinite'}") from None
    return M


@dataclass
class LqrSystem:
    """x_{t+1} = A x_t + B u_t + w_t with cost sum x'Qx + u'Ru over t < T plus x_T' Q_T x_T."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    horizon: int
    Sigma: np.ndarray | None = None
    Q_T: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        self.Q = _check_psd(self.Q, "Q", strict=False)
        self.R = _check_psd(self.R, "R", strict=True)
        self.Q_T = self.Q if self.Q_T is None else _check_psd(self.Q_T, "Q_T", strict=False)
        self.Sigma = np.zeros((n, n)) if self.Sigma is None else _check_psd(self.Sigma, "Sigma", strict=False)
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.R.shape[0] != self.B.shape[1]:
            raise ValueError("inconsistent LQR dimensions")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")


@dataclass
class LqrSolution:
    K: list      # gains K_0..K_{T-1}; u_t = K_t x_t
    P: list      # cost-to-go matrices P_0..P_T
    offset: list  # additive noise cost c_0..c_T


def lqr_riccati(sys: LqrSystem) -> LqrSolution:
    """Backward Riccati recursion from P_T = Q_T.

    K_t = -(R + B'P_{t+1}B)^{-1} B'P_{t+1}A,
    P_t = Q + A'P_{t+1}A + A'P_{t+1}B K_t.
    The noise covariance only enters the additive offset, never the gains.
    """
    A, B = sys.A, sys.B
    T = sys.horizon
    P = [None] * (T + 1)
    K = [None] * T
    c = [0.0] * (T + 1)
    P[T] = sys.Q_T.copy()
    for t in range(T - 1, -1, -1):
        Pn = P[t + 1]
        S = sys.R + B.T @ Pn @ B
        try:
            L = np.linalg.cholesky(0.5 * (S + S.T))
        except np.linalg.LinAlgError:
            raise ValueError(f"R + B'PB is not positive definite at t={t}") from None
        rhs = B.T @ Pn @ A
        K[t] = -np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        Pt = sys.Q + A.T @ Pn @ A + A.T @ Pn @ B @ K[t]
        P[t] = 0.5 * (Pt + Pt.T)
        c[t] = c[t + 1] + float(np.trace(Pn @ sys.Sigma))
    return LqrSolution(K, P, c)


def lqr_cost(sol: LqrSolution, x0) -> float:
    """Expected cost-to-go from x0 at t=0."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return float(x0 @ sol.P[0] @ x0 + sol.offset[0])
