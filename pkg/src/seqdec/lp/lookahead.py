"""Time-staged lookahead LP for the storage problem.

Columns are period-major, seven per period k = 0..K-1, in the order

    gb+  gb-  gd  eb  ed  bd  R~

where gb+ / gb- split the signed grid<->battery flow and R~ is the battery
level at the start of period k+1.  Each period contributes six rows:

    R~_k - eta (gb+ - gb- + eb - bd) - R~_{k-1} = 0      (R_t on the rhs for k=0)
    gd + ed + bd                                  = D_k
    eb + ed                                      <= theta_k E_k   (theta_0 = 1)
    bd - R~_{k-1}                                <= 0             (bd <= R_t for k=0)
    gb+ - gb- + eb                               <= charge rate
    bd + gb-                                     <= discharge rate

so a K-period problem has 7K columns and 6K rows.  The objective minimises
the net grid spend  sum_k p_k (gb+ - gb- + gd),  the negative of the summed
contributions.
"""
from __future__ import annotations

import numpy as np

from .simplex import LpProblem, LpSolution, solve_lp

FLOWS = ("gb+", "gb-", "gd", "eb", "ed", "bd", "R")
NCOL = len(FLOWS)
NROW = 6


class LookaheadUnbounded(RuntimeError):
    pass


def lookahead_shape(K: int) -> tuple[int, int]:
    """(rows, columns) of a K-period lookahead."""
    return NROW * K, NCOL * K


def assemble_lookahead(R0: float, cfg, wind, demand, prices, multipliers=None) -> LpProblem:
    """Build the K-period lookahead LP; K is the common length of the row vectors.

    ``multipliers[tau - 1]`` scales the wind cap at lead time tau >= 1; the
    current period always uses the observed wind.
    """
    wind = np.asarray(wind, dtype=float)
    demand = np.asarray(demand, dtype=float)
    prices = np.asarray(prices, dtype=float)
    K = wind.size
    if K < 1 or demand.size != K or prices.size != K:
        raise ValueError("wind, demand and price rows must share a length >= 1")
    if multipliers is not None:
        multipliers = np.asarray(multipliers, dtype=float)
        if multipliers.size < K - 1:
            raise ValueError(f"need {K - 1} multipliers, got {multipliers.size}")
    eta = cfg.eta
    m, n = lookahead_shape(K)
    A = np.zeros((m, n))
    b = np.zeros(m)
    c = np.zeros(n)
    lower = np.zeros(n)
    upper = np.empty(n)
    senses = []
    names = []
    for k in range(K):
        j = NCOL * k
        gbp, gbm, gd, eb, ed, bd, rn = range(j, j + NCOL)
        names += [f"{f}[{k}]" for f in FLOWS]
        upper[j:j + NCOL] = (cfg.charge_rate, cfg.discharge_rate, np.inf, cfg.charge_rate, np.inf,
                             cfg.discharge_rate, cfg.r_max)
        c[gbp], c[gbm], c[gd] = prices[k], -prices[k], prices[k]
        i = NROW * k
        # battery recursion
        A[i, rn] = 1.0
        A[i, gbp], A[i, gbm], A[i, eb], A[i, bd] = -eta, eta, -eta, eta
        if k:
            A[i, rn - NCOL] = -1.0
        else:
            b[i] = R0
        # demand
        A[i + 1, gd] = A[i + 1, ed] = A[i + 1, bd] = 1.0
        b[i + 1] = demand[k]
        # wind cap
        A[i + 2, eb] = A[i + 2, ed] = 1.0
        b[i + 2] = wind[k] if (k == 0 or multipliers is None) else multipliers[k - 1] * wind[k]
        # battery availability
        A[i + 3, bd] = 1.0
        if k:
            A[i + 3, rn - NCOL] = -1.0
        else:
            b[i + 3] = R0
        # rates
        A[i + 4, gbp], A[i + 4, gbm], A[i + 4, eb] = 1.0, -1.0, 1.0
        b[i + 4] = cfg.charge_rate
        A[i + 5, bd] = A[i + 5, gbm] = 1.0
        b[i + 5] = cfg.discharge_rate
        senses += ["=", "=", "<=", "<=", "<=", "<="]
    return LpProblem(c, A, senses, b, lower, upper, names)


def solve_lookahead(p: LpProblem) -> LpSolution:
    sol = solve_lp(p)
    if sol.status == "unbounded":
        raise LookaheadUnbounded("lookahead LP is unbounded; check capacity and rate limits")
    if not sol.optimal:
        raise RuntimeError(f"lookahead LP ended with status {sol.status}")
    return sol


def first_period(x: np.ndarray) -> tuple[float, float, float, float, float]:
    """(x_GB, x_GD, x_EB, x_ED, x_BD) of period 0 from an LP solution vector."""
    gbp, gbm, gd, eb, ed, bd = (float(v) for v in x[:6])
    return gbp - gbm, gd, eb, ed, bd


def period_flows(x: np.ndarray, K: int) -> np.ndarray:
    """K x 5 array of (x_GB, x_GD, x_EB, x_ED, x_BD)."""
    X = np.asarray(x, dtype=float).reshape(K, NCOL)
    return np.column_stack([X[:, 0] - X[:, 1], X[:, 2], X[:, 3], X[:, 4], X[:, 5]])
