"""Dense two-phase simplex for small linear programs.

Problems are stated as ``min c.x  s.t.  A x (<=|=|>=) b,  lower <= x <= upper``.
Bounds are handled inside the ratio test (bounded-variable simplex), so a
finite upper bound costs no extra row.  The pivoting loop itself lives in
``seqdec._kernels``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels

# tolerances
PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
BOUND_TOL = 1e-9

SENSES = ("<=", "=", ">=")


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: tuple | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n) if np.size(self.A) else np.zeros((0, n))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = tuple(self.senses)
        m = self.A.shape[0]
        if self.A.ndim != 2 or self.A.shape[1] != n:
            raise ValueError(f"A has shape {self.A.shape}, expected (*, {n})")
        if len(self.senses) != m or self.b.size != m:
            raise ValueError(f"{m} rows but {len(self.senses)} senses and {self.b.size} rhs values")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise ValueError(f"unknown sense {bad[0]!r}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must have one entry per column")
        if np.any(self.lower > self.upper) or np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("invalid variable bounds")
        if self.names is None:
            self.names = tuple(f"x{j}" for j in range(n))
        elif len(self.names) != n:
            raise ValueError("one name per column required")
        self.names = tuple(self.names)

    @property
    def shape(self):
        return self.A.shape

    def dump(self) -> str:
        """Fixed-point text listing: header, names, objective, bounds, then one line per row."""
        fmt = lambda v: "inf" if v == np.inf else "-inf" if v == -np.inf else f"{v:.9f}"
        m, n = self.A.shape
        lines = [f"# lp v1 rows={m} cols={n}", "names: " + " ".join(self.names),
                 "min: " + " ".join(fmt(v) for v in self.c),
                 "lower: " + " ".join(fmt(v) for v in self.lower),
                 "upper: " + " ".join(fmt(v) for v in self.upper)]
        for i in range(m):
            lines.append(f"row {i}: " + " ".join(fmt(v) for v in self.A[i]) + f" {self.senses[i]} {fmt(self.b[i])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "LpProblem":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# lp v1"):
            raise ValueError("line 1: missing '# lp v1' header")

        def field_(ln, key, lineno):
            if not ln.startswith(key + ":"):
                raise ValueError(f"line {lineno}: expected '{key}:'")
            return ln.split(":", 1)[1].split()

        names = field_(lines[1], "names", 2)
        c = [float(v) for v in field_(lines[2], "min", 3)]
        lo = [float(v) for v in field_(lines[3], "lower", 4)]
        hi = [float(v) for v in field_(lines[4], "upper", 5)]
        A, senses, b = [], [], []
        for k, ln in enumerate(lines[5:], start=6):
            toks = ln.split(":", 1)[1].split()
            A.append([float(v) for v in toks[:-2]])
            senses.append(toks[-2])
            b.append(float(toks[-1]))
        return cls(c, np.array(A).reshape(len(A), len(c)), senses, b, lo, hi, names)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    used_bland: bool = False
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _standard_form(p: LpProblem):
    """Shift/flip/split columns so every variable is in [0, ub]."""
    m, n = p.A.shape
    cols, ubs, off = [], [], np.zeros(n)
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            off[j] = lo
            cols.append((j, 1.0))
            ubs.append(hi - lo)
        elif np.isfinite(hi):
            off[j] = hi
            cols.append((j, -1.0))
            ubs.append(np.inf)
        else:
            cols.append((j, 1.0))
            ubs.append(np.inf)
            cols.append((j, -1.0))
            ubs.append(np.inf)
    M = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    return M, np.array(ubs), off


def solve_lp(p: LpProblem, max_iter: int | None = None, bland: bool = False) -> LpSolution:
    m, n = p.A.shape
    M, ub_y, off = _standard_form(p)
    ny = M.shape[1]
    Ay = p.A @ M
    cy = p.c @ M
    b = p.b - p.A @ off

    n_slack = sum(s != "=" for s in p.senses)
    slack = np.zeros((m, n_slack))
    k = 0
    for i, s in enumerate(p.senses):
        if s != "=":
            slack[i, k] = 1.0 if s == "<=" else -1.0
            k += 1
    flip = np.where(b < 0, -1.0, 1.0)
    Ab = np.hstack([Ay, slack]) * flip[:, None]
    b = b * flip

    basis = np.empty(m, dtype=np.int64)
    art_rows = []
    for i in range(m):
        ks = np.flatnonzero(slack[i])
        if ks.size and slack[i, ks[0]] * flip[i] > 0:
            basis[i] = ny + ks[0]
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    art = np.zeros((m, n_art))
    for k, i in enumerate(art_rows):
        art[i, k] = 1.0
        basis[i] = ny + n_slack + k
    A_full = np.hstack([Ab, art])
    ncol = A_full.shape[1]
    upper = np.concatenate([ub_y, np.full(n_slack + n_art, np.inf)])
    T = np.ascontiguousarray(A_full.copy())
    beta = b.copy()
    pos = np.full(ncol, -1, dtype=np.int64)
    pos[basis] = np.arange(m)
    at_upper = np.zeros(ncol, dtype=np.int8)
    limit = max_iter if max_iter is not None else 50 * (m + ncol) + 100
    stall = 3 * (m + ncol)
    iters = 0
    use_bland = int(bland)

    if n_art:
        c1 = np.zeros(ncol)
        c1[ny + n_slack:] = 1.0
        d = c1 - c1[basis] @ T
        status, it, use_bland = _kernels.simplex_iterate(
            T, d, beta, basis, pos, at_upper, upper, use_bland, limit, stall, PIVOT_TOL, OPT_TOL)
        iters += it
        if status == 2:
            return LpSolution("iteration_limit", None, np.nan, iters, used_bland=bool(use_bland))
        infeas = float(beta[basis >= ny + n_slack].sum())
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution("infeasible", None, np.nan, iters, used_bland=bool(use_bland),
                              info={"phase1_objective": infeas})
        upper[ny + n_slack:] = 0.0

    c2 = np.concatenate([cy, np.zeros(n_slack + n_art)])
    d = c2 - c2[basis] @ T
    status, it, use_bland = _kernels.simplex_iterate(
        T, d, beta, basis, pos, at_upper, upper, use_bland, limit, stall, PIVOT_TOL, OPT_TOL)
    iters += it
    if status == 1:
        return LpSolution("unbounded", None, -np.inf, iters, used_bland=bool(use_bland))
    if status == 2:
        return LpSolution("iteration_limit", None, np.nan, iters, used_bland=bool(use_bland))

    z = np.where(at_upper != 0, upper, 0.0)
    z[basis] = beta
    B = A_full[:, basis]
    try:
        # refine basic values against the original columns
        nb = np.ones(ncol, dtype=bool)
        nb[basis] = False
        zb = np.linalg.solve(B, b - A_full[:, nb] @ z[nb]) if m else z[basis]
        if np.all(np.isfinite(zb)) and np.max(np.abs(zb - beta), initial=0.0) < 1e-6 * (1 + np.abs(beta).max(initial=0.0)):
            z[basis] = zb
        pi = np.linalg.solve(B.T, c2[basis]) if m else np.zeros(0)
    except np.linalg.LinAlgError:
        pi = np.full(m, np.nan)
    # clamp round-off against bounds
    ub_all = upper
    near = (z < 0) & (z > -FEAS_TOL)
    z[near] = 0.0
    over = (z > ub_all) & (z < ub_all + FEAS_TOL)
    z[over] = ub_all[over]
    x = off + M @ z[:ny]
    x = np.minimum(np.maximum(x, p.lower), p.upper)
    duals = pi * flip
    reduced = p.c - p.A.T @ duals if m else p.c.copy()
    return LpSolution("optimal", x, float(p.c @ x), iters, duals, reduced, used_bland=bool(use_bland))
