import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from seqdec import _kernels
from seqdec.lp import LpProblem, solve_lp
from seqdec.lp.lookahead import (FLOWS, LookaheadUnbounded, assemble_lookahead, first_period, lookahead_shape,
                                 period_flows, solve_lookahead)
from seqdec.storage.model import StorageConfig

from oracles import lp_vertex_optimum, random_bounded_lp


def test_box_lp():
    sol = solve_lp(LpProblem([-1, -1], [[1, 0], [0, 1]], ["<=", "<="], [1, 2]))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-3)
    np.testing.assert_allclose(sol.x, [1, 2])


def test_infeasible_pair():
    sol = solve_lp(LpProblem([1], [[1], [1]], [">=", "<="], [2, 1]))
    assert sol.status == "infeasible"


def test_unbounded():
    sol = solve_lp(LpProblem([-1, 0], [[1, -1]], ["<="], [1]))
    assert sol.status == "unbounded"


def test_free_and_negative_columns():
    # min x0 - x1 with x0 free, x1 <= 3 (no lower), x0 + x1 = 1, x0 >= -4
    p = LpProblem([1, -1], [[1, 1], [1, 0]], ["=", ">="], [1, -4], lower=[-np.inf, -np.inf], upper=[np.inf, 3])
    sol = solve_lp(p)
    ref = linprog(p.c, A_ub=[[-1, 0]], b_ub=[4], A_eq=[[1, 1]], b_eq=[1], bounds=[(None, None), (None, 3)])
    assert sol.objective == pytest.approx(ref.fun)


def test_dimension_checks():
    with pytest.raises(ValueError):
        LpProblem([1, 2], [[1, 2, 3]], ["<="], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], ["<="], [1, 2])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], ["<"], [1])
    with pytest.raises(ValueError):
        LpProblem([1], [[1]], ["<="], [1], lower=[2], upper=[1])


def test_dump_parse_round_trip():
    p = random_bounded_lp(np.random.default_rng(0), 4, 3, integer=True)
    q = LpProblem.parse(p.dump())
    assert q.dump() == p.dump()
    assert q.senses == p.senses and q.names == p.names
    with pytest.raises(ValueError):
        LpProblem.parse("min: 1\n")


def test_random_lps_match_vertex_oracle():
    rng = np.random.default_rng(1)
    for k in range(60):
        p = random_bounded_lp(rng, integer=bool(k % 2))
        sol = solve_lp(p)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(lp_vertex_optimum(p), abs=1e-7)


@given(st.integers(0, 2**32 - 1))
def test_random_lps_match_scipy(seed):
    rng = np.random.default_rng(seed)
    p = random_bounded_lp(rng, integer=bool(seed % 2))
    sol = solve_lp(p)
    ub = [(p.A[i], p.b[i]) for i in range(len(p.b)) if p.senses[i] == "<="]
    ub += [(-p.A[i], -p.b[i]) for i in range(len(p.b)) if p.senses[i] == ">="]
    eq = [(p.A[i], p.b[i]) for i in range(len(p.b)) if p.senses[i] == "="]
    ref = linprog(p.c, A_ub=[r for r, _ in ub] or None, b_ub=[v for _, v in ub] or None,
                  A_eq=[r for r, _ in eq] or None, b_eq=[v for _, v in eq] or None,
                  bounds=list(zip(p.lower, p.upper)), method="highs")
    assert ref.status == 0
    assert sol.objective == pytest.approx(ref.fun, abs=1e-6)
    # primal feasibility and bounds
    ax = p.A @ sol.x
    for i, s in enumerate(p.senses):
        if s == "<=":
            assert ax[i] <= p.b[i] + 1e-7
        elif s == ">=":
            assert ax[i] >= p.b[i] - 1e-7
        else:
            assert abs(ax[i] - p.b[i]) <= 1e-7
    assert np.all(sol.x >= p.lower - 1e-9) and np.all(sol.x <= p.upper + 1e-9)


@given(st.integers(0, 2**32 - 1))
def test_strong_duality(seed):
    # min c'x, Ax >= b, x >= 0 with c >= 0: always feasible and bounded
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    A = rng.uniform(0, 2, (m, n))
    b = rng.uniform(0, 3, m)
    c = rng.uniform(0.1, 2, n)
    sol = solve_lp(LpProblem(c, A, [">="] * m, b))
    assert sol.optimal
    assert np.all(sol.duals >= -1e-9)                   # dual feasible for >= rows
    assert np.all(sol.reduced_costs >= -1e-9)
    assert b @ sol.duals == pytest.approx(sol.objective, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50))
def test_cost_scaling(seed, lam):
    p = random_bounded_lp(np.random.default_rng(seed))
    a = solve_lp(p)
    b = solve_lp(LpProblem(lam * p.c, p.A, p.senses, p.b, p.lower, p.upper))
    assert b.objective == pytest.approx(lam * a.objective, rel=1e-7, abs=1e-7)


def test_bland_mode_agrees():
    rng = np.random.default_rng(5)
    for _ in range(30):
        p = random_bounded_lp(rng, integer=True)
        assert solve_lp(p, bland=True).objective == pytest.approx(solve_lp(p).objective, abs=1e-7)


@pytest.mark.skipif(_kernels.compiled_backend is None, reason="compiled kernels not built")
def test_backends_bit_identical():
    rng = np.random.default_rng(9)
    cfg = StorageConfig()
    probs = [random_bounded_lp(rng, integer=bool(k % 2)) for k in range(40)]
    probs += [assemble_lookahead(rng.uniform(0, 100), cfg, rng.uniform(0, 8, 6), rng.uniform(0, 8, 6),
                                 rng.uniform(10, 50, 6)) for _ in range(10)]
    for p in probs:
        with _kernels.use_backend("python"):
            a = solve_lp(p)
        with _kernels.use_backend("cython"):
            b = solve_lp(p)
        assert a.status == b.status and a.iterations == b.iterations
        assert np.array_equal(a.x, b.x)


# --- lookahead assembly ------------------------------------------------------


def test_lookahead_shape_and_order():
    cfg = StorageConfig()
    p = assemble_lookahead(10.0, cfg, [3, 3], [5, 5], [1, 2])  # H = 1: two periods
    assert p.shape == lookahead_shape(2) == (12, 14)
    assert p.names[:7] == tuple(f"{f}[0]" for f in FLOWS)
    assert p.names[7:] == tuple(f"{f}[1]" for f in FLOWS)


def test_neutral_multipliers_identical():
    cfg = StorageConfig()
    args = (20.0, cfg, [3, 4, 5], [5, 5, 6], [10, 30, 20])
    a = assemble_lookahead(*args)
    b = assemble_lookahead(*args, multipliers=np.ones(2))
    assert a.dump() == b.dump()
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


def test_assembler_deterministic():
    cfg = StorageConfig()
    args = (20.0, cfg, [3, 4, 5], [5, 5, 6], [10, 30, 20])
    assert assemble_lookahead(*args).dump() == assemble_lookahead(*args).dump()


def test_zero_wind_forces_zero_wind_flows():
    cfg = StorageConfig()
    sol = solve_lookahead(assemble_lookahead(50.0, cfg, np.zeros(4), [5, 6, 2, 3], [10, 40, 20, 30]))
    flows = period_flows(sol.x, 4)
    assert np.all(flows[:, 2] == 0) and np.all(flows[:, 3] == 0)


def test_two_period_arbitrage():
    # grid sales are allowed, so capacity is what stops the arbitrage at the demand of period 2
    cfg = StorageConfig(eta=1.0, r_max=5.0, charge_rate=100.0, discharge_rate=100.0)
    p = assemble_lookahead(0.0, cfg, [0, 0], [0, 5], [1, 10])
    sol = solve_lookahead(p)
    gb, gd, eb, ed, bd = first_period(sol.x)
    assert gb == pytest.approx(5) and gd == 0
    assert period_flows(sol.x, 2)[1, 4] == pytest.approx(5)
    assert sol.objective == pytest.approx(5.0)
    eq = [i for i, sn in enumerate(p.senses) if sn == "="]
    ub = [i for i, sn in enumerate(p.senses) if sn == "<="]
    ref = linprog(p.c, A_ub=p.A[ub], b_ub=p.b[ub], A_eq=p.A[eq], b_eq=p.b[eq], bounds=list(zip(p.lower, p.upper)))
    assert ref.fun == pytest.approx(5.0)


def test_lookahead_solutions_feasible():
    rng = np.random.default_rng(11)
    cfg = StorageConfig()
    for _ in range(20):
        K = int(rng.integers(1, 10))
        p = assemble_lookahead(rng.uniform(0, 100), cfg, rng.uniform(0, 8, K), rng.uniform(0, 8, K),
                               rng.uniform(0, 50, K), multipliers=rng.uniform(0, 2, K))
        sol = solve_lookahead(p)
        r = p.A @ sol.x - p.b
        eq = np.array([s == "=" for s in p.senses])
        assert np.all(np.abs(r[eq]) <= 1e-7) and np.all(r[~eq] <= 1e-7)


def test_lookahead_unbounded_raises():
    p = LpProblem([-1.0], [[1.0]], [">="], [0.0])
    with pytest.raises(LookaheadUnbounded):
        solve_lookahead(p)
