import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from seqdec.processes import (PriceDataUnderrun, RlsBelief, forecast_roll, parse_prices, read_price_file,
                              rls_update, roll_forecast, sample_exogenous, write_price_file)
from seqdec.storage.model import StorageConfig, StorageDecision, StorageState

from oracles import batch_least_squares

# --- RLS ---------------------------------------------------------------------


def test_rls_zero_gain():
    b = RlsBelief(np.array([1.0, 2.0]), np.zeros((2, 2)))
    nb, gamma, eps = rls_update(b, [1.0, 1.0], 10.0)
    assert nb == b and gamma == 1.0


def test_rls_scalar_hand_case():
    nb, gamma, eps = rls_update(RlsBelief(np.zeros(1), np.eye(1)), [1.0], 1.0)
    assert eps == -1.0 and gamma == 2.0
    assert nb.theta[0] == 0.5 and nb.M[0, 0] == 0.5


def test_rls_literal_mode_differs():
    b = RlsBelief(np.zeros(1), 0.5 * np.eye(1))
    lit, g, _ = rls_update(b, [1.0], 1.0, literal=True)
    assert g == 0.5 and lit.theta[0] == pytest.approx(-1.0)
    with pytest.raises(ValueError, match="degenerate update"):
        rls_update(RlsBelief(np.zeros(1), np.eye(1)), [1.0], 1.0, literal=True)


def test_rls_feature_length_checked():
    with pytest.raises(ValueError):
        rls_update(RlsBelief.prior(3), [1.0, 2.0], 0.0)


@pytest.mark.parametrize("n", [3, 4])
def test_rls_matches_batch(n):
    rng = np.random.default_rng(n)
    X = rng.normal(size=(50, n))
    y = X @ rng.normal(size=n) + 0.1 * rng.normal(size=50)
    b = RlsBelief.prior(n, 100.0)
    for x, v in zip(X, y):
        b, _, _ = rls_update(b, x, v)
    theta, M = batch_least_squares(X, y, np.zeros(n), 100.0 * np.eye(n))
    np.testing.assert_allclose(b.theta, theta, atol=1e-8, rtol=0)
    np.testing.assert_allclose(b.M, M, atol=1e-8, rtol=0)


@given(arrays(float, 3, elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_rls_downdate_properties(p, y):
    rng = np.random.default_rng(0)
    L = rng.normal(size=(3, 3))
    b = RlsBelief(rng.normal(size=3), L @ L.T + np.eye(3))
    nb, gamma, _ = rls_update(b, p, y)
    assert gamma >= 1.0
    np.testing.assert_array_equal(nb.M, nb.M.T)
    # rank-one downdate: M - M' is PSD, so no eigenvalue increases
    assert np.linalg.eigvalsh(b.M - nb.M).min() >= -1e-8 * np.abs(b.M).max()
    assert np.all(np.linalg.eigvalsh(nb.M) <= np.linalg.eigvalsh(b.M).max() + 1e-8)


def test_zero_feature_appended_is_bit_identical():
    # the active/passive invariant relies on this
    rng = np.random.default_rng(3)
    b3, b4 = RlsBelief.prior(3), RlsBelief.prior(4)
    for _ in range(30):
        x = rng.normal(size=3) * 30
        y = float(rng.normal() * 30)
        b3, _, _ = rls_update(b3, x, y)
        b4, _, _ = rls_update(b4, np.append(x, 0.0), y)
    assert np.array_equal(b3.theta, b4.theta[:3]) and b4.theta[3] == 0.0
    assert np.array_equal(b3.M, b4.M[:3, :3])


# --- rolling forecast -------------------------------------------------------------


def test_forecast_noiseless_shift():
    f = np.array([1.0, 2.0, 3.0, 4.0])
    E, nf = forecast_roll(f, 0.0, np.random.default_rng(0))
    assert E == 1.0
    np.testing.assert_array_equal(nf, [2.0, 3.0, 4.0, 4.0])


def test_forecast_h1_terminal_fill():
    E, nf = roll_forecast([2.5], [0.3])
    assert E == pytest.approx(2.8)
    np.testing.assert_array_equal(nf, [2.5])


@given(arrays(float, 5, elements=st.floats(0, 20)), arrays(float, 5, elements=st.floats(-30, 30)))
def test_forecast_nonnegative(f, e):
    E, nf = roll_forecast(f, e)
    assert E >= 0 and np.all(nf >= 0) and nf.size == f.size


def test_forecast_error_variance():
    H, sigma = 6, 2.0
    rng = np.random.default_rng(1)
    f = np.full(H, 1000.0)  # far from the floor
    d = np.array([forecast_roll(f, sigma, rng)[1][:-1] - f[1:] for _ in range(20_000)])
    for i in range(H - 1):
        target = (i + 2) * sigma ** 2  # entry i of the new vector is lead i + 2 of the old one
        assert abs(d[:, i].var() / target - 1) < 0.05
        assert abs(d[:, i].mean()) < 3 * d[:, i].std() / np.sqrt(len(d))


# --- price files ----------------------------------------------------------------


def test_price_file_round_trip(tmp_path):
    path = tmp_path / "p.txt"
    write_price_file(path, [5.0, 7.25, 1e-3])
    np.testing.assert_array_equal(read_price_file(path), [5.0, 7.25, 1e-3])


def test_price_file_errors_report_line():
    with pytest.raises(ValueError, match="p.txt:1"):
        parse_prices(["5"], "p.txt")
    with pytest.raises(ValueError, match="p.txt:3"):
        parse_prices(["# price", "5", "abc"], "p.txt")


# --- exogenous sampler --------------------------------------------------------------


def quiet(**kw):
    base = dict(sigma_price=0, sigma_wind=0, sigma_demand=0, sigma_forecast=0, demand_amplitude=0,
                price_amplitude=0)
    base.update(kw)
    return StorageConfig(**base)


def state(t=0, **kw):
    return StorageState(kw.get("R", 0.0), kw.get("E", 0.0), kw.get("D", 0.0), (30.0, 30.0, 30.0), t)


def test_degenerate_sample_is_zero():
    w = sample_exogenous(quiet(price_intercept=0.0), "timeseries", state(), StorageDecision(), np.random.default_rng(0))
    assert (w.e_hat, w.d_hat, w.p_hat) == (0.0, 0.0, 0.0)


def test_replay_order_and_underrun():
    cfg = quiet(price_data=(5.0, 7.0))
    x = StorageDecision()
    assert sample_exogenous(cfg, "base", state(0), x, np.random.default_rng(0)).p_hat == 5.0
    assert sample_exogenous(cfg, "base", state(1), x, np.random.default_rng(0)).p_hat == 7.0
    with pytest.raises(PriceDataUnderrun, match="period 2"):
        sample_exogenous(cfg, "base", state(2), x, np.random.default_rng(0))


def test_active_price_term():
    cfg = quiet(price_intercept=0.0, theta3=0.1)
    w = sample_exogenous(cfg, "active", state(), StorageDecision(x_gb=10.0), np.random.default_rng(0))
    assert w.p_hat == pytest.approx(1.0)


def test_forecast_variant_errors_length():
    cfg = StorageConfig(forecast_horizon=7)
    s = StorageState(0.0, 4.0, 5.0, (30.0,) * 3, 0, None, (4.0,) * 7)
    w = sample_exogenous(cfg, "forecast", s, StorageDecision(), np.random.default_rng(0))
    assert len(w.forecast_errors) == 7 and w.e_hat == w.forecast_errors[0]
