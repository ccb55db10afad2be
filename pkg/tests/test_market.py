import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exergy_ves import market
from exergy_ves.admm import run_p2
from exergy_ves.exergy import DomainError
from exergy_ves.market import (
    BargainingInfeasible,
    TradeLedger,
    asymmetric_split,
    bargaining_power,
    bargaining_weights,
    build_p2_subproblem,
    check_bargaining_feasible,
    settle_payments,
    solve_p2_centralized,
    supply_demand,
    surplus_shares,
    symmetric_split,
    trading_groups,
)
from exergy_ves.scenario import AdmmParams
from exergy_ves.solver import solve


def ledger_with(n, T, trades):
    """``trades`` is a list of (seller, buyer, period, volume, price)."""
    led = TradeLedger.zeros(n, T)
    for i, j, t, v, c in trades:
        led.volumes[i, j, t] = v
        led.volumes[j, i, t] = -v
        led.prices[i, j, t] = led.prices[j, i, t] = c
    return led


# --- ledger and weights ------------------------------------------------------------


def test_supply_demand_examples():
    assert supply_demand(TradeLedger.zeros(2, 3), 0) == (0.0, 0.0)
    sells = ledger_with(2, 3, [(0, 1, t, 2.0, 0.5) for t in range(3)])
    assert supply_demand(sells, 0) == (6.0, 0.0)
    mixed = ledger_with(2, 3, [(0, 1, 0, 2.0, 0.5), (1, 0, 1, 3.0, 0.5)])
    assert supply_demand(mixed, 0) == (2.0, 3.0)


def test_bargaining_power_examples():
    assert bargaining_power(0, 0, 5, 7) == 0
    assert bargaining_power(0, 0, 0, 0) == 0
    assert bargaining_power(5, 0, 5, 7) == pytest.approx(math.e - 1, abs=1e-5)
    assert bargaining_power(0, 7, 5, 7) == pytest.approx(1 - math.exp(-1), abs=1e-5)
    with pytest.raises(DomainError):
        bargaining_power(-1, 0, 5, 7)


@settings(max_examples=200, deadline=None)
@given(sup=st.one_of(st.just(0.0), st.floats(1e-6, 10)), dem=st.one_of(st.just(0.0), st.floats(1e-6, 10)),
       bump=st.floats(1e-3, 5))
def test_bargaining_power_strictly_increasing(sup, dem, bump):
    s_max = d_max = 20.0
    q = bargaining_power(sup, dem, s_max, d_max)
    assert bargaining_power(sup + bump, dem, s_max, d_max) > q
    assert bargaining_power(sup, dem + bump, s_max, d_max) > q
    assert q >= 0
    assert (q > 0) == (sup > 0 or dem > 0)


def test_weights_zero_only_for_non_traders():
    led = ledger_with(3, 2, [(0, 1, 0, 4.0, 0.5)])
    w = bargaining_weights(led)
    assert w.power[2] == 0
    assert w.power[0] == pytest.approx(math.e - 1)
    assert w.power[1] == pytest.approx(1 - math.exp(-1))


def test_projection_restores_invariants():
    rng = np.random.default_rng(0)
    led = TradeLedger(rng.normal(size=(3, 3, 4)), rng.normal(size=(3, 3, 4))).projected()
    assert led.antisymmetry_gap() == 0
    assert led.price_gap() == 0
    assert np.all(led.volumes[np.arange(3), np.arange(3)] == 0)


# --- settlement ------------------------------------------------------------------


def test_settlement_examples():
    assert np.all(settle_payments(TradeLedger.zeros(3, 2)) == 0)
    pay = settle_payments(ledger_with(2, 1, [(0, 1, 0, 2.0, 0.5)]))
    np.testing.assert_allclose(pay, [1.0, -1.0])


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 5), st.integers(1, 6), st.integers(0, 10_000))
def test_settlement_conserves_money(n, T, seed):
    rng = np.random.default_rng(seed)
    led = TradeLedger(rng.normal(scale=20, size=(n, n, T)), rng.uniform(0, 2, size=(n, n, T))).projected()
    assert abs(settle_payments(led).sum()) <= 1e-9


def test_symmetric_split_examples():
    np.testing.assert_allclose(symmetric_split(139.89, 3), 46.63, atol=1e-9)
    np.testing.assert_array_equal(symmetric_split(0.0, 3), 0.0)
    with pytest.raises(DomainError):
        symmetric_split(1.0, 0)
    # reference asymmetric shares add up to the reference equal-split total
    assert abs((78.67 + 35.96 + 25.25) - 3 * 46.63) <= 0.011


def test_asymmetric_split_allocates_the_same_total():
    total = 139.89
    shares = asymmetric_split(total, [1.2, 0.4, 0.9])
    assert shares.sum() == pytest.approx(symmetric_split(total, 3).sum(), abs=1e-6)
    assert np.argmax(shares) == 0


# --- price stage ----------------------------------------------------------------


def test_trading_groups_and_feasibility():
    vols = np.zeros((4, 4, 2))
    vols[0, 1, 0], vols[1, 0, 0] = 1.0, -1.0
    assert trading_groups(vols) == [[0, 1]]
    # a seller may start below zero when the group as a whole gains
    check_bargaining_feasible([-5.0, 8.0, -100.0, 0.0], vols)
    with pytest.raises(BargainingInfeasible):
        check_bargaining_feasible([-5.0, 4.0, 0.0, 0.0], vols)


def test_p2_subproblem_routes_agree():
    vols = np.zeros((3, 3, 2))
    vols[0, 1] = [3.0, 1.0]
    vols[0, 2] = [0.0, 2.0]
    vols = vols - vols.transpose(1, 0, 2)
    prices = np.full((3, 3, 2), 0.5)
    theta = np.zeros((3, 3, 2))
    theta[0, 1] = [0.01, -0.02]
    sub = build_p2_subproblem(0, 1.3, 4.0, vols, prices, theta, 0.05)
    direct = sub.solve()
    prog = sub.to_program()
    sol = solve(prog)
    assert sol.ok
    np.testing.assert_allclose(direct.ravel(), sol.x[:direct.size], atol=1e-5)
    assert sub.objective(direct) <= sub.objective(sol.x[:direct.size].reshape(direct.shape)) + 1e-9


def test_no_trade_skips_price_stage():
    params = AdmmParams()
    prices, trace = run_p2([0, 0], [1.0, 1.0], np.zeros((2, 2, 3)), params, initial=np.full((2, 2, 3), 0.7))
    assert trace.converged and trace.iterations == 0
    assert np.all(prices == 0.7)


def two_agent(bases, power):
    vols = np.zeros((2, 2, 1))
    vols[0, 1, 0], vols[1, 0, 0] = 1.0, -1.0
    params = AdmmParams(eps_p2=1e-7, delta_p2=1e-7, max_iter_p2=200_000)
    prices, trace = run_p2(power, bases, vols, params)
    assert trace.converged
    led = TradeLedger(vols, prices).projected()
    return surplus_shares(bases, led), led


def test_equal_power_splits_surplus_equally():
    bases = np.array([30.0, 10.0])
    shares, led = two_agent(bases, [1.0, 1.0])
    # hand KKT: maximize ln(30 + c) + ln(10 - c) gives c = -10, shares 20 and 20
    np.testing.assert_allclose(shares, [20.0, 20.0], atol=1e-4)
    assert led.prices[0, 1, 0] == pytest.approx(-10.0, abs=1e-4)
    assert settle_payments(led)[0] == pytest.approx((bases[1] - bases[0]) / 2, abs=1e-4)


def test_doubling_power_raises_share():
    bases = np.array([30.0, 10.0])
    low, _ = two_agent(bases, [1.0, 1.0])
    high, _ = two_agent(bases, [2.0, 1.0])
    assert high[0] > low[0] + 1.0
    assert high.sum() == pytest.approx(low.sum(), abs=1e-6)


def three_agent_volumes():
    vols = np.zeros((3, 3, 4))
    vols[0, 1] = [2.0, 1.0, 0.0, 3.0]
    vols[0, 2] = [1.0, 0.0, 2.0, 0.0]
    vols[1, 2] = [0.0, 1.5, 0.5, 1.0]
    return vols - vols.transpose(1, 0, 2)


def test_distributed_prices_match_centralized_and_closed_form():
    vols = three_agent_volumes()
    bases = np.array([25.0, -4.0, 40.0])
    power = np.array([1.4, 0.6, 0.9])
    prices, trace = run_p2(power, bases, vols, AdmmParams())
    assert trace.converged
    led = TradeLedger(vols, prices).projected()
    shares = surplus_shares(bases, led)
    central = surplus_shares(bases, TradeLedger(vols, solve_p2_centralized(power, bases, vols)))
    closed = asymmetric_split(bases.sum(), power)
    np.testing.assert_allclose(shares, central, atol=0.05)
    np.testing.assert_allclose(central, closed, atol=1e-3)
    assert trace.primal[-1] <= AdmmParams().eps_p2
    assert abs(settle_payments(led).sum()) <= 1e-9


def test_share_ranking_follows_power_with_equal_bases():
    vols = three_agent_volumes()
    bases = np.full(3, 20.0)
    power = np.array([0.5, 1.7, 1.1])
    prices, trace = run_p2(power, bases, vols, AdmmParams())
    assert trace.converged
    shares = surplus_shares(bases, TradeLedger(vols, prices).projected())
    assert list(np.argsort(shares)) == list(np.argsort(power))


def test_infeasible_group_raises_in_price_stage():
    vols = three_agent_volumes()
    with pytest.raises(BargainingInfeasible):
        run_p2([1, 1, 1], [-10.0, 2.0, 3.0], vols, AdmmParams())


def test_multiplier_update_is_antisymmetric():
    rng = np.random.default_rng(1)
    prices = rng.normal(size=(3, 3, 2))
    theta = market.p2_multiplier_update(np.zeros((3, 3, 2)), 0.1, prices)
    np.testing.assert_allclose(theta, -theta.transpose(1, 0, 2))
