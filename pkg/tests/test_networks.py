import numpy as np
import pytest

from exergy_ves.networks import (
    GasNetwork,
    Line,
    Pipe,
    PowerNetwork,
    TopologyError,
    build_gas_constraints,
    build_power_constraints,
    check_socp_exactness,
    gas_balance_residual,
    orient_tree,
    power_balance_residual,
    verify_weymouth,
    weymouth_residuals,
)
from exergy_ves.solver import Affine, Program, solve


def two_node(r=0.01, x=0.0, p_max=np.inf):
    # base_kv = 1 kV and base_kva = 1000 give a 1-ohm impedance base
    return PowerNetwork(n_nodes=2, lines=(Line(0, 1, r, x, p_max),), base_kv=1.0, base_kva=1000.0,
                        u_min=0.5, u_max=1.5)


def solve_power(net, load_kw, T=1, reward_current=False):
    prog = Program()
    demand = {k: Affine.constant(np.full(T, v)) for k, v in load_kw.items()}
    handle = build_power_constraints(prog, net, demand, {}, T)
    if reward_current:
        prog.minimize(-handle.I.sum())
    else:
        prog.minimize(handle.injection_kw.sum())
    return prog, handle, solve(prog)


def test_zero_load_gives_flat_voltage():
    _, h, sol = solve_power(two_node(), {})
    assert sol.ok
    assert np.allclose(h.P.value(sol.x), 0, atol=1e-7)
    assert np.allclose(h.U.value(sol.x), 1.0, atol=1e-7)
    assert check_socp_exactness(h, sol.x).max_gap == pytest.approx(0.0, abs=1e-7)


def test_voltage_drop_matches_hand_solution():
    r, load = 0.01, 1.0
    _, h, sol = solve_power(two_node(r), {1: load})
    assert sol.ok
    # exact two-bus branch flow by fixed point: sending power covers load plus r*I
    p_load = load / 1000.0
    p_send, cur = p_load, 0.0
    for _ in range(50):
        cur = p_send ** 2 / 1.0
        p_send = p_load + r * cur
    u_recv = 1.0 - 2 * r * p_send + r ** 2 * cur
    assert h.U.value(sol.x)[1] == pytest.approx(u_recv, abs=1e-8)
    assert 1.0 - h.U.value(sol.x)[1] == pytest.approx(2 * r * p_load, rel=1e-3)


def test_overload_is_infeasible():
    _, _, sol = solve_power(two_node(p_max=5.0), {1: 10.0})
    assert sol.status == "infeasible"


def test_reward_on_current_breaks_exactness():
    _, h, sol = solve_power(two_node(0.05, 0.02), {1: 100.0}, reward_current=True)
    assert sol.ok
    report = check_socp_exactness(h, sol.x, tol=1e-4)
    assert report.flagged
    assert report.max_gap > 1e-4


def test_radial_feeder_balances_and_stays_exact():
    lines = (Line(0, 1, 0.3, 0.2), Line(1, 2, 0.4, 0.3), Line(1, 3, 0.5, 0.4), Line(3, 4, 0.2, 0.1))
    net = PowerNetwork(5, lines, base_kv=12.66, base_kva=1000.0)
    T = 3
    loads = {2: 150.0, 3: 80.0, 4: 120.0}
    prog = Program()
    demand = {k: Affine.constant(np.array([v, 0.5 * v, 1.2 * v])) for k, v in loads.items()}
    h = build_power_constraints(prog, net, demand, {k: d * 0.3 for k, d in demand.items()}, T)
    prog.minimize(h.injection_kw.sum())
    sol = solve(prog)
    assert sol.ok
    assert check_socp_exactness(h, sol.x).max_gap <= 1e-4
    wd = {k: d.value(sol.x) for k, d in demand.items()}
    assert power_balance_residual(h, sol.x, wd) <= 1e-6
    injected = h.injection_kw.value(sol.x)
    served = sum(wd.values())
    np.testing.assert_allclose(injected - h.losses_kw.value(sol.x), served, atol=1e-6)
    u = h.U.value(sol.x)
    assert np.all(u >= net.u_min - 1e-8) and np.all(u <= net.u_max + 1e-8)


def test_non_radial_topology_rejected():
    with pytest.raises(TopologyError):
        orient_tree(3, [(0, 1), (1, 2), (2, 0)], 0)
    with pytest.raises(TopologyError):
        orient_tree(4, [(0, 1), (2, 3), (2, 3)], 0)


# --- gas -------------------------------------------------------------------------------


def single_pipe(k=2.0, g_max=np.inf):
    return GasNetwork(2, (Pipe(0, 1, k, g_max),), source=0, p_min=(1.0, 1.0), p_max=(5.0, 5.0))


def solve_gas(net, demand, T=1, **kwargs):
    prog = Program()
    wd = {kk: Affine.constant(np.full(T, v)) for kk, v in demand.items()}
    h = build_gas_constraints(prog, net, wd, T, **kwargs)
    prog.minimize(h.injection.sum())
    return h, solve(prog)


def test_zero_demand_zero_flow():
    h, sol = solve_gas(single_pipe(), {})
    assert sol.ok
    assert np.allclose(h.G.value(sol.x), 0, atol=1e-7)
    assert verify_weymouth(h, sol.x).ok


@pytest.mark.parametrize("fixed_direction", [True, False])
def test_single_pipe_pressure_drop(fixed_direction):
    k, g0 = 2.0, 3.0
    h, sol = solve_gas(single_pipe(k), {1: g0}, demand_nonnegative=fixed_direction)
    assert sol.ok
    pi = h.pi.value(sol.x)
    assert pi[0] - pi[1] >= (g0 / k) ** 2 - 1e-6
    assert h.G.value(sol.x)[0] == pytest.approx(g0, abs=1e-6)
    if not fixed_direction:
        assert h.direction.value(sol.x)[0] == pytest.approx(1.0)
    report = verify_weymouth(h, sol.x)
    assert report.max_relative_active <= 0.05


def test_demand_above_capacity_infeasible():
    _, sol = solve_gas(single_pipe(g_max=2.0), {1: 3.0})
    assert sol.status == "infeasible"


def test_missing_pressure_bounds_rejected():
    with pytest.raises(TopologyError):
        GasNetwork(2, (Pipe(0, 1, 1.0),), source=0, p_min=(1.0,), p_max=(5.0, 5.0))
    with pytest.raises(TopologyError):
        solve_gas(GasNetwork(2, (Pipe(0, 1, 1.0),), 0, (1.0, 1.0), (5.0, np.inf)), {1: 1.0})


def test_weymouth_residual_examples():
    net = single_pipe(k=1.0)
    zero = weymouth_residuals(net, np.zeros((1, 1)), np.array([[4.0], [4.0]]))
    assert zero.residual[0, 0] == 0 and zero.ok
    exact = weymouth_residuals(net, np.array([[1.0]]), np.array([[5.0], [4.0]]))
    assert exact.residual[0, 0] == pytest.approx(0.0, abs=1e-12)
    slack = weymouth_residuals(net, np.array([[1.0]]), np.array([[13.0], [4.0]]))
    assert abs(slack.residual[0, 0]) == pytest.approx(2.0)
    assert slack.flagged == [(0, 0)]


def test_gas_tree_with_direction_binaries():
    pipes = (Pipe(0, 1, 3.0, 20.0), Pipe(1, 2, 2.0, 20.0), Pipe(1, 3, 2.0, 20.0))
    net = GasNetwork(4, pipes, source=0, p_min=(1.0,) * 4, p_max=(6.0,) * 4)
    T = 2
    demand = {2: 2.0, 3: 1.5}
    h, sol = solve_gas(net, demand, T=T, demand_nonnegative=False)
    assert sol.ok
    wd = {kk: np.full(T, v) for kk, v in demand.items()}
    assert gas_balance_residual(h, sol.x, wd) <= 1e-6
    flows = h.G.value(sol.x).reshape(-1, T)
    assert np.all(np.abs(flows) <= 20.0 + 1e-6)
    pi = h.pi.value(sol.x).reshape(-1, T)
    b = h.direction.value(sol.x).reshape(-1, T)
    for e, pipe in enumerate(pipes):
        forward = b[e] > 0.5
        assert np.all(pi[pipe.src][forward] >= pi[pipe.dst][forward] - 1e-6)
        assert np.all(pi[pipe.src][~forward] <= pi[pipe.dst][~forward] + 1e-6)
    assert verify_weymouth(h, sol.x).max_relative_active <= 0.05
