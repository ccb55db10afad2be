import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exergy_ves.solver import (
    Program,
    ProgramError,
    SolveOptions,
    SubproblemError,
    dump_lp,
    solve,
    solve_enumeration,
    solve_scalar_log_subproblem,
)
from exergy_ves.solver.backends import solve_continuous


def test_single_bound():
    prog = Program()
    x = prog.var("x", lb=3.0)
    prog.minimize(x)
    sol = solve(prog)
    assert sol.ok
    assert sol["x"][0] == pytest.approx(3.0, abs=1e-7)
    assert sol.stats["max_residual"] <= 1e-6


def test_infeasible_pair():
    prog = Program()
    x = prog.var("x", lb=-np.inf)
    prog.add_ge(x, 1.0)
    prog.add_le(x, 0.0)
    prog.minimize(x)
    sol = solve(prog)
    assert sol.status == "infeasible"
    assert sol.x is None
    with pytest.raises(ValueError):
        sol.value(x)


def knapsack(values, weights, capacity):
    prog = Program(name="knapsack")
    pick = prog.binary("pick", len(values))
    prog.add_le(pick.dot(weights), capacity)
    prog.minimize(-pick.dot(values))
    return prog, pick


def brute_knapsack(values, weights, capacity):
    best = 0.0
    for subset in itertools.product([0, 1], repeat=len(values)):
        s = np.array(subset)
        if s @ weights <= capacity:
            best = max(best, float(s @ values))
    return best


def test_three_item_knapsack_matches_enumeration():
    values, weights = np.array([6.0, 10.0, 12.0]), np.array([1.0, 2.0, 3.0])
    prog, pick = knapsack(values, weights, 5.0)
    sol = solve(prog)
    assert sol.ok
    assert -sol.objective == pytest.approx(brute_knapsack(values, weights, 5.0))
    assert -sol.objective == pytest.approx(22.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 20), st.integers(1, 10)), min_size=5, max_size=8), st.integers(5, 30))
def test_milp_knapsack_matches_enumeration(items, capacity):
    values = np.array([v for v, _ in items], dtype=float)
    weights = np.array([w for _, w in items], dtype=float)
    prog, _ = knapsack(values, weights, capacity)
    sol = solve(prog)
    assert sol.ok
    assert -sol.objective == pytest.approx(brute_knapsack(values, weights, capacity), abs=1e-6)


def quadratic_mi_program(target, penalty):
    """Tracks ``target`` with a continuous signal that is only allowed where a binary is on."""
    n = len(target)
    prog = Program(name="qmi")
    on = prog.binary("on", n)
    y = prog.var("y", n, lb=-10.0, ub=10.0)
    prog.add_le(y, 10.0 * on)
    prog.add_ge(y, -10.0 * on)
    prog.add_squares(1.0, y - np.asarray(target))
    prog.minimize(on.dot(penalty))
    return prog


def brute_force(prog):
    best = np.inf
    b = prog.binary_index
    for bits in itertools.product([0.0, 1.0], repeat=len(b)):
        x = np.zeros(prog.n_vars)
        x[b] = bits
        sol = solve_continuous(prog.with_binaries_fixed(x))
        if sol.ok:
            best = min(best, sol.objective)
    return best


@pytest.mark.parametrize("n", [3, 7])
def test_mixed_integer_quadratic_matches_brute_force(n):
    rng = np.random.default_rng(n)
    prog = quadratic_mi_program(rng.uniform(-3, 3, n), rng.uniform(0.5, 4.0, n))
    sol = solve(prog, SolveOptions(enumerate_max_binaries=4))
    assert sol.ok
    assert sol.objective == pytest.approx(brute_force(prog), abs=1e-5)


def test_enumeration_and_outer_approximation_agree():
    rng = np.random.default_rng(11)
    prog = quadratic_mi_program(rng.uniform(-3, 3, 6), rng.uniform(0.5, 4.0, 6))
    direct = solve_enumeration(prog)
    oa = solve(prog, SolveOptions(enumerate_max_binaries=0))
    assert direct.ok and oa.ok
    assert oa.objective == pytest.approx(direct.objective, abs=1e-5)


def test_fixed_variables_are_eliminated_consistently():
    prog = Program()
    x = prog.var("x", 3, lb=-np.inf)
    z = prog.var("z", 2, lb=[1.5, -2.0], ub=[1.5, -2.0])
    prog.add_eq(x[0] + z[0], 4.0)
    prog.add_le(x[1] - z[1], 1.0)
    prog.add_soc(x[2] + 3.0, [z[0], x[1]])
    prog.add_squares(1.0, x - np.array([0.0, 1.0, 2.0]))
    sol = solve(prog)
    assert sol.ok
    np.testing.assert_allclose(sol["z"], [1.5, -2.0])
    # same program with the fixed values typed in as constants
    ref = Program()
    y = ref.var("x", 3, lb=-np.inf)
    ref.add_eq(y[0] + 1.5, 4.0)
    ref.add_le(y[1] + 2.0, 1.0)
    ref.add_soc(y[2] + 3.0, [1.5, y[1]])
    ref.add_squares(1.0, y - np.array([0.0, 1.0, 2.0]))
    ref_sol = solve(ref)
    np.testing.assert_allclose(sol["x"], ref_sol["x"], atol=1e-6)


def test_fixed_row_violation_reports_infeasible():
    prog = Program()
    z = prog.var("z", lb=1.0, ub=1.0)
    x = prog.var("x")
    prog.add_le(z, 0.5)
    prog.minimize(x)
    assert solve(prog).status == "infeasible"


def test_independent_blocks_are_split():
    rng = np.random.default_rng(3)
    a = quadratic_mi_program(rng.uniform(-3, 3, 5), rng.uniform(0.5, 4, 5))
    # second, disconnected copy in the same program
    on = a.binary("on2", 5)
    y = a.var("y2", 5, lb=-10.0, ub=10.0)
    a.add_le(y, 10.0 * on)
    a.add_ge(y, -10.0 * on)
    a.add_squares(1.0, y - 1.0)
    a.minimize(on.sum())
    assert len(a.components()) >= 2
    sol = solve(a)
    assert sol.ok
    assert sol.stats["backend"] == "split"
    direct = solve_enumeration(a.with_binaries_fixed(sol.x))
    assert sol.objective == pytest.approx(direct.objective, abs=1e-6)


def test_malformed_program_rejected():
    prog = Program()
    prog.var("x")
    with pytest.raises(ProgramError):
        prog.var("x")
    with pytest.raises(ProgramError):
        prog.var("y", lb=2.0, ub=1.0)
    with pytest.raises(ProgramError):
        prog.add_squares(-1.0, prog.block("x"))
    logs = Program()
    b = logs.binary("b")
    logs.add_neg_log(1.0, b + 1.0)
    with pytest.raises(ProgramError):
        solve(logs)


def test_neg_log_program():
    # maximize ln(x) + ln(4 - x): optimum at x = 2
    prog = Program()
    x = prog.var("x", lb=-np.inf)
    prog.add_neg_log(1.0, x)
    prog.add_neg_log(1.0, 4.0 - x)
    sol = solve(prog)
    assert sol.ok
    assert sol["x"][0] == pytest.approx(2.0, abs=1e-5)


def test_solve_is_deterministic():
    rng = np.random.default_rng(5)
    prog = quadratic_mi_program(rng.uniform(-3, 3, 8), rng.uniform(0.5, 4, 8))
    a, b = solve(prog), solve(prog)
    np.testing.assert_array_equal(a.x, b.x)


def test_lp_dump(tmp_path):
    prog, _ = knapsack(np.array([1.0, 2.0]), np.array([1.0, 1.0]), 1.0)
    path = dump_lp(prog, tmp_path / "k.lp")
    text = path.read_text()
    assert "Minimize" in text or "minimize" in text.lower()
    assert "Binar" in text or "binar" in text.lower()


# --- scalar log subproblem ---------------------------------------------------------


def scalar_objective(c, q, base, a, anchor, theta, rho):
    arg = base - a * c
    return np.where(arg > 0, -q * np.log(np.where(arg > 0, arg, 1.0)) + 0.5 * rho * (c - anchor) ** 2
                    + theta * (c - anchor), np.inf)


def test_zero_weight_is_pure_quadratic():
    c = solve_scalar_log_subproblem(0.0, 5.0, [1.0, -2.0], [0.3, 0.4], [0.1, -0.2], 0.5)
    np.testing.assert_allclose(c, np.array([0.3, 0.4]) - np.array([0.1, -0.2]) / 0.5)


def test_zero_coefficients_ignore_the_log():
    c = solve_scalar_log_subproblem(2.0, 5.0, [0.0, 0.0], [0.3, 0.4], [0.1, -0.2], 0.5)
    np.testing.assert_allclose(c, np.array([0.3, 0.4]) - np.array([0.1, -0.2]) / 0.5)


@pytest.mark.parametrize("q,base,a,anchor,theta,rho", [
    (1.0, 10.0, 2.0, 1.0, 0.0, 0.5),
    (0.7, 3.0, -1.5, 0.2, 0.3, 0.1),
    (2.0, -5.0, -4.0, 0.0, 0.0, 1.0),  # negative base: the log needs a price above 1.25
    (0.01171875, -8.0, 0.0078125, 0.0, -1.0, 2.0),  # optimum a hair inside the log domain near -1024
])
def test_one_dimensional_matches_grid_search(q, base, a, anchor, theta, rho):
    c = solve_scalar_log_subproblem(q, base, [a], [anchor], [theta], rho)[0]
    lo, hi = c - 5.0, c + 5.0
    for _ in range(4):
        grid = np.linspace(lo, hi, 200001)
        best = grid[np.argmin(scalar_objective(grid, q, base, a, anchor, theta, rho))]
        step = (hi - lo) / 200000
        lo, hi = best - 10 * step, best + 10 * step
    assert c == pytest.approx(best, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(q=st.floats(0.01, 5), base=st.floats(-50, 50), coeffs=st.lists(st.floats(-20, 20), min_size=1, max_size=6),
       rho=st.floats(1e-3, 10), shift=st.floats(-5, 5))
def test_first_order_conditions_hold(q, base, coeffs, rho, shift):
    a = np.array(coeffs)
    if np.allclose(a, 0):
        a[0] = 1.0
    anchor = np.full(a.size, shift)
    theta = np.linspace(-1, 1, a.size)
    c = solve_scalar_log_subproblem(q, base, a, anchor, theta, rho)
    arg = base - a @ c
    assert arg > 0
    grad = rho * (c - anchor) + theta + q * a / arg
    scale = 1 + rho * (np.linalg.norm(c) + np.linalg.norm(anchor - theta / rho)) + q * np.linalg.norm(a) / arg
    assert np.linalg.norm(grad) <= 1e-8 * scale


def test_invalid_scalar_inputs():
    with pytest.raises(SubproblemError):
        solve_scalar_log_subproblem(-1.0, 1.0, [1.0], [0.0], [0.0], 1.0)
    with pytest.raises(SubproblemError):
        solve_scalar_log_subproblem(1.0, 1.0, [1.0], [0.0], [0.0], 0.0)
    with pytest.raises(SubproblemError):
        # no coefficients and a non-positive base leave no feasible point
        solve_scalar_log_subproblem(1.0, -1.0, [0.0], [0.0], [0.0], 1.0)
