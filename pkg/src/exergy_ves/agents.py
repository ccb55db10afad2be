"""Upper-level (VES) and lower-level (IES) optimization models.

Consensus rows are laid out component-major: ``X[k*T + t]`` with components
``dP`` (kW, signed), ``dG`` (m3, signed), ``p_dis`` (kW) and ``g_dis`` (kW).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import devices, networks
from .exergy import Eqc
from .scenario import Scenario
from .solver import Affine, Program, Solution, SolveOptions, solve

N_CONSENSUS = 4
CONSENSUS_FIELDS = ("dP", "dG", "p_dis", "g_dis")


class AgentSolveError(RuntimeError):
    def __init__(self, agent: str, solution: Solution):
        self.agent = agent
        self.solution = solution
        super().__init__(f"{agent}: solve ended with status {solution.status} ({solution.stats})")


# ---------------------------------------------------------------------------
# IES


@dataclass
class IesModel:
    """Variables and expressions of one IES inside a :class:`Program`."""

    i: int
    T: int
    X: Affine  # consensus row, size 4*T
    trades: dict  # peer j -> Affine(T), exergy sent from i to j
    cost_ves: Affine
    cost_idr: Affine
    parts: dict = field(default_factory=dict)
    battery: bool = True


def _range_sum(*ranges):
    lo = sum(r[0] for r in ranges)
    hi = sum(r[1] for r in ranges)
    return lo, hi


def _positive_split(prog: Program, expr: Affine, lo: np.ndarray, hi: np.ndarray, name: str) -> Affine:
    """Return ``max(0, -expr)`` as a variable; one binary per period when the sign is open."""
    T = expr.size
    neg = prog.var(f"{name}.neg", T, ub=np.maximum(-lo, 0.0))
    open_ = (lo < -1e-9) & (hi > 1e-9)
    if not np.any(open_):
        # sign is fixed: the negative part is either -expr or 0
        prog.add_eq(neg, np.where(hi <= 1e-9, 1.0, 0.0) * (-expr), f"{name}.fixed")
        return neg
    pos = prog.var(f"{name}.pos", T, ub=np.maximum(hi, 0.0))
    prog.add_eq(expr, pos - neg, f"{name}.split")
    idx = np.flatnonzero(open_)
    z = prog.binary(f"{name}.z", len(idx))
    m_pos = np.maximum(hi, 0.0)
    m_neg = np.maximum(-lo, 0.0)
    prog.add_le(pos[idx], z * m_pos[idx], f"{name}.pos_on")
    prog.add_le(neg[idx], (1 - z) * m_neg[idx], f"{name}.neg_on")
    return neg


def add_ies_model(prog: Program, sc: Scenario, i: int, *, battery: bool = True, trading: bool = False,
                  eqc: Eqc | None = None, prefix: str | None = None) -> IesModel:
    """Add IES ``i``'s constraints to ``prog`` (no objective is set)."""
    s = sc.ies[i]
    T, dt = sc.T, sc.horizon.dt_hours
    H = sc.calorific_value
    eqc = eqc or sc.eqc_values()
    px = prefix or f"ies{i}"
    pr = sc.prices
    p_load0 = np.asarray(s.p_load0, dtype=float)
    g_load0 = np.asarray(s.g_load0, dtype=float)
    g_gt0 = np.asarray(s.mgt_gas0, dtype=float)
    flex = sc.flex(i)
    parts: dict[str, Affine] = {}

    # flexible electric load
    cur_max = np.asarray(flex.cur_max, dtype=float)
    p_cur = prog.var(f"{px}.p_cur", T, ub=cur_max)
    handle = devices.transferable_profile_constraints(prog, flex, T, f"{px}.tr", dt)
    p_tr = handle.transfer
    base_on = sum((np.asarray(d.baseline, float) * d.rated_power for d in flex.devices), np.zeros(T))
    tr_range = (-(sum(d.rated_power for d in flex.devices) - base_on), base_on)
    parts.update(p_cur=p_cur, p_tr=p_tr)

    # turbine, heat recovery and building
    mgt, hrsg = sc.mgt(i), sc.hrsg(i)
    zero = Affine.constant(np.zeros(T))
    if mgt is not None:
        k_gt = mgt.calorific_value * mgt.eta_gt
        ratio = devices.hrsg_ratio(mgt, hrsg)
        g_gt = prog.var(f"{px}.g_gt", T, lb=mgt.p_min / k_gt, ub=mgt.p_max / k_gt)
        p_gt = k_gt * g_gt
        p_qb = ratio * p_gt
        if hrsg.p_qb_min > 0:
            prog.add_ge(p_qb, hrsg.p_qb_min, f"{px}.qb_min")
        if np.isfinite(hrsg.p_qb_max):
            prog.add_le(p_qb, hrsg.p_qb_max, f"{px}.qb_max")
        p_gt0 = k_gt * g_gt0
        h0 = ratio * p_gt0
        gt_range = (mgt.p_min - p_gt0, mgt.p_max - p_gt0)
        bld = sc.building(i)
        if bld is not None:
            parts["t_in"] = devices.add_etp_constraints(prog, p_qb, s.building.t_outdoor, bld, dt, px)
        d_heat = p_qb - h0
        d_gas = g_gt - g_gt0
    else:
        g_gt = p_gt = p_qb = zero
        p_gt0 = h0 = np.zeros(T)
        gt_range = (np.zeros(T), np.zeros(T))
        d_heat = d_gas = zero
    parts.update(g_gt=g_gt, p_gt=p_gt, p_qb=p_qb, dH=d_heat, dG=d_gas)

    p_l0 = p_load0 - p_gt0
    g_l0 = g_gt0 + g_load0
    # metered electricity change: curtailment, transfer and turbine output
    d_ele = -(p_cur + p_tr) - (p_gt - p_gt0)
    parts["dP"] = d_ele
    dp_range = _range_sum((-cur_max, np.zeros(T)), (-tr_range[1], -tr_range[0]), (-gt_range[1], -gt_range[0]))

    bat = sc.battery(i)
    if battery:
        p_ch = _positive_split(prog, d_ele, dp_range[0], dp_range[1], f"{px}.ele")
        if mgt is not None:
            # heat follows the turbine gas one-for-one, so both share one sign split
            g_red = _positive_split(prog, d_gas, gt_range[0] / k_gt, gt_range[1] / k_gt, f"{px}.gas")
            h_ch = ratio * k_gt * g_red
            g_ch = H * g_red
        else:
            h_ch = g_ch = zero
        ex_ch = bat.lambda_ch * (p_ch + eqc.eps_h * h_ch + eqc.eps_g * g_ch)
        prog.add_le(ex_ch, bat.ex_ch_max, f"{px}.ex_ch_max")
        p_dis = prog.var(f"{px}.p_dis", T, ub=s.p_tran_max)
        g_dis = prog.var(f"{px}.g_dis", T, ub=s.g_tran_max * H)
        ex_dis = (p_dis + eqc.eps_g * g_dis) / bat.lambda_dis
        prog.add_le(ex_dis, bat.ex_dis_max, f"{px}.ex_dis_max")
        prog.add_le(g_dis, H * (g_l0 + d_gas), f"{px}.g_dis_cap")
        parts.update(p_ch=p_ch, h_ch=h_ch, g_ch=g_ch, ex_ch=ex_ch, ex_dis=ex_dis)
    else:
        # no battery: load changes earn nothing, so the IES stays at baseline
        p_dis = g_dis = zero
        ex_ch = ex_dis = zero
        prog.add_eq(d_ele, 0.0, f"{px}.no_idr_p")
        prog.add_eq(d_gas, 0.0, f"{px}.no_idr_g")
        prog.add_eq(d_heat, 0.0, f"{px}.no_idr_h")
        prog.add_eq(p_cur, 0.0, f"{px}.no_cur")
    parts.update(p_dis=p_dis, g_dis=g_dis)

    trades: dict[int, Affine] = {}
    net_out = zero
    if trading and battery:
        cap = bat.soc_max + bat.ex_ch_max
        for j in range(sc.n_ies):
            if j == i:
                continue
            ex = prog.var(f"{px}.ex_to{j}", T, lb=-cap, ub=cap)
            trades[j] = ex
            net_out = net_out + ex
    if battery:
        soc = prog.var(f"{px}.soc", T, ub=bat.soc_max)
        prog.add_eq(soc, soc.shift(1, bat.soc_init) + ex_ch - ex_dis - net_out, f"{px}.soc")
        prog.add_eq(soc[T - 1], bat.soc_init, f"{px}.cyclic")
        parts["soc"] = soc
    parts["net_trade_out"] = net_out

    # retail transactions with the VES
    net_p = p_l0 + d_ele
    p_sell = prog.var(f"{px}.p_sell", T, ub=s.p_tran_max)
    p_buy = prog.var(f"{px}.p_buy", T, ub=s.p_tran_max)
    prog.add_eq(p_sell - p_buy, net_p - p_dis, f"{px}.p_trans")
    m_buy = np.clip(-(p_l0 + dp_range[0]), 0.0, s.p_tran_max)
    m_sell = np.clip(p_l0 + dp_range[1], 0.0, s.p_tran_max)
    open_ = np.flatnonzero(m_buy > 1e-9)
    closed = np.flatnonzero(m_buy <= 1e-9)
    if len(open_):
        u = prog.binary(f"{px}.u_export", len(open_))
        prog.add_le(p_sell[open_], (1 - u) * m_sell[open_], f"{px}.sell_on")
        prog.add_le(p_buy[open_], u * m_buy[open_], f"{px}.buy_on")
        # discharge only offsets imported electricity
        prog.add_le(p_dis[open_], (1 - u) * m_sell[open_], f"{px}.dis_import")
        parts["u_export"] = u
    if len(closed):
        prog.add_eq(p_buy[closed], 0.0, f"{px}.no_export")
    g_sell = prog.var(f"{px}.g_sell", T, ub=s.g_tran_max)
    prog.add_eq(g_sell, g_l0 + d_gas - g_dis / H, f"{px}.g_trans")
    parts.update(p_sell=p_sell, p_buy=p_buy, g_sell=g_sell)

    cost_ves = (p_sell.dot(pr.ele_sell) - p_buy.dot(pr.ele_buy) + g_sell.dot(pr.gas_sell))
    cost_idr = devices.add_idr_cost(prog, p_cur, p_tr, d_heat, flex, px)
    X = Affine.concat([d_ele, d_gas, p_dis, g_dis])
    return IesModel(i, T, X, trades, cost_ves, cost_idr, parts, battery)


def build_ies_base(sc: Scenario, i: int, *, battery: bool = True, trading: bool = False) -> tuple[Program, IesModel]:
    prog = Program(name=f"ies{i}")
    model = add_ies_model(prog, sc, i, battery=battery, trading=trading)
    prog.minimize(model.cost_ves + model.cost_idr)
    return prog, model


def build_ies_problem(base: Program, model: IesModel, *, consensus_out=None, theta_in=None, rho_in: float = 0.0,
                      peer_trades: dict | None = None, theta_p1: dict | None = None,
                      rho_p1: float = 0.0) -> Program:
    """Augmented-Lagrangian form of the IES problem (a cheap copy of ``base``).

    ``peer_trades[j]`` is the peer's latest ``Ex_ji`` row and ``theta_p1[j]``
    the multiplier on ``Ex_ij + Ex_ji``.
    """
    prog = dataclasses.replace(base, squares=list(base.squares), linear_objective=base.linear_objective)
    if consensus_out is not None:
        out = np.asarray(consensus_out, dtype=float).ravel()
        if out.size != model.X.size:
            raise ValueError(f"consensus row has {out.size} entries, expected {model.X.size}")
        th = np.zeros(out.size) if theta_in is None else np.asarray(theta_in, dtype=float).ravel()
        gap = model.X - out
        prog.linear_objective = prog.linear_objective + gap.dot(th)
        if rho_in > 0:
            prog.squares.append(("consensus", np.full(out.size, rho_in / 2), gap))
    if model.trades:
        if peer_trades is None or set(peer_trades) != set(model.trades):
            raise ValueError(f"IES {model.i}: need the latest trade row of every peer")
        for j, ex in model.trades.items():
            resid = ex + np.asarray(peer_trades[j], dtype=float)
            th = np.zeros(model.T) if theta_p1 is None else np.asarray(theta_p1[j], dtype=float)
            prog.linear_objective = prog.linear_objective + resid.dot(th)
            if rho_p1 > 0:
                prog.squares.append((f"trade{j}", np.full(model.T, rho_p1 / 2), resid))
    return prog


@dataclass
class IesDecision:
    i: int
    values: dict  # name -> array over periods
    X: np.ndarray  # (4, T)
    trades: dict  # j -> array
    cost_ves: float
    cost_idr: float
    objective: float
    x: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return self.cost_ves + self.cost_idr


def solve_ies(prog: Program, model: IesModel, options: SolveOptions | None = None, hint=None) -> IesDecision:
    sol = solve(prog, options, hint=hint)
    if sol.status != "optimal":
        raise AgentSolveError(f"IES {model.i}", sol)
    x = sol.x
    values = {k: v.value(x) for k, v in model.parts.items()}
    return IesDecision(model.i, values, model.X.value(x).reshape(N_CONSENSUS, model.T),
                       {j: e.value(x) for j, e in model.trades.items()},
                       float(model.cost_ves.value(x)[0]), float(model.cost_idr.value(x)[0]),
                       sol.objective, x, sol.stats)


def standalone_cost(i: int, sc: Scenario, consensus_out=None, options: SolveOptions | None = None) -> float:
    """Minimal no-trade cost of IES ``i``.

    With ``consensus_out`` the IES must match the given consensus row exactly
    (the no-trade regime at a converged consensus); without it the IES
    optimizes freely against retail prices.
    """
    prog, model = build_ies_base(sc, i, battery=sc.case >= 2, trading=False)
    if consensus_out is not None:
        prog.add_eq(model.X, np.asarray(consensus_out, dtype=float).ravel(), "fixed_consensus")
    return solve_ies(prog, model, options).cost


def baseline_bill(sc: Scenario, i: int) -> float:
    """Retail bill of IES ``i`` with no flexibility used."""
    s = sc.ies[i]
    pr = sc.prices
    p_gt0 = np.zeros(sc.T)
    if s.mgt is not None:
        p_gt0 = np.asarray(s.mgt_gas0) * sc.calorific_value * s.mgt.eta_gt
    net = np.asarray(s.p_load0) - p_gt0
    gas = np.asarray(s.g_load0) + np.asarray(s.mgt_gas0)
    return float(np.dot(np.maximum(net, 0), pr.ele_sell) - np.dot(np.maximum(-net, 0), pr.ele_buy)
                 + np.dot(gas, pr.gas_sell))


def baseline_consumption(sc: Scenario, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Baseline electricity exchange (kW) and gas purchase (m3) of IES ``i``."""
    s = sc.ies[i]
    p_gt0 = np.zeros(sc.T)
    if s.mgt is not None:
        p_gt0 = np.asarray(s.mgt_gas0) * sc.calorific_value * s.mgt.eta_gt
    return np.asarray(s.p_load0) - p_gt0, np.asarray(s.g_load0) + np.asarray(s.mgt_gas0)


# ---------------------------------------------------------------------------
# VES


@dataclass
class VesModel:
    T: int
    n: int
    X: Affine  # n * 4 * T, IES-major
    income: Affine  # retail + day-ahead - medium/long-term
    loss_cost: Affine
    parts: dict
    power: networks.PowerHandle
    gas: networks.GasHandle | None
    withdrawals_p: dict  # node -> Affine (kW)
    withdrawals_g: dict  # node -> Affine (m3)


def build_ves_base(sc: Scenario, *, fixed_consensus=None) -> tuple[Program, VesModel]:
    """VES problem without the consensus terms.

    ``fixed_consensus`` (n, 4, T) pins the IES-side quantities, which is how
    the no-IDR case is modeled.
    """
    T, n = sc.T, sc.n_ies
    H = sc.calorific_value
    pr = sc.prices
    ves = sc.ves
    prog = Program(name="ves")
    p_ml = prog.var("ves.p_ml", T, ub=ves.ml_ele_max)
    g_ml = prog.var("ves.g_ml", T, ub=ves.ml_gas_max)
    p_da = prog.var("ves.p_da", T, lb=-ves.da_ele_max, ub=ves.da_ele_max)
    g_da = prog.var("ves.g_da", T, lb=-ves.da_gas_max, ub=ves.da_gas_max)

    rows_X = []
    retail = Affine.constant([0.0])
    total_p = Affine.constant(np.zeros(T))
    total_g = Affine.constant(np.zeros(T))
    wd_p: dict[int, Affine] = {}
    wd_g: dict[int, Affine] = {}
    parts: dict[str, Affine] = {"p_ml": p_ml, "g_ml": g_ml, "p_da": p_da, "g_da": g_da}
    pnet = sc.power_net()
    gnet = sc.gas_net()
    tan_phi = np.tan(np.arccos(sc.power_network.power_factor))
    for i, s in enumerate(sc.ies):
        p_l0, g_l0 = baseline_consumption(sc, i)
        tag = f"ves.ies{i}"
        if fixed_consensus is not None:
            fx = np.asarray(fixed_consensus, dtype=float)[i]
            dP = prog.var(f"{tag}.dP", T, lb=fx[0], ub=fx[0])
            dG = prog.var(f"{tag}.dG", T, lb=fx[1], ub=fx[1])
            p_dis = prog.var(f"{tag}.p_dis", T, lb=fx[2], ub=fx[2])
            g_dis = prog.var(f"{tag}.g_dis", T, lb=fx[3], ub=fx[3])
        else:
            dP = prog.var(f"{tag}.dP", T, lb=-s.p_tran_max - p_l0, ub=s.p_tran_max - p_l0)
            dG = prog.var(f"{tag}.dG", T, lb=-g_l0, ub=s.g_tran_max - g_l0)
            p_dis = prog.var(f"{tag}.p_dis", T, ub=s.p_tran_max)
            g_dis = prog.var(f"{tag}.g_dis", T, ub=s.g_tran_max * H)
        rows_X += [dP, dG, p_dis, g_dis]
        p_in = prog.var(f"{tag}.p_in", T, ub=s.p_tran_max)
        p_out = prog.var(f"{tag}.p_out", T, ub=s.p_tran_max)
        prog.add_eq(p_in - p_out, p_l0 + dP, f"{tag}.exchange")
        p_sell = prog.var(f"{tag}.p_sell", T, ub=s.p_tran_max)
        p_buy = prog.var(f"{tag}.p_buy", T, ub=s.p_tran_max)
        prog.add_eq(p_sell - p_buy, p_in - p_out - p_dis, f"{tag}.trans")
        prog.add_le(p_dis, p_in, f"{tag}.dis_cap")
        lo_net = p_l0 - s.p_tran_max - p_l0  # dP lower bound reaches full export
        if fixed_consensus is not None:
            lo_net = p_l0 + np.asarray(fixed_consensus, dtype=float)[i][0]
        if np.any(lo_net < -1e-9):
            u_in = prog.binary(f"{tag}.u_in", T)
            prog.add_le(p_in, u_in * s.p_tran_max, f"{tag}.in_on")
            prog.add_le(p_out, (1 - u_in) * s.p_tran_max, f"{tag}.out_on")
            prog.add_le(p_sell, u_in * s.p_tran_max, f"{tag}.sell_on")
            prog.add_le(p_buy, (1 - u_in) * s.p_tran_max, f"{tag}.buy_on")
            parts[f"{tag}.u_in"] = u_in
        else:
            prog.add_eq(p_out, 0.0, f"{tag}.no_out")
            prog.add_eq(p_buy, 0.0, f"{tag}.no_buy")
        g_del = g_l0 + dG
        g_sell = prog.var(f"{tag}.g_sell", T, ub=s.g_tran_max)
        prog.add_eq(g_sell, g_del - g_dis / H, f"{tag}.g_trans")
        prog.add_le(g_dis, H * g_del, f"{tag}.g_dis_cap")
        retail = retail + p_sell.dot(pr.ele_sell) - p_buy.dot(pr.ele_buy) + g_sell.dot(pr.gas_sell)
        total_p = total_p + (p_l0 + dP)
        total_g = total_g + g_del
        node = s.power_node - 1
        wd_p[node] = wd_p.get(node, Affine.constant(np.zeros(T))) + (p_in - p_out)
        if s.gas_node is not None:
            gn = s.gas_node - 1
            wd_g[gn] = wd_g.get(gn, Affine.constant(np.zeros(T))) + g_del
        parts.update({f"{tag}.p_in": p_in, f"{tag}.p_out": p_out, f"{tag}.p_sell": p_sell,
                      f"{tag}.p_buy": p_buy, f"{tag}.g_sell": g_sell})

    # market balances: bought volume minus day-ahead sales covers IES demand
    prog.add_eq(p_ml - p_da, total_p, "ves.p_balance")
    prog.add_eq(g_ml - g_da, total_g, "ves.g_balance")
    reactive = {k: tan_phi * v for k, v in wd_p.items()}
    power = networks.build_power_constraints(prog, pnet, wd_p, reactive, T, "ves.pn")
    gas = None
    if gnet is not None:
        gas = networks.build_gas_constraints(prog, gnet, wd_g, T, "ves.gn",
                                             pressure_weight=sc.gas_network.pressure_weight)
    day_ahead = p_da.dot(pr.da_ele) + g_da.dot(pr.da_gas)
    ml_cost = p_ml.dot(pr.ml_ele) + g_ml.dot(pr.ml_gas)
    loss_cost = power.losses_kw.dot(pr.da_ele)
    income = retail + day_ahead - ml_cost
    parts.update(retail=retail, day_ahead=day_ahead, ml_cost=ml_cost)
    prog.minimize(-income + loss_cost)
    X = Affine.concat(rows_X)
    return prog, VesModel(T, n, X, income, loss_cost, parts, power, gas, wd_p, wd_g)


def build_ves_problem(base: Program, model: VesModel, consensus_in, theta_out, rho_out: float) -> Program:
    """Augmented-Lagrangian form: ``theta*(X_out - X_in) + rho/2*||X_out - X_in||^2``."""
    x_in = np.asarray(consensus_in, dtype=float).ravel()
    if x_in.size != model.X.size:
        raise ValueError(f"consensus vector has {x_in.size} entries, expected {model.X.size}")
    th = np.zeros(x_in.size) if theta_out is None else np.asarray(theta_out, dtype=float).ravel()
    prog = dataclasses.replace(base, squares=list(base.squares), linear_objective=base.linear_objective)
    gap = model.X - x_in
    prog.linear_objective = prog.linear_objective + gap.dot(th)
    if rho_out > 0:
        prog.squares.append(("consensus", np.full(x_in.size, rho_out / 2), gap))
    return prog


@dataclass
class VesDecision:
    values: dict
    X: np.ndarray  # (n, 4, T)
    income: float
    day_ahead: float
    retail: float
    ml_cost: float
    loss_cost: float
    objective: float
    x: np.ndarray
    stats: dict = field(default_factory=dict)


def solve_ves(prog: Program, model: VesModel, options: SolveOptions | None = None, hint=None) -> VesDecision:
    sol = solve(prog, options, hint=hint)
    if sol.status != "optimal":
        raise AgentSolveError("VES", sol)
    x = sol.x
    values = {k: v.value(x) for k, v in model.parts.items()}
    scalar = lambda k: float(values[k][0])  # noqa: E731
    return VesDecision(values, model.X.value(x).reshape(model.n, N_CONSENSUS, model.T),
                       float(model.income.value(x)[0]), scalar("day_ahead"), scalar("retail"), scalar("ml_cost"),
                       float(model.loss_cost.value(x)[0]), sol.objective, x, sol.stats)
