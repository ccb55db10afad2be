"""Consensus ADMM runtime: the VES/IES outer loop, the trade-volume loop (P1)
and the trade-price loop (P2)."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import agents, market, messages, networks
from .agents import IesDecision, VesDecision
from .scenario import AdmmParams, Scenario
from .solver import SolveOptions

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# residuals, multipliers, penalties


def p1_residuals(volumes_now: np.ndarray, volumes_prev: np.ndarray) -> tuple[float, float]:
    """Primal: sum over pairs and periods of ``|Ex_ij + Ex_ji|``; dual: total change of every entry."""
    v = np.asarray(volumes_now, dtype=float)
    if v.shape != np.shape(volumes_prev):
        raise ValueError("ledgers differ in shape")
    gap = np.abs(v + v.transpose(1, 0, 2))
    primal = float(np.triu(gap.sum(axis=2), k=1).sum())
    dual = float(np.abs(v - np.asarray(volumes_prev, dtype=float)).sum())
    return primal, dual


def p1_multiplier_update(theta: np.ndarray, rho: float, volumes: np.ndarray) -> np.ndarray:
    """``theta + rho*(Ex_ij + Ex_ji)``; stays symmetric in ``(i, j)``."""
    v = np.asarray(volumes, dtype=float)
    return np.asarray(theta, dtype=float) + rho * (v + v.transpose(1, 0, 2))


def outer_convergence(consensus_out, consensus_in, eps_out: float) -> bool:
    a, b = np.asarray(consensus_out, dtype=float), np.asarray(consensus_in, dtype=float)
    if a.shape != b.shape:
        raise ValueError("consensus copies differ in shape")
    return bool(np.max(np.abs(a - b), initial=0.0) <= eps_out)


def outer_multiplier_update(theta_out, theta_in, rho_out: float, rho_in: float, consensus_out, consensus_in):
    gap = np.asarray(consensus_out, dtype=float) - np.asarray(consensus_in, dtype=float)
    return (np.asarray(theta_out, dtype=float) + rho_out * gap,
            np.asarray(theta_in, dtype=float) - rho_in * gap)


def balance_penalty(rho: float, primal: float, dual: float, mu: float = 10.0, tau: float = 2.0,
                    rho_max: float = np.inf) -> float:
    """Residual balancing: raise the penalty when the primal residual dominates, lower it otherwise."""
    if primal > mu * dual:
        return min(rho * tau, rho_max)
    if dual > mu * primal:
        return rho / tau
    return rho


def _runtime_solver_options() -> SolveOptions:
    # masters proving a 1e-6 relative gap can take minutes; 5e-6 is about 0.05 CNY here
    return SolveOptions(gap_rel=1e-5, mip_rel_gap=5e-6)


@dataclass
class RuntimeOptions:
    solver: SolveOptions = field(default_factory=_runtime_solver_options)
    # outer iterations that re-optimize binaries; later ones keep the last assignment
    mixed_integer_iterations: int = 5
    adaptive_rho: bool = False
    rho_mu: float = 10.0
    rho_tau: float = 2.0
    rho_max: float = 100.0
    # only the first P1 sweep of each outer iteration re-optimizes binaries
    p1_fix_binaries: bool = True
    record_messages: bool = True


# ---------------------------------------------------------------------------
# traces


@dataclass
class LoopTrace:
    primal: list = field(default_factory=list)
    dual: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    wall: list = field(default_factory=list)
    converged: bool = False

    def record(self, primal: float, dual: float, objective: float, rho: float, wall: float) -> None:
        self.primal.append(float(primal))
        self.dual.append(float(dual))
        self.objective.append(float(objective))
        self.rho.append(float(rho))
        self.wall.append(float(wall))

    @property
    def iterations(self) -> int:
        return len(self.primal)

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.primal, dtype=float)) if self.primal else np.zeros(0)

    def monotone_tail(self, fraction: float = 0.2) -> bool:
        """Best-so-far primal residual is non-increasing over the final ``fraction`` of iterations."""
        best = self.best_so_far()
        if len(best) < 2:
            return True
        start = int(np.floor(len(best) * (1.0 - fraction)))
        return bool(np.all(np.diff(best[start:]) <= 0.0))

    def as_dict(self) -> dict:
        return {"primal": self.primal, "dual": self.dual, "objective": self.objective, "rho": self.rho,
                "wall": self.wall, "converged": self.converged}


@dataclass
class ConvergenceTrace:
    outer: LoopTrace = field(default_factory=LoopTrace)
    p1: list = field(default_factory=list)  # one LoopTrace per outer iteration
    p2: LoopTrace | None = None

    def as_dict(self) -> dict:
        return {"outer": self.outer.as_dict(), "p1": [t.as_dict() for t in self.p1],
                "p2": None if self.p2 is None else self.p2.as_dict()}


# ---------------------------------------------------------------------------
# agents


class IesAgent:
    """One IES: owns its private model and answers consensus and trade messages."""

    def __init__(self, sc: Scenario, i: int, *, battery: bool, trading: bool, options: SolveOptions):
        self.i = i
        self.name = f"ies{i}"
        self.base, self.model = agents.build_ies_base(sc, i, battery=battery, trading=trading)
        self.options = options
        self.peers = sorted(self.model.trades)
        self.last_x: np.ndarray | None = None
        self.fixed_x: np.ndarray | None = None

    def solve(self, consensus_out, theta_in, rho_in: float, peer_trades, theta_p1, rho_p1: float,
              fix_binaries: bool = False) -> IesDecision:
        prog = agents.build_ies_problem(self.base, self.model, consensus_out=consensus_out, theta_in=theta_in,
                                        rho_in=rho_in, peer_trades=peer_trades if self.peers else None,
                                        theta_p1=theta_p1, rho_p1=rho_p1)
        if fix_binaries and self.fixed_x is not None:
            prog = prog.with_binaries_fixed(self.fixed_x)
        decision = agents.solve_ies(prog, self.model, self.options, hint=self.last_x)
        self.last_x = decision.x
        if not fix_binaries:
            self.fixed_x = decision.x
        return decision


class VesAgent:
    def __init__(self, sc: Scenario, options: SolveOptions, fixed_consensus=None):
        self.name = "ves"
        self.base, self.model = agents.build_ves_base(sc, fixed_consensus=fixed_consensus)
        self.options = options
        self.last_x: np.ndarray | None = None

    def solve(self, consensus_in=None, theta_out=None, rho_out: float = 0.0,
              fix_binaries: bool = False) -> VesDecision:
        prog = self.base
        if consensus_in is not None:
            prog = agents.build_ves_problem(self.base, self.model, consensus_in, theta_out, rho_out)
        if fix_binaries and self.last_x is not None:
            prog = prog.with_binaries_fixed(self.last_x)
        decision = agents.solve_ves(prog, self.model, self.options, hint=self.last_x)
        self.last_x = decision.x
        return decision


# ---------------------------------------------------------------------------
# P1: trade volumes


@dataclass
class P1State:
    """Warm-start state carried across outer iterations."""

    volumes: np.ndarray
    theta: np.ndarray
    rho: float


@dataclass
class P1Result:
    volumes: np.ndarray
    decisions: list
    trace: LoopTrace
    state: P1State

    @property
    def converged(self) -> bool:
        return self.trace.converged


def run_p1(ies_agents: list, consensus_out: np.ndarray, theta_in: np.ndarray, rho_in: float, params: AdmmParams,
           state: P1State | None = None, options: RuntimeOptions | None = None,
           bus: messages.MessageBus | None = None, outer_iteration: int = 0,
           fix_binaries: bool = False) -> P1Result:
    """Gauss-Seidel trade-volume ADMM over the IES alliance.

    ``consensus_out`` and ``theta_in`` are (n, 4, T).  Agents update in index
    order, each using its peers' latest trade rows.  With ``fix_binaries``
    every sweep keeps each agent's last binary assignment.
    """
    options = options or RuntimeOptions()
    bus = bus or messages.MessageBus(record=False)
    n = len(ies_agents)
    T = consensus_out.shape[-1]
    if state is None:
        state = P1State(np.zeros((n, n, T)), np.zeros((n, n, T)), params.rho_p1)
    volumes = state.volumes.copy()
    theta = state.theta.copy()
    rho = state.rho
    trace = LoopTrace()
    decisions: list = [None] * n
    t0 = time.perf_counter()
    trading = any(a.peers for a in ies_agents)
    for k in range(1, params.max_iter_p1 + 1):
        prev = volumes.copy()
        fix = fix_binaries or (options.p1_fix_binaries and k > 1)
        for agent in ies_agents:
            i = agent.i
            peer_rows = {j: volumes[j, i].copy() for j in agent.peers}
            d = agent.solve(consensus_out[i], theta_in[i], rho_in, peer_rows,
                            {j: theta[i, j] for j in agent.peers}, rho, fix_binaries=fix)
            decisions[i] = d
            for j in agent.peers:
                volumes[i, j] = d.trades[j]
                bus.send(messages.make_message("trade", agent.name, f"ies{j}", k, volume=volumes[i, j],
                                               theta=theta[i, j]))
        primal, dual = p1_residuals(volumes, prev)
        theta = p1_multiplier_update(theta, rho, volumes)
        alliance = sum(d.cost for d in decisions)
        trace.record(primal, dual, alliance, rho, time.perf_counter() - t0)
        if not trading or (primal <= params.eps_p1 and dual <= params.delta_p1):
            trace.converged = True
            break
        if options.adaptive_rho:
            rho = balance_penalty(rho, primal, dual, options.rho_mu, options.rho_tau, options.rho_max)
    else:
        log.info("P1 stopped at the iteration limit (outer iteration %d)", outer_iteration)
    return P1Result(volumes, decisions, trace, P1State(volumes, theta, rho))


# ---------------------------------------------------------------------------
# P2: trade prices


def initial_prices(sc: Scenario, n: int) -> np.ndarray:
    """Midpoint of the retail sale and purchase prices, for every pair."""
    mid = 0.5 * (np.asarray(sc.prices.ele_sell) + np.asarray(sc.prices.ele_buy))
    out = np.broadcast_to(mid, (n, n, len(mid))).copy()
    idx = np.arange(n)
    out[idx, idx] = 0.0
    return out


def run_p2(power, bases, volumes: np.ndarray, params: AdmmParams, initial: np.ndarray | None = None,
           bus: messages.MessageBus | None = None) -> tuple[np.ndarray, LoopTrace]:
    """Price ADMM (Jacobi updates): returns the (n, n, T) price array and its trace.

    Pairs without trade keep their initial price; with no trade at all the
    loop returns immediately.
    """
    bus = bus or messages.MessageBus(record=False)
    volumes = np.asarray(volumes, dtype=float)
    n, _, T = volumes.shape
    q = np.asarray(power, dtype=float)
    bases = np.asarray(bases, dtype=float)
    prices = np.zeros((n, n, T)) if initial is None else np.asarray(initial, dtype=float).copy()
    trace = LoopTrace()
    traders = np.any(volumes != 0, axis=(1, 2))
    if not np.any(traders):
        trace.converged = True
        return prices, trace
    market.check_bargaining_feasible(bases, volumes)
    theta = np.zeros((n, n, T))
    t0 = time.perf_counter()
    rho = params.rho_p2
    for k in range(1, params.max_iter_p2 + 1):
        prev = prices.copy()
        for i in range(n):
            if not traders[i]:
                continue
            peers = market._peers(n, i)
            sub = market.build_p2_subproblem(i, q[i], bases[i], volumes, prev, theta, rho)
            prices[i, peers] = sub.solve()
            for j in peers:
                bus.send(messages.make_message("price", f"ies{i}", f"ies{j}", k, price=prices[i, j],
                                               theta=theta[i, j]))
        primal, dual = market.p2_residuals(prices, prev)
        theta = market.p2_multiplier_update(theta, rho, prices)
        shares = bases + market.settle_payments(market.TradeLedger(volumes, prices))
        nash = float(np.sum(q[traders] * np.log(np.maximum(shares[traders], 1e-300))))
        trace.record(primal, dual, nash, rho, time.perf_counter() - t0)
        if primal <= params.eps_p2 and dual <= params.delta_p2:
            trace.converged = True
            break
    return prices, trace


# ---------------------------------------------------------------------------
# bi-level loop


@dataclass
class NetworkCheck:
    """Physics recomputed from the accepted VES solution."""

    socp_gap: float  # per-unit, max over lines and periods
    power_balance: float  # kW
    weymouth_max_relative: float | None  # over active pipes
    gas_balance: float | None  # m3
    weymouth_flagged: list = field(default_factory=list)


def check_networks(model: agents.VesModel, x: np.ndarray) -> NetworkCheck:
    wd_p = {k: v.value(x) for k, v in model.withdrawals_p.items()}
    exact = networks.check_socp_exactness(model.power, x)
    pbal = networks.power_balance_residual(model.power, x, wd_p)
    if model.gas is None:
        return NetworkCheck(exact.max_gap, pbal, None, None)
    wd_g = {k: v.value(x) for k, v in model.withdrawals_g.items()}
    wey = networks.verify_weymouth(model.gas, x)
    return NetworkCheck(exact.max_gap, pbal, wey.max_relative_active, networks.gas_balance_residual(model.gas, x, wd_g),
                        wey.flagged)


@dataclass
class SolveReport:
    case: int
    converged: bool
    ves: VesDecision
    ies: list  # IesDecision per IES
    consensus_out: np.ndarray  # (n, 4, T)
    consensus_in: np.ndarray  # (n, 4, T)
    raw_volumes: np.ndarray  # (n, n, T) as each IES last reported
    raw_prices: np.ndarray  # (n, n, T) as each IES last reported
    ledger: market.TradeLedger  # settled ledger (antisymmetric volumes, symmetric prices)
    payments: np.ndarray  # net exergy receipts per IES
    disagreement: np.ndarray | None
    bases: np.ndarray | None
    weights: market.BargainingWeights | None
    trace: ConvergenceTrace
    bus: messages.MessageBus
    wall_time: float
    network: NetworkCheck | None = None
    notes: list = field(default_factory=list)

    @property
    def ies_costs(self) -> np.ndarray:
        """Retail bill plus IDR cost minus exergy receipts, per IES."""
        return np.array([d.cost for d in self.ies]) - self.payments

    @property
    def day_ahead_income(self) -> float:
        return self.ves.day_ahead

    @property
    def ves_income(self) -> float:
        return self.ves.income


def _stack_X(decisions: list) -> np.ndarray:
    return np.stack([d.X for d in decisions])


def run_bilevel(sc: Scenario, options: RuntimeOptions | None = None,
                disagreement: np.ndarray | None = None) -> SolveReport:
    """Run the case configured in ``sc``.

    Case 1 has no exergy activity: every IES schedules against retail prices
    with zero load reduction and the VES solves once around that.  Case 2
    runs the VES/IES consensus loop with exergy batteries but no trades.
    Case 3 adds trades (P1) and prices them (P2); its disagreement point is
    each IES's Case 2 cost, computed here unless ``disagreement`` is given.
    """
    options = options or RuntimeOptions()
    params = sc.admm
    n, T = sc.n_ies, sc.T
    bus = messages.MessageBus(record=options.record_messages)
    trace = ConvergenceTrace()
    t_start = time.perf_counter()
    zeros = np.zeros((n, n, T))

    if sc.case == 1:
        X0 = np.zeros((n, agents.N_CONSENSUS, T))
        ves_agent = VesAgent(sc, options.solver, fixed_consensus=X0)
        ves = ves_agent.solve()
        ies = []
        for i in range(n):
            prog, model = agents.build_ies_base(sc, i, battery=False, trading=False)
            prog.add_eq(model.X, X0[i].ravel(), "fixed_consensus")
            ies.append(agents.solve_ies(prog, model, options.solver))
        trace.outer.record(0.0, 0.0, -ves.objective, 0.0, time.perf_counter() - t_start)
        trace.outer.converged = True
        return SolveReport(1, True, ves, ies, X0, X0.copy(), zeros, zeros.copy(), market.TradeLedger.zeros(n, T),
                           np.zeros(n), None, None, None, trace, bus, time.perf_counter() - t_start,
                           check_networks(ves_agent.model, ves.x))

    trading = sc.case == 3
    if trading and disagreement is None:
        disagreement = run_bilevel(sc.with_case(2), options).ies_costs
    ves_agent = VesAgent(sc, options.solver)
    ies_agents = [IesAgent(sc, i, battery=True, trading=trading, options=options.solver) for i in range(n)]

    X_in = np.zeros((n, agents.N_CONSENSUS, T))
    theta_out = np.zeros_like(X_in)
    theta_in = np.zeros_like(X_in)
    rho_out, rho_in = params.rho_out, params.rho_in
    p1_state = None
    converged = False
    ves = None
    result = None
    for k in range(1, params.max_iter_out + 1):
        frozen = k > options.mixed_integer_iterations
        ves = ves_agent.solve(X_in, theta_out, rho_out, fix_binaries=frozen)
        X_out = ves.X
        for i in range(n):
            bus.send(messages.consensus_message("ves", f"ies{i}", k, X_out[i], theta_out[i]))
        result = run_p1(ies_agents, X_out, theta_in, rho_in, params, p1_state, options, bus, k, fix_binaries=frozen)
        p1_state = result.state
        trace.p1.append(result.trace)
        X_prev = X_in
        X_in = _stack_X(result.decisions)
        for i in range(n):
            bus.send(messages.consensus_message(f"ies{i}", "ves", k, X_in[i], theta_in[i]))
        primal = float(np.max(np.abs(X_out - X_in)))
        dual = float(rho_in * np.max(np.abs(X_in - X_prev)))
        theta_out, theta_in = outer_multiplier_update(theta_out, theta_in, rho_out, rho_in, X_out, X_in)
        objective = -ves.objective + sum(d.cost for d in result.decisions)
        trace.outer.record(primal, dual, objective, rho_out, time.perf_counter() - t_start)
        log.info("outer %d: primal %.4g dual %.4g rho %.4g p1 iterations %d", k, primal, dual, rho_out,
                 result.trace.iterations)
        if primal <= params.eps_out and result.converged:
            converged = True
            break
        if options.adaptive_rho:
            # both copies share one penalty so the multipliers stay opposite
            rho_out = rho_in = balance_penalty(rho_out, np.linalg.norm(X_out - X_in),
                                               rho_in * np.linalg.norm(X_in - X_prev), options.rho_mu,
                                               options.rho_tau, options.rho_max)
    trace.outer.converged = converged
    decisions = result.decisions
    notes = []
    if not converged:
        notes.append("outer loop stopped at the iteration limit")

    raw_volumes = result.volumes if trading else zeros
    raw_prices = zeros.copy()
    payments = np.zeros(n)
    bases = weights = None
    ledger = market.TradeLedger.zeros(n, T)
    if trading:
        settled = market.TradeLedger(raw_volumes, zeros).projected()
        weights = market.bargaining_weights(settled, zero_tol=params.eps_p1)
        volumes = np.where(np.abs(settled.volumes) > params.eps_p1, settled.volumes, 0.0)
        bases = market.surplus_bases(disagreement, [d.cost_ves for d in decisions],
                                     [d.cost_idr for d in decisions])
        raw_prices, trace.p2 = run_p2(weights.power, bases, volumes, params, initial_prices(sc, n), bus)
        ledger = market.TradeLedger(volumes, raw_prices).projected()
        payments = market.settle_payments(ledger)
    return SolveReport(sc.case, converged, ves, decisions, ves.X, X_in, raw_volumes, raw_prices, ledger, payments,
                       None if disagreement is None else np.asarray(disagreement, dtype=float), bases, weights,
                       trace, bus, time.perf_counter() - t_start, check_networks(ves_agent.model, ves.x), notes)
