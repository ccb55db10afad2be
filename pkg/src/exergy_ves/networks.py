"""Radial power network (branch flow with conic relaxation) and gas network
(squared-pressure Weymouth relaxation) builders, plus post-solve checks."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .solver import Affine, Program, ProgramError


class TopologyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# power


@dataclass(frozen=True)
class Line:
    src: int
    dst: int
    r_ohm: float
    x_ohm: float
    p_max_kw: float = np.inf


@dataclass(frozen=True)
class PowerNetwork:
    n_nodes: int
    lines: tuple[Line, ...]
    slack: int = 0
    u_min: float = 0.95 ** 2
    u_max: float = 1.05 ** 2
    u_slack: float = 1.0
    base_kv: float = 12.66
    base_kva: float = 1000.0
    ies_nodes: dict = field(default_factory=dict)

    @property
    def z_base(self) -> float:
        return self.base_kv ** 2 / (self.base_kva / 1000.0)


def orient_tree(n_nodes: int, edges: list[tuple[int, int]], root: int) -> list[tuple[int, int, int]]:
    """BFS orientation away from ``root``; returns (edge index, parent, child)."""
    if len(edges) != n_nodes - 1:
        raise TopologyError(f"radial network needs {n_nodes - 1} branches, got {len(edges)}")
    adj: dict[int, list[tuple[int, int]]] = {k: [] for k in range(n_nodes)}
    for e, (a, b) in enumerate(edges):
        if not (0 <= a < n_nodes and 0 <= b < n_nodes) or a == b:
            raise TopologyError(f"branch {e} has invalid endpoints ({a}, {b})")
        adj[a].append((e, b))
        adj[b].append((e, a))
    seen = {root}
    order = []
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for e, m in adj[k]:
            if m not in seen:
                seen.add(m)
                order.append((e, k, m))
                queue.append(m)
    if len(seen) != n_nodes:
        raise TopologyError("network is not connected")
    return order


@dataclass
class PowerHandle:
    net: PowerNetwork
    order: list  # (line index, parent, child), oriented away from the slack
    T: int
    P: Affine  # per-unit, row l*T + t in oriented order
    Q: Affine
    I: Affine
    U: Affine  # per-unit, row k*T + t
    injection_kw: Affine  # slack injection per period
    losses_kw: Affine  # per period
    r_pu: np.ndarray
    x_pu: np.ndarray


def build_power_constraints(prog: Program, net: PowerNetwork, withdrawals: dict, reactive: dict,
                            horizon: int, prefix: str = "pn") -> PowerHandle:
    """Branch-flow model with ``I*U >= P^2 + Q^2``.

    ``withdrawals`` and ``reactive`` map node -> Affine (kW / kvar, size ``horizon``)
    of net demand at that node.
    """
    T = horizon
    for k in list(withdrawals) + list(reactive):
        if not 0 <= k < net.n_nodes:
            raise TopologyError(f"withdrawal at unknown node {k}")
    order = orient_tree(net.n_nodes, [(l.src, l.dst) for l in net.lines], net.slack)
    L = len(order)
    base = net.base_kva
    r = np.array([net.lines[e].r_ohm for e, _, _ in order]) / net.z_base
    x = np.array([net.lines[e].x_ohm for e, _, _ in order]) / net.z_base
    pmax = np.array([net.lines[e].p_max_kw for e, _, _ in order]) / base
    if np.any(r < 0) or np.any(x < 0):
        raise TopologyError("line impedances must be non-negative")

    P = prog.var(f"{prefix}.P", L * T, lb=np.repeat(-pmax, T), ub=np.repeat(pmax, T))
    Q = prog.var(f"{prefix}.Q", L * T, lb=-np.inf)
    I = prog.var(f"{prefix}.I", L * T)
    u_lb = np.full(net.n_nodes * T, net.u_min)
    u_ub = np.full(net.n_nodes * T, net.u_max)
    u_lb[net.slack * T:(net.slack + 1) * T] = net.u_slack
    u_ub[net.slack * T:(net.slack + 1) * T] = net.u_slack
    U = prog.var(f"{prefix}.U", net.n_nodes * T, lb=u_lb, ub=u_ub)
    inj = prog.var(f"{prefix}.P0", T, lb=-np.inf)
    inj_q = prog.var(f"{prefix}.Q0", T, lb=-np.inf)

    def rows(expr, k):
        return expr[k * T:(k + 1) * T]

    zero = Affine.constant(np.zeros(T))
    p_out = {k: zero for k in range(net.n_nodes)}
    q_out = dict(p_out)
    p_in = dict(p_out)
    q_in = dict(p_out)
    for li, (_, par, ch) in enumerate(order):
        p_out[par] = p_out[par] + rows(P, li)
        q_out[par] = q_out[par] + rows(Q, li)
        p_in[ch] = rows(P, li) - r[li] * rows(I, li)
        q_in[ch] = rows(Q, li) - x[li] * rows(I, li)
        # voltage drop and conic current definition
        prog.add_eq(rows(U, ch), rows(U, par) - 2.0 * (r[li] * rows(P, li) + x[li] * rows(Q, li))
                    + (r[li] ** 2 + x[li] ** 2) * rows(I, li), f"{prefix}.vdrop{li}")
        prog.add_rotated_soc(rows(I, li), rows(U, par), [rows(P, li), rows(Q, li)], f"{prefix}.cone{li}")
    p_in[net.slack] = inj / base
    q_in[net.slack] = inj_q / base
    for k in range(net.n_nodes):
        wd = withdrawals.get(k, zero) / base
        wq = reactive.get(k, zero) / base
        prog.add_eq(p_in[k], p_out[k] + wd, f"{prefix}.pbal{k}")
        prog.add_eq(q_in[k], q_out[k] + wq, f"{prefix}.qbal{k}")
    losses = zero
    for li in range(L):
        losses = losses + (r[li] * base) * rows(I, li)
    return PowerHandle(net, order, T, P, Q, I, U, inj, losses, r, x)


@dataclass
class ExactnessReport:
    gaps: np.ndarray  # lines x periods, per-unit
    tol: float

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps), initial=0.0))

    @property
    def flagged(self) -> list[tuple[int, int]]:
        return [tuple(ix) for ix in np.argwhere(np.abs(self.gaps) > self.tol)]

    @property
    def ok(self) -> bool:
        return not self.flagged


def check_socp_exactness(handle: PowerHandle, x: np.ndarray, tol: float = 1e-4) -> ExactnessReport:
    """``I*U - (P^2 + Q^2)`` per line and period (per-unit)."""
    T = handle.T
    P = handle.P.value(x).reshape(-1, T)
    Q = handle.Q.value(x).reshape(-1, T)
    I = handle.I.value(x).reshape(-1, T)
    U = handle.U.value(x).reshape(-1, T)
    parents = np.array([par for _, par, _ in handle.order], dtype=int)
    gaps = I * U[parents] - (P ** 2 + Q ** 2)
    return ExactnessReport(gaps, tol)


def power_balance_residual(handle: PowerHandle, x: np.ndarray, withdrawals_kw: dict) -> float:
    """Largest nodal active-power mismatch (kW), recomputed from the solution."""
    T, base = handle.T, handle.net.base_kva
    P = handle.P.value(x).reshape(-1, T) * base
    I = handle.I.value(x).reshape(-1, T)
    inflow = np.zeros((handle.net.n_nodes, T))
    outflow = np.zeros((handle.net.n_nodes, T))
    for li, (_, par, ch) in enumerate(handle.order):
        outflow[par] += P[li]
        inflow[ch] += P[li] - handle.r_pu[li] * base * I[li]
    inflow[handle.net.slack] += handle.injection_kw.value(x)
    demand = np.zeros((handle.net.n_nodes, T))
    for k, v in withdrawals_kw.items():
        demand[k] += v
    return float(np.max(np.abs(inflow - outflow - demand), initial=0.0))


# ---------------------------------------------------------------------------
# gas


@dataclass(frozen=True)
class Pipe:
    src: int
    dst: int
    k: float  # flow per bar of sqrt(pressure-squared difference)
    g_max: float = np.inf


@dataclass(frozen=True)
class GasNetwork:
    n_nodes: int
    pipes: tuple[Pipe, ...]
    source: int
    p_min: tuple[float, ...]  # bar, per node
    p_max: tuple[float, ...]
    ies_nodes: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.p_min) != self.n_nodes or len(self.p_max) != self.n_nodes:
            raise TopologyError("pressure bounds must be given for every node")
        if any(p.k <= 0 for p in self.pipes):
            raise TopologyError("Weymouth coefficients must be positive")


@dataclass
class GasHandle:
    net: GasNetwork
    T: int
    G: Affine  # signed flow along each pipe's (src -> dst), row p*T + t
    pi: Affine  # squared pressure, row n*T + t
    injection: Affine
    direction: Affine | None  # binaries (1 = src -> dst) when not fixed
    fixed_direction: np.ndarray | None


def _tree_directions(net: GasNetwork) -> np.ndarray | None:
    """+1/-1 per pipe if the network is a tree rooted at the source."""
    try:
        order = orient_tree(net.n_nodes, [(p.src, p.dst) for p in net.pipes], net.source)
    except TopologyError:
        return None
    sign = np.zeros(len(net.pipes))
    for e, par, _ in order:
        sign[e] = 1.0 if net.pipes[e].src == par else -1.0
    return sign


def build_gas_constraints(prog: Program, net: GasNetwork, withdrawals: dict, horizon: int,
                          prefix: str = "gn", demand_nonnegative: bool = True,
                          pressure_weight: float = 1e-4) -> GasHandle:
    """Mass balance, relaxed Weymouth flow and capacity limits.

    On a tree fed by a single source with non-negative withdrawals every flow
    direction is known in advance; otherwise per-pipe direction binaries are
    added.  A small reward on squared pressures makes the relaxation tight.
    """
    T = horizon
    for k in withdrawals:
        if not 0 <= k < net.n_nodes:
            raise TopologyError(f"withdrawal at unknown node {k}")
    p_min = np.asarray(net.p_min, dtype=float)
    p_max = np.asarray(net.p_max, dtype=float)
    if not np.all(np.isfinite(p_max)) or np.any(p_min < 0) or np.any(p_min > p_max):
        raise TopologyError("every node needs finite, ordered pressure bounds")
    n_p = len(net.pipes)
    gmax = np.array([p.g_max for p in net.pipes])
    kk = np.array([p.k for p in net.pipes])
    G = prog.var(f"{prefix}.G", n_p * T, lb=np.repeat(-gmax, T), ub=np.repeat(gmax, T))
    pi = prog.var(f"{prefix}.pi", net.n_nodes * T, lb=np.repeat(p_min ** 2, T), ub=np.repeat(p_max ** 2, T))
    inj = prog.var(f"{prefix}.inj", T, lb=0.0)

    def rows(expr, k):
        return expr[k * T:(k + 1) * T]

    sign = _tree_directions(net) if demand_nonnegative else None
    direction = None
    big = float(np.max(p_max ** 2) - np.min(p_min ** 2))
    for e, pipe in enumerate(net.pipes):
        g = rows(G, e)
        dpi = rows(pi, pipe.src) - rows(pi, pipe.dst)
        if sign is not None:
            s = sign[e]
            prog.add_ge(s * g, 0.0, f"{prefix}.dir{e}")
            prog.add_rotated_soc(s * dpi, 1.0, [g / kk[e]], f"{prefix}.weymouth{e}")
        else:
            b = prog.binary(f"{prefix}.b{e}", T)
            g_cap = gmax[e] if np.isfinite(gmax[e]) else kk[e] * np.sqrt(big)
            prog.add_le(g, g_cap * b, f"{prefix}.flowdir_hi{e}")
            prog.add_ge(g, -g_cap * (1 - b), f"{prefix}.flowdir_lo{e}")
            prog.add_ge(dpi, -big * (1 - b), f"{prefix}.pdir_lo{e}")
            prog.add_le(dpi, big * b, f"{prefix}.pdir_hi{e}")
            delta = prog.var(f"{prefix}.absdpi{e}", T)
            prog.add_ge(delta, dpi)
            prog.add_ge(delta, -dpi)
            prog.add_le(delta, dpi + 2 * big * (1 - b))
            prog.add_le(delta, -dpi + 2 * big * b)
            prog.add_rotated_soc(delta, 1.0, [g / kk[e]], f"{prefix}.weymouth{e}")
            direction = b if direction is None else Affine.concat([direction, b])
    zero = Affine.constant(np.zeros(T))
    net_in = {k: zero for k in range(net.n_nodes)}
    for e, pipe in enumerate(net.pipes):
        net_in[pipe.dst] = net_in[pipe.dst] + rows(G, e)
        net_in[pipe.src] = net_in[pipe.src] - rows(G, e)
    net_in[net.source] = net_in[net.source] + inj
    for k in range(net.n_nodes):
        prog.add_eq(net_in[k], withdrawals.get(k, zero), f"{prefix}.bal{k}")
    others = [k for k in range(net.n_nodes) if k != net.source]
    if pressure_weight > 0 and others:
        prog.minimize(-pressure_weight * Affine.concat([rows(pi, k) for k in others]).sum())
    return GasHandle(net, T, G, pi, inj, direction, sign)


@dataclass
class WeymouthReport:
    residual: np.ndarray  # |G| - k*sqrt(|dpi|), pipes x periods
    relative: np.ndarray
    active: np.ndarray
    tol: float

    @property
    def max_relative_active(self) -> float:
        return float(np.max(np.abs(self.relative[self.active]), initial=0.0))

    @property
    def flagged(self) -> list[tuple[int, int]]:
        return [tuple(ix) for ix in np.argwhere(self.active & (np.abs(self.relative) > self.tol))]

    @property
    def ok(self) -> bool:
        return not self.flagged


def weymouth_residuals(net: GasNetwork, flows: np.ndarray, pi: np.ndarray, tol: float = 0.05,
                       active_tol: float = 1e-3) -> WeymouthReport:
    """``flows`` is pipes x periods, ``pi`` is nodes x periods (squared pressures).

    A pipe is active when it carries more than ``active_tol``; relative
    residuals are taken against the carried flow.
    """
    flows = np.atleast_2d(flows)
    pi = np.atleast_2d(pi)
    kk = np.array([p.k for p in net.pipes])[:, None]
    src = np.array([p.src for p in net.pipes])
    dst = np.array([p.dst for p in net.pipes])
    dpi = pi[src] - pi[dst]
    physical = kk * np.sqrt(np.abs(dpi))
    residual = np.abs(flows) - physical
    active = np.abs(flows) > active_tol
    relative = np.where(active, residual / np.where(active, np.abs(flows), 1.0), 0.0)
    return WeymouthReport(residual, relative, active, tol)


def verify_weymouth(handle: GasHandle, x: np.ndarray, tol: float = 0.05) -> WeymouthReport:
    T = handle.T
    return weymouth_residuals(handle.net, handle.G.value(x).reshape(-1, T), handle.pi.value(x).reshape(-1, T), tol)


def gas_balance_residual(handle: GasHandle, x: np.ndarray, withdrawals: dict) -> float:
    T = handle.T
    G = handle.G.value(x).reshape(-1, T)
    bal = np.zeros((handle.net.n_nodes, T))
    for e, pipe in enumerate(handle.net.pipes):
        bal[pipe.dst] += G[e]
        bal[pipe.src] -= G[e]
    bal[handle.net.source] += handle.injection.value(x)
    for k, v in withdrawals.items():
        bal[k] -= v
    return float(np.max(np.abs(bal), initial=0.0))


__all__ = [
    "ExactnessReport", "GasHandle", "GasNetwork", "Line", "Pipe", "PowerHandle", "PowerNetwork",
    "ProgramError", "TopologyError", "WeymouthReport", "build_gas_constraints",
    "build_power_constraints", "check_socp_exactness", "gas_balance_residual", "orient_tree",
    "power_balance_residual", "verify_weymouth", "weymouth_residuals",
]
