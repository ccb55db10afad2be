"""Shared-exergy market: trade ledger, bargaining power, price (P2) subproblems
and settlement.

Sign conventions.  ``volumes[i, j, t] > 0`` means IES ``i`` sells exergy to
``j`` in period ``t``.  Prices are per kW of exergy and symmetric.  The money
IES ``i`` receives is ``sum_jt volumes[i, j, t] * prices[i, j, t]``, which is
what :func:`settle_payments` returns; the corresponding cost entry of ``i`` is
its negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exergy import DomainError
from .solver import Program, SolveOptions, solve, solve_scalar_log_subproblem


class BargainingInfeasible(ValueError):
    """A group of trading IESs has no positive joint surplus to divide."""

    def __init__(self, agents, base: float):
        self.agents = tuple(int(a) for a in agents)
        self.base = base
        super().__init__(f"IES {list(self.agents)}: joint surplus base {base:.6g} is not positive")


@dataclass
class TradeLedger:
    volumes: np.ndarray  # (n, n, T), kW of exergy, antisymmetric
    prices: np.ndarray  # (n, n, T), CNY per kW, symmetric

    def __post_init__(self):
        self.volumes = np.asarray(self.volumes, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        if self.volumes.ndim != 3 or self.volumes.shape[0] != self.volumes.shape[1]:
            raise ValueError("volumes must have shape (n, n, T)")
        if self.prices.shape != self.volumes.shape:
            raise ValueError("prices and volumes differ in shape")

    @classmethod
    def zeros(cls, n: int, horizon: int) -> "TradeLedger":
        return cls(np.zeros((n, n, horizon)), np.zeros((n, n, horizon)))

    @property
    def n(self) -> int:
        return self.volumes.shape[0]

    @property
    def horizon(self) -> int:
        return self.volumes.shape[2]

    def antisymmetry_gap(self) -> float:
        return float(np.max(np.abs(self.volumes + self.volumes.transpose(1, 0, 2)), initial=0.0))

    def price_gap(self) -> float:
        return float(np.max(np.abs(self.prices - self.prices.transpose(1, 0, 2)), initial=0.0))

    def projected(self) -> "TradeLedger":
        """Nearest ledger with exact antisymmetry and price symmetry."""
        v = 0.5 * (self.volumes - self.volumes.transpose(1, 0, 2))
        c = 0.5 * (self.prices + self.prices.transpose(1, 0, 2))
        idx = np.arange(self.n)
        v[idx, idx] = 0.0
        c[idx, idx] = 0.0
        return TradeLedger(v, c)

    def rows(self):
        """Long-format records ``(i, j, t, volume, price)`` for ``i != j``."""
        n, _, T = self.volumes.shape
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                for t in range(T):
                    yield i, j, t, float(self.volumes[i, j, t]), float(self.prices[i, j, t])


def supply_demand(ledger: TradeLedger, i: int) -> tuple[float, float]:
    """Total exergy IES ``i`` sold and bought over the horizon."""
    row = np.delete(ledger.volumes[i], i, axis=0)
    return float(np.maximum(row, 0.0).sum()), float(np.maximum(-row, 0.0).sum())


def bargaining_power(sup: float, dem: float, sup_max: float, dem_max: float) -> float:
    """``exp(sup/sup_max) - exp(-dem/dem_max)``; zero for an IES that did not trade."""
    if min(sup, dem, sup_max, dem_max) < 0:
        raise DomainError("supply and demand must be non-negative")
    if sup > sup_max or dem > dem_max:
        raise DomainError("supply or demand exceeds the alliance maximum")
    up = sup / sup_max if sup_max > 0 else 0.0
    down = dem / dem_max if dem_max > 0 else 0.0
    return math.exp(up) - math.exp(-down)


@dataclass(frozen=True)
class BargainingWeights:
    supply: np.ndarray
    demand: np.ndarray
    power: np.ndarray


def bargaining_weights(ledger: TradeLedger, zero_tol: float = 0.0) -> BargainingWeights:
    """Supply, demand and bargaining power of every IES.

    Volumes with magnitude at most ``zero_tol`` count as no trade.
    """
    vol = np.where(np.abs(ledger.volumes) > zero_tol, ledger.volumes, 0.0)
    clean = TradeLedger(vol, ledger.prices)
    sd = np.array([supply_demand(clean, i) for i in range(ledger.n)]).reshape(ledger.n, 2)
    sup, dem = sd[:, 0], sd[:, 1]
    s_max, d_max = float(sup.max(initial=0.0)), float(dem.max(initial=0.0))
    q = np.array([bargaining_power(s, d, s_max, d_max) for s, d in zip(sup, dem)])
    return BargainingWeights(sup, dem, q)


def settle_payments(ledger: TradeLedger) -> np.ndarray:
    """Net money received by each IES, ``sum_jt volumes[i,j,t] * prices[i,j,t]``."""
    return np.einsum("ijt,ijt->i", ledger.volumes, ledger.prices)


def surplus_bases(standalone_costs, retail_costs, idr_costs) -> np.ndarray:
    """Cost saving of each IES before exergy payments, relative to going alone."""
    return (np.asarray(standalone_costs, dtype=float) - np.asarray(retail_costs, dtype=float)
            - np.asarray(idr_costs, dtype=float))


def surplus_shares(bases, ledger: TradeLedger) -> np.ndarray:
    """Final surplus of each IES: its base plus net exergy receipts."""
    return np.asarray(bases, dtype=float) + settle_payments(ledger)


def symmetric_split(total_surplus: float, n: int) -> np.ndarray:
    """Equal division of ``total_surplus`` among ``n`` IESs."""
    if n <= 0:
        raise DomainError("need at least one IES")
    return np.full(n, total_surplus / n)


def asymmetric_split(total_surplus: float, power) -> np.ndarray:
    """Closed-form asymmetric Nash division: shares proportional to bargaining power."""
    q = np.asarray(power, dtype=float)
    if np.any(q < 0):
        raise DomainError("bargaining power must be non-negative")
    if q.sum() <= 0:
        return np.zeros_like(q)
    return total_surplus * q / q.sum()


# ---------------------------------------------------------------------------
# P2: price subproblems


def _peers(n: int, i: int) -> list[int]:
    return [j for j in range(n) if j != i]


def trading_groups(volumes: np.ndarray) -> list[list[int]]:
    """Connected components of the trade graph, ignoring IESs that do not trade."""
    linked = np.any(np.asarray(volumes) != 0, axis=2)
    linked = linked | linked.T
    seen, groups = set(), []
    for start in np.flatnonzero(linked.any(axis=1)):
        if start in seen:
            continue
        group, stack = [], [int(start)]
        seen.add(start)
        while stack:
            i = stack.pop()
            group.append(i)
            for j in np.flatnonzero(linked[i]):
                if j not in seen:
                    seen.add(j)
                    stack.append(int(j))
        groups.append(sorted(group))
    return groups


def check_bargaining_feasible(bases, volumes: np.ndarray) -> None:
    """Payments move surplus freely inside a group of linked traders, so a price
    vector giving every trader a positive share exists exactly when each group's
    joint base is positive.  A single seller may start below zero."""
    bases = np.asarray(bases, dtype=float)
    for group in trading_groups(volumes):
        total = float(bases[group].sum())
        if total <= 0:
            raise BargainingInfeasible(group, total)


@dataclass
class P2Subproblem:
    """Price update of IES ``i``: its row of prices toward every peer.

    Minimizes ``-q*ln(base - cost(c)) + theta.(c - anchor) + rho/2*||c - anchor||^2``
    where ``cost(c) = -sum_jt volumes[i,j,t] * c[j,t]`` is i's exergy bill and
    ``anchor`` is the pair's midpoint price ``(c_ij + c_ji)/2`` from the previous
    iterate.  Anchoring both sides on the midpoint makes the parallel update a
    two-block ADMM (agent copies, then pair prices), which converges; anchoring
    on the peer's own copy can oscillate and diverge.
    """

    i: int
    q: float
    base: float
    coeffs: np.ndarray  # (n-1, T): bill per unit price
    anchor: np.ndarray  # (n-1, T): pair midpoint prices from the previous iterate
    multipliers: np.ndarray  # (n-1, T): theta_ij
    rho: float

    def solve(self) -> np.ndarray:
        c = solve_scalar_log_subproblem(self.q, self.base, self.coeffs.ravel(), self.anchor.ravel(),
                                        self.multipliers.ravel(), self.rho)
        return c.reshape(self.coeffs.shape)

    def objective(self, prices: np.ndarray) -> float:
        arg = self.base - float(np.sum(self.coeffs * prices))
        if self.q > 0 and arg <= 0:
            return math.inf
        gap = prices - self.anchor
        log_term = -self.q * math.log(arg) if self.q > 0 else 0.0
        return log_term + float(np.sum(self.multipliers * gap)) + 0.5 * self.rho * float(np.sum(gap ** 2))

    def to_program(self) -> Program:
        """The same subproblem as a conic program (exponential cone)."""
        prog = Program(name=f"p2_ies{self.i}")
        c = prog.var("c", self.coeffs.size, lb=-np.inf)
        if self.q > 0:
            prog.add_neg_log(self.q, self.base - c.dot(self.coeffs.ravel()), "surplus")
        gap = c - self.anchor.ravel()
        prog.minimize(gap.dot(self.multipliers.ravel()))
        prog.add_squares(np.full(c.size, self.rho / 2), gap, "price_consensus")
        return prog


def build_p2_subproblem(i: int, q_i: float, surplus_base_i: float, volumes: np.ndarray, prices: np.ndarray,
                        multipliers: np.ndarray, rho_p2: float) -> P2Subproblem:
    """Subproblem of IES ``i`` given the ledger volumes and the previous price iterate.

    ``prices[i, j]`` and ``prices[j, i]`` are the two copies of the pair's price;
    ``multipliers[i, j]`` is i's multiplier on its copy.
    """
    volumes = np.asarray(volumes, dtype=float)
    prices = np.asarray(prices, dtype=float)
    n = volumes.shape[0]
    peers = _peers(n, i)
    coeffs = -volumes[i, peers]
    anchor = 0.5 * (prices[i, peers] + prices[peers, i])
    return P2Subproblem(i, float(q_i), float(surplus_base_i), coeffs, anchor,
                        np.asarray(multipliers)[i, peers].copy(), float(rho_p2))


def p2_multiplier_update(multipliers: np.ndarray, rho: float, prices: np.ndarray) -> np.ndarray:
    """``theta_ij += rho * (c_ij - (c_ij + c_ji)/2)``; stays antisymmetric."""
    return multipliers + 0.5 * rho * (prices - prices.transpose(1, 0, 2))


def p2_residuals(prices_now: np.ndarray, prices_prev: np.ndarray) -> tuple[float, float]:
    """Primal ``sum |c_ij - c_ji|`` and dual ``sum |c^(k+1) - c^(k)|`` over all ordered pairs."""
    primal = float(np.sum(np.abs(prices_now - prices_now.transpose(1, 0, 2))))
    dual = float(np.sum(np.abs(prices_now - prices_prev)))
    return primal, dual


def solve_p2_centralized(power, bases, volumes: np.ndarray, options: SolveOptions | None = None) -> np.ndarray:
    """Joint price solve with one symmetric price per pair (reference for the ADMM).

    Maximizes ``sum_i q_i * ln(base_i + receipts_i)`` over symmetric prices.
    Returns the full symmetric price array; pairs without trade keep price 0.
    """
    volumes = np.asarray(volumes, dtype=float)
    n, _, T = volumes.shape
    q = np.asarray(power, dtype=float)
    bases = np.asarray(bases, dtype=float)
    prog = Program(name="p2_central")
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    price = {p: prog.var(f"c{p[0]}_{p[1]}", T, lb=-np.inf) for p in pairs}
    for i in range(n):
        receipts = None
        for j in _peers(n, i):
            p = (min(i, j), max(i, j))
            term = price[p].dot(volumes[i, j])
            receipts = term if receipts is None else receipts + term
        if q[i] > 0:
            prog.add_neg_log(q[i], bases[i] + receipts, f"surplus{i}")
    # fix the non-unique direction with a tiny pull toward zero
    for p in pairs:
        prog.add_squares(1e-9, price[p], "tie_break")
    sol = solve(prog, options)
    if not sol.ok:
        raise RuntimeError(f"centralized price problem ended with status {sol.status}")
    out = np.zeros((n, n, T))
    for (i, j), var in price.items():
        out[i, j] = out[j, i] = var.value(sol.x)
    return out
