"""Energy-quality coefficients and the virtual exergy battery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Input outside the physical domain of a formula."""


@dataclass(frozen=True)
class EqcInputs:
    """Representative temperatures in kelvin."""

    t_out: float
    t_supply: float
    t_return: float
    t_burn: float

    def __post_init__(self):
        if min(self.t_out, self.t_supply, self.t_return, self.t_burn) <= 0:
            raise DomainError("temperatures must be positive kelvin values")
        if self.t_supply <= self.t_return:
            raise DomainError("supply temperature must exceed return temperature")
        if self.t_burn <= self.t_out:
            raise DomainError("burn temperature must exceed ambient temperature")


@dataclass(frozen=True)
class Eqc:
    eps_e: float = 1.0
    eps_h: float = 0.0
    eps_g: float = 0.0

    def of(self, carrier: str) -> float:
        try:
            return {"electricity": self.eps_e, "heat": self.eps_h, "gas": self.eps_g}[carrier]
        except KeyError:
            raise DomainError(f"unknown carrier {carrier!r}") from None


@dataclass(frozen=True)
class ExergyBatteryParams:
    lambda_ch: float = 0.6
    lambda_dis: float = 1.0
    ex_ch_max: float = 0.0
    ex_dis_max: float = 0.0
    soc_max: float = 0.0
    soc_init: float = 0.0

    def __post_init__(self):
        if not 0 < self.lambda_ch <= 1:
            raise DomainError("lambda_ch must lie in (0, 1]")
        if self.lambda_dis < 1:
            raise DomainError("lambda_dis must be at least 1")
        if min(self.ex_ch_max, self.ex_dis_max, self.soc_max) < 0:
            raise DomainError("battery limits must be non-negative")
        if not 0 <= self.soc_init <= self.soc_max:
            raise DomainError("soc_init must lie in [0, soc_max]")


@dataclass
class ExergyBatteryState:
    soc: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    net_trade_out: np.ndarray = field(default=None)

    def __post_init__(self):
        self.soc = np.asarray(self.soc, dtype=float)
        self.charge = np.asarray(self.charge, dtype=float)
        self.discharge = np.asarray(self.discharge, dtype=float)
        if self.net_trade_out is None:
            self.net_trade_out = np.zeros_like(self.soc)
        self.net_trade_out = np.asarray(self.net_trade_out, dtype=float)


def eqc_heat(inputs: EqcInputs) -> float:
    """Quality of heat carried between supply and return temperatures."""
    ts, tr, to = inputs.t_supply, inputs.t_return, inputs.t_out
    if ts <= tr or tr <= 0 or to <= 0:
        raise DomainError("need t_supply > t_return > 0 and t_out > 0")
    # log1p keeps the ratio accurate when the two temperatures nearly coincide
    return 1.0 - to / (ts - tr) * math.log1p((ts - tr) / tr)


def eqc_gas(inputs: EqcInputs) -> float:
    """Quality of gas burnt at ``t_burn`` relative to ambient ``t_out``."""
    tb, to = inputs.t_burn, inputs.t_out
    if tb <= to or to <= 0:
        raise DomainError("need t_burn > t_out > 0")
    return 1.0 - to / (tb - to) * math.log1p((tb - to) / to)


def compute_eqc(inputs: EqcInputs) -> Eqc:
    return Eqc(1.0, eqc_heat(inputs), eqc_gas(inputs))


def _nonneg(*flows: float) -> None:
    if any(f < 0 for f in flows):
        raise DomainError("flows must be non-negative")


def energy_to_exergy(amount: float, carrier: str, eqc: Eqc) -> float:
    _nonneg(amount)
    return amount * eqc.of(carrier)


def charge_exergy(p_ch: float, h_ch: float, g_ch: float, params: ExergyBatteryParams, eqc: Eqc) -> float:
    _nonneg(p_ch, h_ch, g_ch)
    return params.lambda_ch * (p_ch * eqc.eps_e + h_ch * eqc.eps_h + g_ch * eqc.eps_g)


def discharge_exergy(p_dis: float, g_dis: float, params: ExergyBatteryParams, eqc: Eqc) -> float:
    # heat cannot be withdrawn: nothing downstream deducts a heat bill
    _nonneg(p_dis, g_dis)
    return (p_dis * eqc.eps_e + g_dis * eqc.eps_g) / params.lambda_dis


def step_soc(prev: float, ex_ch: float, ex_dis: float, net_trade_out: float = 0.0) -> float:
    return prev + ex_ch - ex_dis - net_trade_out


def simulate_soc(soc_init: float, charge: Sequence[float], discharge: Sequence[float],
                 net_trade_out: Sequence[float] | None = None) -> np.ndarray:
    charge = np.asarray(charge, dtype=float)
    trade = np.zeros_like(charge) if net_trade_out is None else np.asarray(net_trade_out, dtype=float)
    soc = np.empty_like(charge)
    prev = soc_init
    for t in range(len(charge)):
        prev = step_soc(prev, charge[t], discharge[t], trade[t])
        soc[t] = prev
    return soc


@dataclass(frozen=True)
class Violation:
    kind: str
    period: int
    amount: float


def validate_battery_trajectory(state: ExergyBatteryState, params: ExergyBatteryParams,
                                tol: float = 1e-6) -> list[Violation]:
    """Every violated bound, recursion step, or cyclic condition (0-based periods)."""
    n = len(state.soc)
    if not (len(state.charge) == len(state.discharge) == len(state.net_trade_out) == n):
        raise ValueError("battery trajectory sequences differ in length")
    out: list[Violation] = []

    def check(kind, values, limit=None, lower=None):
        for t, v in enumerate(values):
            if lower is not None and v < lower - tol:
                out.append(Violation(f"{kind}-lower", t, float(lower - v)))
            if limit is not None and v > limit + tol:
                out.append(Violation(f"{kind}-upper", t, float(v - limit)))

    check("soc", state.soc, params.soc_max, 0.0)
    check("charge", state.charge, params.ex_ch_max, 0.0)
    check("discharge", state.discharge, params.ex_dis_max, 0.0)
    prev = params.soc_init
    for t in range(n):
        expect = step_soc(prev, state.charge[t], state.discharge[t], state.net_trade_out[t])
        if abs(state.soc[t] - expect) > tol:
            out.append(Violation("recursion", t, float(abs(state.soc[t] - expect))))
        prev = state.soc[t]
    if n and abs(state.soc[-1] - params.soc_init) > tol:
        out.append(Violation("cyclic", n - 1, float(abs(state.soc[-1] - params.soc_init))))
    return out
