"""IES devices: micro gas turbine, heat recovery, building thermal model and
flexible electric loads."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exergy import DomainError
from .solver import Affine, Program


@dataclass(frozen=True)
class MgtParams:
    eta_gt: float
    p_min: float
    p_max: float
    calorific_value: float  # kWh per m3

    def __post_init__(self):
        if not 0 < self.eta_gt < 1:
            raise DomainError("eta_gt must lie in (0, 1)")
        if not 0 <= self.p_min <= self.p_max:
            raise DomainError("need 0 <= p_min <= p_max")
        if self.calorific_value <= 0:
            raise DomainError("calorific value must be positive")


@dataclass(frozen=True)
class HrsgParams:
    eta_qb: float
    eta_rec: float
    eta_loss: float
    p_qb_min: float = 0.0
    p_qb_max: float = math.inf

    def __post_init__(self):
        for name in ("eta_qb", "eta_rec", "eta_loss"):
            if not 0 < getattr(self, name) < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        if not 0 <= self.p_qb_min <= self.p_qb_max:
            raise DomainError("need 0 <= p_qb_min <= p_qb_max")


@dataclass(frozen=True)
class BuildingParams:
    thermal_resistance: float  # K/kW
    thermal_capacitance: float  # kWh/K
    t_in_min: float
    t_in_max: float
    t_in_init: float

    def __post_init__(self):
        if self.thermal_resistance <= 0 or self.thermal_capacitance <= 0:
            raise DomainError("R and C must be positive")
        if not self.t_in_min <= self.t_in_init <= self.t_in_max:
            raise DomainError("need t_in_min <= t_in_init <= t_in_max")

    def decay(self, dt: float) -> float:
        return math.exp(-dt / (self.thermal_resistance * self.thermal_capacitance))


@dataclass(frozen=True)
class ShiftableDevice:
    rated_power: float
    total_energy: float
    baseline: tuple[int, ...]
    window: tuple[int, int] | None = None  # first and last allowed period, 0-based inclusive

    def allowed(self, horizon: int) -> np.ndarray:
        mask = np.ones(horizon, dtype=bool)
        if self.window is not None:
            first, last = self.window
            mask[:] = False
            mask[max(first, 0):min(last, horizon - 1) + 1] = True
        return mask


@dataclass(frozen=True)
class FlexLoadParams:
    cur_max: tuple[float, ...]
    devices: tuple[ShiftableDevice, ...] = ()
    cost_cur: float = 0.0
    cost_tr: float = 0.0
    cost_hdr: float = 0.0

    def __post_init__(self):
        if any(c < 0 for c in self.cur_max):
            raise DomainError("cur_max must be non-negative")
        if min(self.cost_cur, self.cost_tr, self.cost_hdr) < 0:
            raise DomainError("IDR cost coefficients must be non-negative")


def mgt_power(gas_in: float, params: MgtParams) -> float:
    if gas_in < 0:
        raise DomainError("gas input must be non-negative")
    return params.calorific_value * params.eta_gt * gas_in


def hrsg_ratio(mgt: MgtParams, hrsg: HrsgParams) -> float:
    """Recovered heat per unit of turbine electric output."""
    if mgt.eta_gt <= 0:
        raise DomainError("eta_gt must be positive")
    return max(0.0, 1.0 - mgt.eta_gt - hrsg.eta_loss) / mgt.eta_gt * hrsg.eta_qb * hrsg.eta_rec


def hrsg_heat(p_gt: float, mgt: MgtParams, hrsg: HrsgParams) -> float:
    if p_gt < 0:
        raise DomainError("turbine output must be non-negative")
    return p_gt * hrsg_ratio(mgt, hrsg)


def etp_step(t_in_prev: float, t_out: float, heat_in: float, params: BuildingParams, dt: float) -> float:
    if dt <= 0:
        raise DomainError("dt must be positive")
    if params.thermal_resistance * params.thermal_capacitance <= 0:
        raise DomainError("R*C must be positive")
    a = params.decay(dt)
    return t_in_prev * a + (1.0 - a) * (t_out + params.thermal_resistance * heat_in)


def etp_steady_heat(t_in: float, t_out: float, params: BuildingParams) -> float:
    """Heat input that holds the indoor temperature constant at ``t_in``."""
    return (t_in - t_out) / params.thermal_resistance


def add_etp_constraints(prog: Program, heat: Affine, t_out: Sequence[float], params: BuildingParams,
                        dt: float, prefix: str) -> Affine:
    """Indoor temperature recursion driven by ``heat``; returns the temperature expression."""
    T = heat.size
    t_in = prog.var(f"{prefix}.t_in", T, lb=params.t_in_min, ub=params.t_in_max)
    a = params.decay(dt)
    prev = t_in.shift(1, params.t_in_init)
    prog.add_eq(t_in, a * prev + (1.0 - a) * (np.asarray(t_out, dtype=float) + params.thermal_resistance * heat),
                f"{prefix}.etp")
    return t_in


@dataclass
class TransferableHandle:
    """Expressions produced by :func:`transferable_profile_constraints`."""

    device_power: list[Affine] = field(default_factory=list)
    on: list[Affine] = field(default_factory=list)
    transfer: Affine | None = None


def check_device_budget(device: ShiftableDevice, horizon: int, dt: float = 1.0) -> int:
    """Number of on-periods a device needs; raises when the budget is not whole."""
    if len(device.baseline) != horizon:
        raise DomainError("device baseline length differs from the horizon")
    if device.rated_power <= 0:
        raise DomainError("rated power must be positive")
    k = device.total_energy / (device.rated_power * dt)
    if abs(k - round(k)) > 1e-9 or not 0 <= round(k) <= horizon:
        raise DomainError(f"total energy {device.total_energy} is not a whole number of rated periods")
    if abs(sum(device.baseline) * device.rated_power * dt - device.total_energy) > 1e-9:
        raise DomainError("baseline schedule does not use the device's total energy")
    allowed = device.allowed(horizon)
    if any(b and not a for b, a in zip(device.baseline, allowed)):
        raise DomainError("baseline schedule runs outside the device window")
    return int(round(k))


def transferable_profile_constraints(prog: Program, params: FlexLoadParams, horizon: int, prefix: str,
                                     dt: float = 1.0) -> TransferableHandle:
    handle = TransferableHandle()
    transfer = Affine.constant(np.zeros(horizon))
    for d, dev in enumerate(params.devices):
        check_device_budget(dev, horizon, dt)
        allowed = np.flatnonzero(dev.allowed(horizon))
        u_open = prog.binary(f"{prefix}.dev{d}.on", len(allowed))
        # outside its window a device is off, so only allowed periods get binaries
        u = Affine(horizon, allowed[u_open.rows], u_open.cols, u_open.vals)
        p = u * dev.rated_power
        prog.add_eq(p.sum() * dt, dev.total_energy, f"{prefix}.dev{d}.energy")
        transfer = transfer + (np.asarray(dev.baseline, dtype=float) * dev.rated_power - p)
        handle.on.append(u)
        handle.device_power.append(p)
    handle.transfer = transfer
    return handle


def idr_loss_cost(p_cur: Sequence[float], p_tr: Sequence[float], d_heat: Sequence[float],
                  params: FlexLoadParams) -> float:
    p_cur = np.asarray(p_cur, dtype=float)
    p_tr = np.asarray(p_tr, dtype=float)
    d_heat = np.asarray(d_heat, dtype=float)
    if not (p_cur.shape == p_tr.shape == d_heat.shape):
        raise ValueError("sequences must share the horizon")
    if np.any(p_cur < -1e-12):
        raise DomainError("curtailment must be non-negative")
    return float(params.cost_cur * p_cur.sum() + params.cost_tr * np.maximum(p_tr, 0).sum()
                 + params.cost_hdr * np.maximum(-d_heat, 0).sum())


def add_idr_cost(prog: Program, p_cur: Affine, p_tr: Affine, d_heat: Affine, params: FlexLoadParams,
                 prefix: str) -> Affine:
    """IDR cost expression; positive parts become epigraph variables."""
    T = p_cur.size
    cost = params.cost_cur * p_cur.sum()
    if params.cost_tr > 0:
        z_tr = prog.var(f"{prefix}.tr_pos", T)
        prog.add_ge(z_tr, p_tr, f"{prefix}.tr_pos")
        cost = cost + params.cost_tr * z_tr.sum()
    if params.cost_hdr > 0:
        z_h = prog.var(f"{prefix}.heat_cut", T)
        prog.add_ge(z_h, -d_heat, f"{prefix}.heat_cut")
        cost = cost + params.cost_hdr * z_h.sum()
    return cost
