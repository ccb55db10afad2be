"""Scenario schema, loading and validation."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field, ValidationError,
                      model_validator)

from . import devices, exergy, networks

SCHEMA_VERSION = 1
KELVIN_OFFSET = 273.15


class ScenarioError(ValueError):
    """All problems found in a scenario file."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


def _to_kelvin(v):
    """Accept kelvin numbers or ``{"value": x, "unit": "C"|"K"}``."""
    if isinstance(v, dict):
        unit = str(v.get("unit", "K")).upper().replace("°", "")
        val = v.get("value")
        if not isinstance(val, (int, float)):
            raise ValueError("temperature value must be a number")
        if unit in ("C", "DEGC", "CELSIUS"):
            return float(val) + KELVIN_OFFSET
        if unit in ("K", "KELVIN"):
            return float(val)
        raise ValueError(f"unknown temperature unit {unit!r}")
    return v


def _series_to_kelvin(v):
    if isinstance(v, dict) and "values" in v:
        return [_to_kelvin({"value": x, "unit": v.get("unit", "K")}) for x in v["values"]]
    if isinstance(v, list):
        return [_to_kelvin(x) for x in v]
    return v


Kelvin = Annotated[float, BeforeValidator(_to_kelvin), Field(gt=0)]
KelvinSeries = Annotated[list[Annotated[float, Field(gt=0)]], BeforeValidator(_series_to_kelvin)]
NonNeg = Annotated[float, Field(ge=0)]
Fraction = Annotated[float, Field(gt=0, lt=1)]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Horizon(_Model):
    periods: int = Field(ge=1)
    dt_hours: float = Field(gt=0)


class Prices(_Model):
    ele_sell: list[NonNeg]
    ele_buy: list[NonNeg]
    gas_sell: list[NonNeg]
    da_ele: list[NonNeg]
    da_gas: list[NonNeg]
    ml_ele: list[NonNeg]
    ml_gas: list[NonNeg]


class EqcSpec(_Model):
    t_out: Kelvin
    t_supply: Kelvin
    t_return: Kelvin
    t_burn: Kelvin


class BatterySpec(_Model):
    lambda_ch: float = Field(gt=0, le=1)
    lambda_dis: float = Field(ge=1)
    ex_ch_max: NonNeg
    ex_dis_max: NonNeg
    soc_max: NonNeg
    soc_init: NonNeg = 0.0


class MgtSpec(_Model):
    eta_gt: Fraction
    p_min: NonNeg
    p_max: NonNeg


class HrsgSpec(_Model):
    eta_qb: Fraction
    eta_rec: Fraction
    eta_loss: Fraction
    p_qb_min: NonNeg = 0.0
    p_qb_max: Optional[NonNeg] = None


class BuildingSpec(_Model):
    thermal_resistance: float = Field(gt=0)
    thermal_capacitance: float = Field(gt=0)
    t_in_min: Kelvin
    t_in_max: Kelvin
    t_in_init: Kelvin
    t_outdoor: KelvinSeries


class DeviceSpec(_Model):
    rated_power: float = Field(gt=0)
    total_energy: NonNeg
    baseline: list[Literal[0, 1]]
    window: Optional[tuple[int, int]] = Field(default=None, description="first and last allowed hour, 1-based")


class FlexSpec(_Model):
    cur_max: list[NonNeg]
    devices: list[DeviceSpec] = []
    cost_cur: NonNeg = 0.0
    cost_tr: NonNeg = 0.0
    cost_hdr: NonNeg = 0.0


class IesSpec(_Model):
    id: str
    power_node: int = Field(ge=1)
    gas_node: Optional[int] = Field(default=None, ge=1)
    p_load0: list[NonNeg]
    g_load0: list[NonNeg]
    mgt_gas0: list[NonNeg] = Field(description="baseline turbine gas use, m3 per period")
    mgt: Optional[MgtSpec] = None
    hrsg: Optional[HrsgSpec] = None
    building: Optional[BuildingSpec] = None
    flex: FlexSpec
    battery: BatterySpec
    p_tran_max: float = Field(gt=0)
    g_tran_max: float = Field(gt=0)


class VesSpec(_Model):
    ml_ele_max: list[NonNeg]
    ml_gas_max: list[NonNeg]
    da_ele_max: float = Field(gt=0)
    da_gas_max: float = Field(gt=0)


class LineSpec(_Model):
    src: int = Field(ge=1)
    dst: int = Field(ge=1)
    r_ohm: NonNeg
    x_ohm: NonNeg
    p_max_kw: float = Field(default=1e9, gt=0)


class PowerNetworkSpec(_Model):
    n_nodes: int = Field(ge=1)
    slack: int = Field(default=1, ge=1)
    v_min: float = Field(default=0.95, gt=0)
    v_max: float = Field(default=1.05, gt=0)
    v_slack: float = Field(default=1.0, gt=0)
    base_kv: float = Field(default=12.66, gt=0)
    base_kva: float = Field(default=1000.0, gt=0)
    power_factor: float = Field(default=0.95, gt=0, le=1)
    lines: list[LineSpec]


class PipeSpec(_Model):
    src: int = Field(ge=1)
    dst: int = Field(ge=1)
    k: float = Field(gt=0)
    g_max: float = Field(default=1e9, gt=0)


class GasNetworkSpec(_Model):
    n_nodes: int = Field(ge=1)
    source: int = Field(ge=1)
    p_min: list[NonNeg]
    p_max: list[NonNeg]
    pipes: list[PipeSpec]
    pressure_weight: NonNeg = 1e-4


class AdmmParams(_Model):
    rho_out: float = Field(default=0.01, gt=0)
    rho_in: float = Field(default=0.01, gt=0)
    rho_p1: float = Field(default=0.01, gt=0)
    rho_p2: float = Field(default=0.01, gt=0)
    eps_out: float = Field(default=1e-2, gt=0)
    eps_p1: float = Field(default=1e-2, gt=0)
    delta_p1: float = Field(default=1e-2, gt=0)
    eps_p2: float = Field(default=1e-2, gt=0)
    delta_p2: float = Field(default=1e-2, gt=0)
    max_iter_out: int = Field(default=50, ge=1)
    max_iter_p1: int = Field(default=200, ge=1)
    max_iter_p2: int = Field(default=20000, ge=1)
    seed: int = 0


class Scenario(_Model):
    schema_version: int
    name: str = ""
    horizon: Horizon
    prices: Prices
    eqc: EqcSpec
    calorific_value: float = Field(gt=0)
    ves: VesSpec
    ies: list[IesSpec] = Field(min_length=1)
    power_network: PowerNetworkSpec
    gas_network: Optional[GasNetworkSpec] = None
    admm: AdmmParams = AdmmParams()
    case: Literal[1, 2, 3] = 3
    data_sources: dict[str, Union[str, list[str]]] = {}

    @model_validator(mode="after")
    def _cross_checks(self):
        issues = scenario_issues(self)
        if issues:
            raise ValueError("; ".join(issues))
        return self

    # -- derived objects ---------------------------------------------------------
    @property
    def T(self) -> int:
        return self.horizon.periods

    @property
    def n_ies(self) -> int:
        return len(self.ies)

    def eqc_values(self) -> exergy.Eqc:
        e = self.eqc
        return exergy.compute_eqc(exergy.EqcInputs(e.t_out, e.t_supply, e.t_return, e.t_burn))

    def power_net(self) -> networks.PowerNetwork:
        pn = self.power_network
        lines = tuple(networks.Line(l.src - 1, l.dst - 1, l.r_ohm, l.x_ohm, l.p_max_kw) for l in pn.lines)
        return networks.PowerNetwork(pn.n_nodes, lines, pn.slack - 1, pn.v_min ** 2, pn.v_max ** 2,
                                     pn.v_slack ** 2, pn.base_kv, pn.base_kva,
                                     {i: s.power_node - 1 for i, s in enumerate(self.ies)})

    def gas_net(self) -> networks.GasNetwork | None:
        gn = self.gas_network
        if gn is None:
            return None
        pipes = tuple(networks.Pipe(p.src - 1, p.dst - 1, p.k, p.g_max) for p in gn.pipes)
        return networks.GasNetwork(gn.n_nodes, pipes, gn.source - 1, tuple(gn.p_min), tuple(gn.p_max),
                                   {i: s.gas_node - 1 for i, s in enumerate(self.ies) if s.gas_node})

    def battery(self, i: int) -> exergy.ExergyBatteryParams:
        b = self.ies[i].battery
        return exergy.ExergyBatteryParams(b.lambda_ch, b.lambda_dis, b.ex_ch_max, b.ex_dis_max, b.soc_max, b.soc_init)

    def mgt(self, i: int) -> devices.MgtParams | None:
        m = self.ies[i].mgt
        return None if m is None else devices.MgtParams(m.eta_gt, m.p_min, m.p_max, self.calorific_value)

    def hrsg(self, i: int) -> devices.HrsgParams | None:
        h = self.ies[i].hrsg
        return None if h is None else devices.HrsgParams(h.eta_qb, h.eta_rec, h.eta_loss, h.p_qb_min,
                                                                   math.inf if h.p_qb_max is None else h.p_qb_max)

    def building(self, i: int) -> devices.BuildingParams | None:
        b = self.ies[i].building
        if b is None:
            return None
        return devices.BuildingParams(b.thermal_resistance, b.thermal_capacitance, b.t_in_min, b.t_in_max,
                                      b.t_in_init)

    def flex(self, i: int) -> devices.FlexLoadParams:
        f = self.ies[i].flex
        devs = tuple(_device(d) for d in f.devices)
        return devices.FlexLoadParams(tuple(f.cur_max), devs, f.cost_cur, f.cost_tr, f.cost_hdr)

    def with_case(self, case: int) -> "Scenario":
        return self.model_copy(update={"case": case})

    def with_admm(self, **overrides) -> "Scenario":
        return self.model_copy(update={"admm": self.admm.model_copy(update=overrides)})


def _device(d: DeviceSpec) -> devices.ShiftableDevice:
    window = None if d.window is None else (d.window[0] - 1, d.window[1] - 1)
    return devices.ShiftableDevice(d.rated_power, d.total_energy, tuple(d.baseline), window)


def scenario_issues(sc: Scenario) -> list[str]:
    """Cross-field checks: horizons, node references, physical consistency."""
    T = sc.horizon.periods
    out: list[str] = []

    def length(path: str, seq) -> None:
        if len(seq) != T:
            out.append(f"{path}: length {len(seq)} does not match horizon.periods={T}")

    for name in Prices.model_fields:
        length(f"prices.{name}", getattr(sc.prices, name))
    length("ves.ml_ele_max", sc.ves.ml_ele_max)
    length("ves.ml_gas_max", sc.ves.ml_gas_max)
    if sc.eqc.t_supply <= sc.eqc.t_return:
        out.append("eqc.t_supply: must exceed eqc.t_return")
    if sc.eqc.t_burn <= sc.eqc.t_out:
        out.append("eqc.t_burn: must exceed eqc.t_out")

    pn = sc.power_network
    if not 1 <= pn.slack <= pn.n_nodes:
        out.append(f"power_network.slack: node {pn.slack} does not exist")
    if pn.v_min > pn.v_max:
        out.append("power_network.v_min: exceeds v_max")
    for k, line in enumerate(pn.lines):
        for end in ("src", "dst"):
            if not 1 <= getattr(line, end) <= pn.n_nodes:
                out.append(f"power_network.lines[{k}].{end}: node {getattr(line, end)} does not exist")
    if not out:
        try:
            networks.orient_tree(pn.n_nodes, [(l.src - 1, l.dst - 1) for l in pn.lines], pn.slack - 1)
        except networks.TopologyError as exc:
            out.append(f"power_network.lines: {exc}")

    gn = sc.gas_network
    if gn is not None:
        if not 1 <= gn.source <= gn.n_nodes:
            out.append(f"gas_network.source: node {gn.source} does not exist")
        if len(gn.p_min) != gn.n_nodes or len(gn.p_max) != gn.n_nodes:
            out.append("gas_network.p_min/p_max: need one bound per node")
        elif any(a > b for a, b in zip(gn.p_min, gn.p_max)):
            out.append("gas_network.p_min: exceeds p_max")
        for k, pipe in enumerate(gn.pipes):
            for end in ("src", "dst"):
                if not 1 <= getattr(pipe, end) <= gn.n_nodes:
                    out.append(f"gas_network.pipes[{k}].{end}: node {getattr(pipe, end)} does not exist")

    ids = [s.id for s in sc.ies]
    if len(set(ids)) != len(ids):
        out.append("ies: duplicate ids")
    for i, s in enumerate(sc.ies):
        p = f"ies[{i}]"
        for name in ("p_load0", "g_load0", "mgt_gas0"):
            length(f"{p}.{name}", getattr(s, name))
        length(f"{p}.flex.cur_max", s.flex.cur_max)
        if not 1 <= s.power_node <= pn.n_nodes:
            out.append(f"{p}.power_node: node {s.power_node} does not exist")
        if s.gas_node is not None and (gn is None or not 1 <= s.gas_node <= gn.n_nodes):
            out.append(f"{p}.gas_node: node {s.gas_node} does not exist")
        if s.battery.soc_init > s.battery.soc_max:
            out.append(f"{p}.battery.soc_init: exceeds soc_max")
        has_gt = any(g > 0 for g in s.mgt_gas0)
        if (has_gt or s.mgt is not None) and (s.mgt is None or s.hrsg is None):
            out.append(f"{p}.mgt: turbine gas use needs both mgt and hrsg parameters")
        if s.mgt is not None and s.hrsg is not None and s.mgt.eta_gt + s.hrsg.eta_loss >= 1:
            out.append(f"{p}.hrsg.eta_loss: eta_gt + eta_loss must stay below 1")
        if s.mgt is not None and s.mgt.p_min > s.mgt.p_max:
            out.append(f"{p}.mgt.p_min: exceeds p_max")
        if s.building is not None:
            b = s.building
            length(f"{p}.building.t_outdoor", b.t_outdoor)
            if not b.t_in_min <= b.t_in_init <= b.t_in_max:
                out.append(f"{p}.building.t_in_init: outside [t_in_min, t_in_max]")
            if s.mgt is None:
                out.append(f"{p}.building: a building needs a heat source (mgt + hrsg)")
        for d, dev in enumerate(s.flex.devices):
            length(f"{p}.flex.devices[{d}].baseline", dev.baseline)
            if len(dev.baseline) == T:
                try:
                    devices.check_device_budget(
                        _device(dev),
                        T, sc.horizon.dt_hours)
                except exergy.DomainError as exc:
                    out.append(f"{p}.flex.devices[{d}]: {exc}")
        if not out:
            out.extend(_baseline_issues(sc, i))
    return out


def _baseline_issues(sc: Scenario, i: int) -> list[str]:
    """The no-flexibility operating point must itself be feasible."""
    s = sc.ies[i]
    p = f"ies[{i}]"
    out = []
    T, dt = sc.T, sc.horizon.dt_hours
    if s.mgt is not None:
        p_gt0 = np.asarray(s.mgt_gas0) * sc.calorific_value * s.mgt.eta_gt
        if np.any(p_gt0 < s.mgt.p_min - 1e-9) or np.any(p_gt0 > s.mgt.p_max + 1e-9):
            out.append(f"{p}.mgt_gas0: baseline turbine output outside [p_min, p_max]")
        if s.building is not None:
            mgt, hrsg, bld = sc.mgt(i), sc.hrsg(i), sc.building(i)
            heat = p_gt0 * devices.hrsg_ratio(mgt, hrsg)
            t_in = bld.t_in_init
            for t in range(T):
                t_in = devices.etp_step(t_in, s.building.t_outdoor[t], heat[t], bld, dt)
                if not bld.t_in_min - 1e-6 <= t_in <= bld.t_in_max + 1e-6:
                    out.append(f"{p}.mgt_gas0: baseline heat leaves the comfort band at period {t}")
                    break
        p_net = np.asarray(s.p_load0) - p_gt0
    else:
        p_net = np.asarray(s.p_load0)
    if np.any(np.abs(p_net) > s.p_tran_max + 1e-9):
        out.append(f"{p}.p_tran_max: baseline exchange exceeds the transmission limit")
    g_net = np.asarray(s.g_load0) + np.asarray(s.mgt_gas0)
    if np.any(g_net > s.g_tran_max + 1e-9):
        out.append(f"{p}.g_tran_max: baseline gas use exceeds the transmission limit")
    return out


def _format_validation_error(exc: ValidationError) -> list[str]:
    errs = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"])
        msg = e["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        if e["type"] == "value_error" and not loc:
            errs.extend(msg.split("; "))
        else:
            errs.append(f"{loc}: {msg}" if loc else msg)
    return errs


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(["top level must be a JSON object"])
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError([f"schema_version: expected {SCHEMA_VERSION}, got {version!r}"])
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_validation_error(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError([f"{path}: file not found"]) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: parse error: {exc}"]) from None
    return parse_scenario(data)


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(sc.model_dump(mode="json"), indent=2, sort_keys=True)


def reference_scenario_path() -> Path:
    return Path(str(resources.files("exergy_ves") / "data" / "reference_scenario.json"))


def load_reference_scenario() -> Scenario:
    return load_scenario(reference_scenario_path())
