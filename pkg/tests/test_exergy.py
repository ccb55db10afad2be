import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from exergy_ves.exergy import (
    DomainError,
    Eqc,
    EqcInputs,
    ExergyBatteryParams,
    ExergyBatteryState,
    charge_exergy,
    compute_eqc,
    discharge_exergy,
    energy_to_exergy,
    eqc_gas,
    eqc_heat,
    simulate_soc,
    step_soc,
    validate_battery_trajectory,
)


def carnot_average(t_ambient, t_low, t_high):
    """Independent route: mean Carnot factor of heat released between two temperatures."""
    value, _ = quad(lambda t: 1.0 - t_ambient / t, t_low, t_high)
    return value / (t_high - t_low)


def heat_inputs(t_out, t_supply, t_return):
    return EqcInputs(t_out=t_out, t_supply=t_supply, t_return=t_return, t_burn=2000.0)


def gas_inputs(t_out, t_burn):
    return EqcInputs(t_out=t_out, t_supply=360.0, t_return=330.0, t_burn=t_burn)


# --- coefficients ------------------------------------------------------------


def test_eqc_heat_reference_point():
    value = eqc_heat(heat_inputs(273.15, 353.15, 323.15))
    assert value == pytest.approx(0.1916, abs=1e-3)
    assert value == pytest.approx(carnot_average(273.15, 323.15, 353.15), rel=1e-9)


def test_eqc_heat_second_point_matches_oracle():
    value = eqc_heat(heat_inputs(300.0, 360.0, 330.0))
    oracle = carnot_average(300.0, 330.0, 360.0)
    assert value == pytest.approx(oracle, rel=1e-9)
    assert value == pytest.approx(0.12989, abs=1e-4)


def test_eqc_heat_vanishes_when_everything_is_at_ambient():
    t = 300.0
    assert eqc_heat(heat_inputs(t, t + 1e-6, t)) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("t_out,t_burn,expected", [(293.15, 2200.0, 0.690), (273.15, 1500.0, 0.6212)])
def test_eqc_gas_examples(t_out, t_burn, expected):
    value = eqc_gas(gas_inputs(t_out, t_burn))
    assert value == pytest.approx(expected, abs=1e-3)
    assert value == pytest.approx(carnot_average(t_out, t_out, t_burn), rel=1e-9)


def test_eqc_gas_vanishes_near_ambient():
    assert eqc_gas(gas_inputs(300.0, 300.0 + 1e-6)) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("kwargs", [
    dict(t_out=0.0, t_supply=360.0, t_return=330.0, t_burn=2000.0),
    dict(t_out=300.0, t_supply=330.0, t_return=360.0, t_burn=2000.0),
    dict(t_out=300.0, t_supply=360.0, t_return=330.0, t_burn=290.0),
])
def test_invalid_temperatures_rejected(kwargs):
    with pytest.raises(DomainError):
        EqcInputs(**kwargs)


def test_compute_eqc_electricity_is_one():
    eqc = compute_eqc(heat_inputs(273.15, 353.15, 323.15))
    assert eqc.eps_e == 1.0


@settings(max_examples=200, deadline=None)
@given(t_out=st.floats(200.0, 320.0), dt_return=st.floats(1.0, 80.0), dt_supply=st.floats(1.0, 100.0),
       dt_burn=st.floats(50.0, 2000.0))
def test_coefficients_in_unit_interval_and_decreasing_in_ambient(t_out, dt_return, dt_supply, dt_burn):
    t_return = t_out + dt_return
    inp = EqcInputs(t_out, t_return + dt_supply, t_return, t_out + dt_burn)
    eqc = compute_eqc(inp)
    assert 0 < eqc.eps_h < 1 and 0 < eqc.eps_g < 1
    colder = EqcInputs(t_out - 5.0, inp.t_supply, inp.t_return, inp.t_burn)
    assert eqc_heat(colder) > eqc.eps_h
    assert eqc_gas(colder) > eqc.eps_g


# --- conversions ---------------------------------------------------------------

EQC = Eqc(1.0, 0.1916, 0.690)
PARAMS = ExergyBatteryParams(lambda_ch=0.6, lambda_dis=1.0, ex_ch_max=50, ex_dis_max=50, soc_max=100)


def test_energy_to_exergy_examples():
    assert energy_to_exergy(10, "electricity", EQC) == 10
    assert energy_to_exergy(0, "heat", EQC) == 0
    assert energy_to_exergy(20, "gas", EQC) == pytest.approx(13.80)
    with pytest.raises(DomainError):
        energy_to_exergy(-1, "gas", EQC)
    with pytest.raises(DomainError):
        energy_to_exergy(1, "steam", EQC)


def test_charge_examples():
    assert charge_exergy(10, 0, 0, PARAMS, EQC) == pytest.approx(6.0)
    assert charge_exergy(0, 0, 0, PARAMS, EQC) == 0
    assert charge_exergy(5, 10, 0, PARAMS, EQC) == pytest.approx(4.1496)
    with pytest.raises(DomainError):
        charge_exergy(-1, 0, 0, PARAMS, EQC)


def test_discharge_examples():
    assert discharge_exergy(5, 0, PARAMS, EQC) == pytest.approx(5.0)
    assert discharge_exergy(0, 0, PARAMS, EQC) == 0
    assert discharge_exergy(0, 10, PARAMS, EQC) == pytest.approx(6.90)
    with pytest.raises(DomainError):
        discharge_exergy(0, -2, PARAMS, EQC)


flows = st.floats(0.0, 1e3)


@settings(max_examples=200, deadline=None)
@given(p=flows, h=flows, g=flows, scale=st.floats(0.0, 10.0), lam=st.floats(0.05, 1.0), lam_dis=st.floats(1.0, 3.0))
def test_conversions_are_linear_and_homogeneous(p, h, g, scale, lam, lam_dis):
    params = ExergyBatteryParams(lambda_ch=lam, lambda_dis=lam_dis)
    assert charge_exergy(scale * p, scale * h, scale * g, params, EQC) == pytest.approx(
        scale * charge_exergy(p, h, g, params, EQC), rel=1e-9, abs=1e-9)
    assert discharge_exergy(scale * p, scale * g, params, EQC) == pytest.approx(
        scale * discharge_exergy(p, g, params, EQC), rel=1e-9, abs=1e-9)
    total = charge_exergy(p, h, g, params, EQC)
    parts = charge_exergy(p, 0, 0, params, EQC) + charge_exergy(0, h, 0, params, EQC) + charge_exergy(0, 0, g, params, EQC)
    assert total == pytest.approx(parts, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(energy=flows, lam=st.floats(0.05, 1.0), lam_dis=st.floats(1.0, 3.0), carrier=st.sampled_from(["p", "g"]))
def test_round_trip_never_creates_exergy(energy, lam, lam_dis, carrier):
    params = ExergyBatteryParams(lambda_ch=lam, lambda_dis=lam_dis)
    if carrier == "p":
        stored = charge_exergy(energy, 0, 0, params, EQC)
        returned = discharge_exergy(stored, 0, params, EQC)
        original = energy * EQC.eps_e
    else:
        stored = charge_exergy(0, 0, energy, params, EQC)
        returned = discharge_exergy(0, stored / EQC.eps_g, params, EQC)
        original = energy * EQC.eps_g
    assert returned <= original * (1 + 1e-12) + 1e-12
    assert returned == pytest.approx(lam / lam_dis * original, rel=1e-9, abs=1e-9)


# --- state of charge --------------------------------------------------------------


def test_step_soc_examples():
    assert step_soc(0, 6, 0, 0) == 6
    assert step_soc(6, 0, 6, 0) == 0
    assert step_soc(6, 0, 0, 2) == 4


def test_battery_params_invariants():
    with pytest.raises(DomainError):
        ExergyBatteryParams(lambda_ch=1.2)
    with pytest.raises(DomainError):
        ExergyBatteryParams(lambda_dis=0.5)
    with pytest.raises(DomainError):
        ExergyBatteryParams(soc_max=10, soc_init=11)


def test_zero_trajectory_is_clean():
    z = np.zeros(24)
    assert validate_battery_trajectory(ExergyBatteryState(z, z, z), ExergyBatteryParams()) == []


def test_upper_bound_violation_is_reported_at_its_period():
    z = np.zeros(6)
    soc = z.copy()
    soc[3] = PARAMS.soc_max + 1
    report = validate_battery_trajectory(ExergyBatteryState(soc, z, z), PARAMS)
    upper = [v for v in report if v.kind == "soc-upper"]
    assert [(v.period, v.amount) for v in upper] == [(3, pytest.approx(1.0))]


def test_cyclic_condition_violation():
    charge = np.array([5.0, 0.0, 0.0])
    z = np.zeros(3)
    soc = simulate_soc(0.0, charge, z)
    report = validate_battery_trajectory(ExergyBatteryState(soc, charge, z), PARAMS)
    assert [v.kind for v in report] == ["cyclic"]
    assert report[0].period == 2


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        validate_battery_trajectory(ExergyBatteryState(np.zeros(3), np.zeros(2), np.zeros(3)), PARAMS)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(-3, 3)), min_size=1, max_size=24))
def test_simulated_trajectories_satisfy_recursion(steps):
    charge, discharge, trade = (np.array(c) for c in zip(*steps))
    soc = simulate_soc(20.0, charge, discharge, trade)
    # close the cycle through the final period's charge so the cyclic condition holds too
    gap = soc[-1] - 20.0
    if gap < 0:
        charge[-1] += -gap
    else:
        discharge[-1] += gap
    soc = simulate_soc(20.0, charge, discharge, trade)
    params = ExergyBatteryParams(ex_ch_max=1e6, ex_dis_max=1e6, soc_max=1e6, soc_init=20.0)
    report = validate_battery_trajectory(ExergyBatteryState(soc, charge, discharge, trade), params)
    kinds = {v.kind for v in report}
    assert not kinds & {"recursion", "cyclic"}
    # remaining reports can only be the lower soc bound
    assert kinds <= {"soc-lower"}
    if np.all(soc >= 0):
        assert report == []


def test_math_identity_of_formula_and_oracle_across_grid():
    for t_out in (250.0, 280.0, 310.0):
        for t_return, t_supply in ((320.0, 340.0), (330.0, 400.0)):
            expected = carnot_average(t_out, t_return, t_supply)
            assert eqc_heat(heat_inputs(t_out, t_supply, t_return)) == pytest.approx(expected, rel=1e-9)
    assert math.isclose(eqc_gas(gas_inputs(280.0, 1800.0)), carnot_average(280.0, 280.0, 1800.0), rel_tol=1e-9)
