"""Regenerate the bundled reference scenario.

Reported parameters are copied as given; hourly loads, prices, temperatures
and device data are synthetic fills (see the ``data_sources`` block written
into the file).
"""

import json
from pathlib import Path

import numpy as np

T = 24
HOURS = np.arange(T)
H_GAS = 9.7  # kWh per m3
ETA_GT = 0.35
ETA_QB = 0.9
ETA_REC = 0.85
ETA_LOSS = 0.03
RATIO = (1 - ETA_GT - ETA_LOSS) / ETA_GT * ETA_QB * ETA_REC
T_SET = 21.0

# modified IEEE 33-node feeder (branch impedances in ohm)
IEEE33 = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]

GAS_PIPES = [(1, 2, 400.0), (2, 3, 350.0), (3, 4, 300.0), (4, 5, 250.0), (2, 6, 300.0), (6, 7, 250.0),
             (7, 8, 250.0), (3, 9, 300.0), (9, 10, 250.0), (10, 11, 250.0)]


def r2(x):
    return [round(float(v), 4) for v in x]


def profile(points):
    """Piecewise-linear daily curve through (hour, value) points."""
    hs, vs = zip(*points)
    return np.interp(HOURS, hs, vs)


def tou(valley, flat, peak):
    out = np.full(T, flat)
    out[(HOURS < 7) | (HOURS >= 23)] = valley
    out[((HOURS >= 8) & (HOURS < 11)) | ((HOURS >= 18) & (HOURS < 22))] = peak
    return out


def ies_with_turbine(ident, node, gas_node, p_load, g_load, r, c, t_outdoor, p_range, flex, battery, tran):
    heat = (T_SET - t_outdoor) / r
    p_gt0 = heat / RATIO
    g_gt0 = p_gt0 / (H_GAS * ETA_GT)
    assert p_range[0] <= p_gt0.min() and p_gt0.max() <= p_range[1], (ident, p_gt0.min(), p_gt0.max())
    return {
        "id": ident, "power_node": node, "gas_node": gas_node,
        "p_load0": r2(p_load), "g_load0": r2(g_load), "mgt_gas0": [float(v) for v in g_gt0],
        "mgt": {"eta_gt": ETA_GT, "p_min": p_range[0], "p_max": p_range[1]},
        "hrsg": {"eta_qb": ETA_QB, "eta_rec": ETA_REC, "eta_loss": ETA_LOSS},
        "building": {"thermal_resistance": r, "thermal_capacitance": c,
                     "t_in_min": {"value": 18.0, "unit": "C"}, "t_in_max": {"value": 24.0, "unit": "C"},
                     "t_in_init": {"value": T_SET, "unit": "C"},
                     "t_outdoor": {"values": r2(t_outdoor), "unit": "C"}},
        "flex": flex, "battery": battery, "p_tran_max": tran[0], "g_tran_max": tran[1],
    }


def main():
    t_outdoor = profile([(0, -1.0), (5, -3.0), (9, 1.0), (14, 7.0), (18, 4.0), (23, 0.0)])

    commercial = profile([(0, 260), (6, 280), (9, 560), (12, 620), (14, 600), (18, 520), (21, 380), (23, 280)])
    residential = profile([(0, 150), (6, 160), (8, 240), (12, 220), (17, 300), (19, 380), (21, 340), (23, 190)])
    industrial = profile([(0, 300), (6, 320), (8, 420), (12, 440), (16, 430), (20, 360), (23, 310)])

    ies = [
        ies_with_turbine(
            "IES1", 18, 5, commercial, profile([(0, 8), (11, 25), (13, 30), (19, 20), (23, 8)]),
            0.065, 110.0, t_outdoor, (40.0, 320.0),
            {"cur_max": r2(0.05 * commercial),
             "devices": [{"rated_power": 50.0, "total_energy": 200.0,
                          "baseline": [1 if 9 <= h < 13 else 0 for h in HOURS], "window": [7, 18]}],
             "cost_cur": 1.3, "cost_tr": 0.15, "cost_hdr": 0.35},
            {"lambda_ch": 0.6, "lambda_dis": 1.0, "ex_ch_max": 60.0, "ex_dis_max": 160.0,
             "soc_max": 700.0, "soc_init": 0.0},
            (900.0, 250.0)),
        ies_with_turbine(
            "IES2", 22, 8, residential, profile([(0, 5), (7, 20), (12, 15), (18, 30), (22, 10), (23, 5)]),
            0.1, 70.0, t_outdoor, (30.0, 220.0),
            {"cur_max": r2(0.15 * residential),
             "devices": [{"rated_power": 30.0, "total_energy": 90.0,
                          "baseline": [1 if 18 <= h < 21 else 0 for h in HOURS], "window": [13, 24]},
                         {"rated_power": 40.0, "total_energy": 80.0,
                          "baseline": [1 if 19 <= h < 21 else 0 for h in HOURS], "window": [15, 24]}],
             "cost_cur": 0.7, "cost_tr": 0.1, "cost_hdr": 0.25},
            {"lambda_ch": 0.6, "lambda_dis": 1.0, "ex_ch_max": 160.0, "ex_dis_max": 40.0,
             "soc_max": 120.0, "soc_init": 0.0},
            (700.0, 200.0)),
        {
            "id": "IES3", "power_node": 33, "gas_node": 11,
            "p_load0": r2(industrial), "g_load0": r2(profile([(0, 40), (8, 60), (17, 60), (23, 40)])),
            "mgt_gas0": [0.0] * T,
            "flex": {"cur_max": r2(0.1 * industrial),
                     "devices": [{"rated_power": 80.0, "total_energy": 320.0,
                                  "baseline": [1 if 8 <= h < 12 else 0 for h in HOURS], "window": [1, 14]}],
                     "cost_cur": 1.0, "cost_tr": 0.2, "cost_hdr": 0.0},
            "battery": {"lambda_ch": 0.6, "lambda_dis": 1.0, "ex_ch_max": 100.0, "ex_dis_max": 100.0,
                        "soc_max": 300.0, "soc_init": 0.0},
            "p_tran_max": 700.0, "g_tran_max": 150.0,
        },
    ]

    ele_sell = tou(0.38, 0.78, 1.15)
    da_ele = profile([(0, 0.32), (5, 0.30), (8, 0.85), (10, 1.25), (12, 1.05), (14, 0.80), (17, 1.00),
                      (19, 1.30), (21, 1.10), (23, 0.45)])
    da_gas = profile([(0, 4.1), (6, 4.3), (9, 4.8), (12, 4.6), (18, 5.0), (21, 4.6), (23, 4.2)])

    p_base = sum(np.asarray(s["p_load0"]) - np.asarray(s["mgt_gas0"]) * H_GAS * ETA_GT for s in ies)
    g_base = sum(np.asarray(s["g_load0"]) + np.asarray(s["mgt_gas0"]) for s in ies)

    scenario = {
        "schema_version": 1,
        "name": "reference",
        "horizon": {"periods": T, "dt_hours": 1.0},
        "prices": {
            "ele_sell": r2(ele_sell), "ele_buy": r2(0.8 * ele_sell), "gas_sell": [2.405] * T,
            "da_ele": r2(da_ele), "da_gas": r2(da_gas), "ml_ele": [0.42] * T, "ml_gas": [2.23] * T,
        },
        "eqc": {"t_out": 273.15, "t_supply": 353.15, "t_return": 323.15, "t_burn": 2200.0},
        "calorific_value": H_GAS,
        "ves": {"ml_ele_max": r2(1.1 * p_base), "ml_gas_max": [float(v) for v in g_base],
                "da_ele_max": 600.0, "da_gas_max": 300.0},
        "ies": ies,
        "power_network": {
            "n_nodes": 33, "slack": 1, "v_min": 0.95, "v_max": 1.05, "v_slack": 1.0,
            "base_kv": 12.66, "base_kva": 1000.0, "power_factor": 0.95,
            "lines": [{"src": a, "dst": b, "r_ohm": r, "x_ohm": x, "p_max_kw": 2500.0} for a, b, r, x in IEEE33],
        },
        "gas_network": {
            "n_nodes": 11, "source": 1, "p_min": [5.0] + [3.0] * 10, "p_max": [6.0] * 11,
            "pipes": [{"src": a, "dst": b, "k": k, "g_max": 800.0} for a, b, k in GAS_PIPES],
            "pressure_weight": 1e-4,
        },
        "admm": {},
        "case": 3,
        "data_sources": {
            "reported": [
                "battery lambda_ch = 0.6 and lambda_dis = 1",
                "hrsg eta_loss = 0.03 and eta_rec = 0.85",
                "initial penalty rho = 0.01 for every loop",
                "medium/long-term gas price 2.23 CNY/m3, retail gas price 2.405 CNY/m3",
                "retail purchase price = 0.8 x retail sale price",
                "IEEE 33-node feeder topology and 11-node gas network size",
            ],
            "synthetic": [
                "hourly electric, gas and heat loads (shaped after typical commercial, residential and industrial days)",
                "time-of-use retail electricity prices, day-ahead electricity and gas prices, flat medium/long-term electricity price",
                "outdoor temperature curve, building R/C values, comfort band 18-24 C",
                "turbine sizes, eta_gt = 0.35, eta_qb = 0.9, calorific value 9.7 kWh/m3",
                "curtailment limits, shiftable devices, IDR cost coefficients, battery capacities and rates",
                "host nodes of the three IESs (power nodes 18, 22, 33; gas nodes 5, 8, 11)",
                "11-node gas pipe layout, Weymouth coefficients and pressure limits",
                "medium/long-term contract caps (110% of baseline electricity, 100% of baseline gas) and day-ahead volume caps",
                "representative EQC temperatures",
            ],
            "derived": "baseline turbine gas use holds every building at 21 C under the outdoor curve",
        },
    }
    out = Path(__file__).resolve().parents[1] / "src" / "exergy_ves" / "data" / "reference_scenario.json"
    out.write_text(json.dumps(scenario, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
