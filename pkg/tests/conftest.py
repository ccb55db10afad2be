import copy
import json

import numpy as np
import pytest

from exergy_ves import agents
from exergy_ves.scenario import parse_scenario, reference_scenario_path
from exergy_ves.solver import Program


def reference_dict() -> dict:
    return json.loads(reference_scenario_path().read_text())


def toy_scenario(periods=(3, 13, 18), keep=(0, 2)):
    """Cut of the reference scenario: a few IESs over a few periods, no shiftable devices."""
    d = reference_dict()
    pick = lambda seq: [seq[t] for t in periods]
    d["name"] = "toy"
    d["horizon"]["periods"] = len(periods)
    d["prices"] = {k: pick(v) for k, v in d["prices"].items()}
    for k in ("ml_ele_max", "ml_gas_max"):
        d["ves"][k] = pick(d["ves"][k])
    d["ies"] = [copy.deepcopy(d["ies"][i]) for i in keep]
    for spec in d["ies"]:
        for k in ("p_load0", "g_load0", "mgt_gas0"):
            spec[k] = pick(spec[k])
        spec["flex"]["cur_max"] = pick(spec["flex"]["cur_max"])
        spec["flex"]["devices"] = []
        if spec.get("building"):
            spec["building"]["t_outdoor"]["values"] = pick(spec["building"]["t_outdoor"]["values"])
    return parse_scenario(d)


@pytest.fixture
def toy():
    return toy_scenario()


def centralized_alliance(sc, consensus_out, theta_in, rho_in):
    """One program holding every IES, with trades matched exactly, solved by binary enumeration."""
    prog = Program(name="alliance")
    models = [agents.add_ies_model(prog, sc, i, battery=True, trading=True, prefix=f"ies{i}_")
              for i in range(sc.n_ies)]
    objective = None
    for i, m in enumerate(models):
        gap = m.X - consensus_out[i].ravel()
        term = m.cost_ves + m.cost_idr + gap.dot(theta_in[i].ravel())
        objective = term if objective is None else objective + term
        if rho_in > 0:
            prog.squares.append((f"consensus{i}", np.full(gap.size, rho_in / 2), gap))
    for i, m in enumerate(models):
        for j, ex in m.trades.items():
            if i < j:
                prog.add_eq(ex + models[j].trades[i], 0.0)
    prog.minimize(objective)
    return prog


def augmented_alliance_cost(decisions, consensus_out, theta_in, rho_in):
    total = 0.0
    for i, d in enumerate(decisions):
        gap = d.X.ravel() - consensus_out[i].ravel()
        total += d.cost + gap @ theta_in[i].ravel() + 0.5 * rho_in * gap @ gap
    return total


# acceptance lines collected by test_acceptance.py and repeated after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
