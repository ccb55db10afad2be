"""Case runs, result bundles and deterministic export."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .admm import RuntimeOptions, SolveReport, run_bilevel
from .scenario import Scenario

EXPORT_FILES = ("report.json", "trades.csv", "soc.csv", "residuals.csv", "comparison.csv")


class NonFiniteResult(ValueError):
    """A NaN or infinity reached the result bundle."""


@dataclass(frozen=True)
class ResultsBundle:
    case: int
    scenario_name: str
    report: SolveReport = field(repr=False)
    trades: list  # (i, j, t, volume, price), settled ledger
    soc: np.ndarray  # (n, T); zero without a battery
    comparison: dict  # one comparison-table row
    series: dict  # plot-ready arrays

    @property
    def converged(self) -> bool:
        return self.report.converged


def _comparison_row(report: SolveReport) -> dict:
    ves = report.ves
    row = {"case": report.case, "converged": report.converged, "outer_iterations": report.trace.outer.iterations,
           "ves_income": ves.income, "day_ahead_income": ves.day_ahead, "retail_income": ves.retail,
           "ml_cost": ves.ml_cost, "loss_cost": ves.loss_cost}
    costs = report.ies_costs
    for i, c in enumerate(costs):
        row[f"ies{i}_cost"] = float(c)
    row["alliance_cost"] = float(costs.sum())
    return row


def _check_finite(obj, where: str = "bundle") -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for k, v in enumerate(obj):
            _check_finite(v, f"{where}[{k}]")
    elif isinstance(obj, np.ndarray):
        if obj.dtype.kind == "f" and not np.all(np.isfinite(obj)):
            raise NonFiniteResult(where)
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise NonFiniteResult(where)


def bundle_report(sc: Scenario, report: SolveReport) -> ResultsBundle:
    n, T = sc.n_ies, sc.T
    soc = np.stack([d.values.get("soc", np.zeros(T)) for d in report.ies]) if n else np.zeros((0, T))
    trades = [r for r in report.ledger.rows() if r[3] > 0]
    series = {
        "soc": soc,
        "volumes": report.ledger.volumes,
        "prices": report.ledger.prices,
        "consensus_out": report.consensus_out,
        "consensus_in": report.consensus_in,
        "outer_primal": np.asarray(report.trace.outer.primal),
        "outer_dual": np.asarray(report.trace.outer.dual),
    }
    bundle = ResultsBundle(report.case, sc.name, report, trades, soc, _comparison_row(report), series)
    _check_finite([bundle.comparison, bundle.series, [list(r) for r in trades], list(report.payments)])
    return bundle


def run_case(sc: Scenario, case: int, options: RuntimeOptions | None = None,
             disagreement=None) -> ResultsBundle:
    """Run ``sc`` under ``case``: 1 without exergy battery or trading, 2 with
    the battery only, 3 with both."""
    if case not in (1, 2, 3):
        raise ValueError(f"unknown case {case}")
    scc = sc.with_case(case)
    return bundle_report(scc, run_bilevel(scc, options, disagreement=disagreement))


def run_all(sc: Scenario, options: RuntimeOptions | None = None) -> list[ResultsBundle]:
    """Cases 1, 2 and 3; the Case 3 disagreement point reuses the Case 2 run."""
    b1 = run_case(sc, 1, options)
    b2 = run_case(sc, 2, options)
    b3 = run_case(sc, 3, options, disagreement=b2.report.ies_costs)
    return [b1, b2, b3]


# ---------------------------------------------------------------------------
# export


def _num(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def _csv(header: list, rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(format(float(v), ".12g"))
    return v


def _report_json(b: ResultsBundle) -> dict:
    r = b.report
    trace = r.trace.as_dict()
    # wall-clock times vary run to run and stay out of the export
    for loop in [trace["outer"], trace["p2"], *trace["p1"]]:
        if loop is not None:
            loop.pop("wall", None)
    out = {
        "case": b.case,
        "scenario": b.scenario_name,
        "converged": r.converged,
        "summary": b.comparison,
        "ies": [{"cost_retail": d.cost_ves, "cost_idr": d.cost_idr, "exergy_receipts": float(p),
                 "total_cost": float(c)} for d, p, c in zip(r.ies, r.payments, r.ies_costs)],
        "disagreement": r.disagreement,
        "surplus_bases": r.bases,
        "bargaining": None if r.weights is None else {"supply": r.weights.supply, "demand": r.weights.demand,
                                                       "power": r.weights.power},
        "consensus_gap": float(np.max(np.abs(r.consensus_out - r.consensus_in), initial=0.0)),
        "volume_antisymmetry_gap": float(np.max(np.abs(r.raw_volumes + r.raw_volumes.transpose(1, 0, 2)),
                                                initial=0.0)),
        "price_symmetry_gap": float(np.max(np.abs(r.raw_prices - r.raw_prices.transpose(1, 0, 2)), initial=0.0)),
        "network": None if r.network is None else vars(r.network),
        "trace": trace,
        "notes": r.notes,
    }
    return _jsonable(out)


def render_exports(bundles: ResultsBundle | Iterable[ResultsBundle]) -> dict[str, str]:
    """File name -> text for every export file."""
    if isinstance(bundles, ResultsBundle):
        bundles = [bundles]
    bundles = sorted(bundles, key=lambda b: b.case)
    trades = [(b.case, *t) for b in bundles for t in b.trades]
    soc = [(b.case, i, t, b.soc[i, t]) for b in bundles for i in range(b.soc.shape[0]) for t in range(b.soc.shape[1])]
    residuals = []
    for b in bundles:
        tr = b.report.trace
        for k, (p, d, rho) in enumerate(zip(tr.outer.primal, tr.outer.dual, tr.outer.rho), 1):
            residuals.append((b.case, "outer", k, k, p, d, rho))
        for k, loop in enumerate(tr.p1, 1):
            for m, (p, d, rho) in enumerate(zip(loop.primal, loop.dual, loop.rho), 1):
                residuals.append((b.case, "p1", k, m, p, d, rho))
        if tr.p2 is not None:
            for m, (p, d, rho) in enumerate(zip(tr.p2.primal, tr.p2.dual, tr.p2.rho), 1):
                residuals.append((b.case, "p2", 0, m, p, d, rho))
    keys = list(dict.fromkeys(k for b in bundles for k in b.comparison))
    comparison = [[b.comparison.get(k, float("nan")) for k in keys] for b in bundles]
    report = [_report_json(b) for b in bundles]
    return {
        "report.json": json.dumps(report if len(report) > 1 else report[0], indent=1, sort_keys=True) + "\n",
        "trades.csv": _csv(["case", "seller", "buyer", "period", "volume", "price"], trades),
        "soc.csv": _csv(["case", "ies", "period", "soc"], soc),
        "residuals.csv": _csv(["case", "loop", "outer_iteration", "iteration", "primal", "dual", "rho"], residuals),
        "comparison.csv": _csv(keys, comparison),
    }


def export_results(bundles: ResultsBundle | Iterable[ResultsBundle], out_dir: str | Path,
                   formats: Iterable[str] = ("csv", "json")) -> dict[str, str]:
    """Write the export files and ``manifest.json``; returns path -> sha256."""
    formats = set(formats)
    unknown = formats - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown formats {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, text in render_exports(bundles).items():
        if name.rsplit(".", 1)[1] not in formats:
            continue
        data = text.encode()
        (out / name).write_bytes(data)
        manifest[name] = hashlib.sha256(data).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
