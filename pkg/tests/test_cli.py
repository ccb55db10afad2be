import csv
import json

import pytest

from exergy_ves import cli
from exergy_ves.admm import RuntimeOptions
from exergy_ves.results import EXPORT_FILES, export_results, render_exports, run_case
from exergy_ves.scenario import dump_scenario

from conftest import reference_dict, toy_scenario


@pytest.fixture(scope="module")
def toy_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scenario") / "toy.json"
    path.write_text(dump_scenario(toy_scenario()))
    return path


def test_validate_ok(toy_file, capsys):
    assert cli.main(["validate", "--scenario", str(toy_file)]) == cli.EXIT_OK
    assert "2 IES over 3 periods" in capsys.readouterr().out


def test_validate_reports_bad_scenario(tmp_path, capsys):
    d = reference_dict()
    d["prices"]["da_gas"] = d["prices"]["da_gas"][:5]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    assert cli.main(["validate", "--scenario", str(path)]) == cli.EXIT_INVALID
    assert "prices.da_gas" in capsys.readouterr().err


def test_run_case1_exports(toy_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", str(toy_file), "--case", "1", "--out", str(out)]) == cli.EXIT_OK
    for name in EXPORT_FILES:
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == set(EXPORT_FILES)
    # no trading in the first case: the trade file is a bare header
    assert (out / "trades.csv").read_text() == "case,seller,buyer,period,volume,price\n"
    rows = list(csv.DictReader((out / "soc.csv").open()))
    assert len(rows) == 2 * 3 and all(float(r["soc"]) == 0 for r in rows)


def test_iteration_limit_gives_non_convergence_code(toy_file, tmp_path):
    code = cli.main(["run", "--scenario", str(toy_file), "--case", "2", "--max-iter", "1", "--out", str(tmp_path)])
    assert code == cli.EXIT_NOT_CONVERGED
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["converged"] is False


def test_bargaining_failure_gives_failure_code(toy_file, tmp_path, capsys):
    # the toy alliance has no joint surplus over its standalone costs
    assert cli.main(["run", "--scenario", str(toy_file), "--case", "all", "--out", str(tmp_path)]) == cli.EXIT_FAILED
    assert "not positive" in capsys.readouterr().err


def test_trace_writes_residuals(toy_file, tmp_path):
    assert cli.main(["trace", "--scenario", str(toy_file), "--case", "2", "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = list(csv.DictReader((tmp_path / "residuals.csv").open()))
    loops = {r["loop"] for r in rows}
    assert "outer" in loops and "p2" not in loops


def test_exports_are_byte_identical_across_runs(tmp_path):
    sc = toy_scenario()
    first = render_exports(run_case(sc, 2, RuntimeOptions()))
    second = render_exports(run_case(sc, 2, RuntimeOptions()))
    assert first == second
    a = export_results(run_case(sc, 2, RuntimeOptions()), tmp_path / "a")
    assert a == export_results(run_case(sc, 2, RuntimeOptions()), tmp_path / "b")
    assert "wall" not in first["report.json"]


def test_unknown_export_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        export_results(run_case(toy_scenario(), 1), tmp_path, formats=("xlsx",))
