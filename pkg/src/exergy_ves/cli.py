"""Command line entry point.

Exit codes: 0 success, 2 invalid scenario, 3 a run did not converge, 4 a run
stopped on an infeasible subproblem or bargaining problem.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .admm import RuntimeOptions
from .agents import AgentSolveError
from .market import BargainingInfeasible
from .results import export_results, render_exports, run_all, run_case
from .scenario import ScenarioError, load_reference_scenario, load_scenario

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_FAILED = 4


def _load(args):
    sc = load_reference_scenario() if args.scenario is None else load_scenario(args.scenario)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_iter is not None:
        overrides["max_iter_out"] = args.max_iter
    if args.tol is not None:
        overrides.update(eps_out=args.tol, eps_p1=args.tol, delta_p1=args.tol, eps_p2=args.tol, delta_p2=args.tol)
    return sc.with_admm(**overrides) if overrides else sc


def _run(args, cases):
    sc = _load(args)
    if cases == "all":
        bundles = run_all(sc, RuntimeOptions())
    else:
        bundles = [run_case(sc, int(cases), RuntimeOptions())]
    return bundles


def _finish(bundles) -> int:
    for b in bundles:
        row = b.comparison
        print(f"case {b.case}: converged={b.converged} outer_iterations={row['outer_iterations']} "
              f"ves_income={row['ves_income']:.2f} alliance_cost={row['alliance_cost']:.2f}")
    return EXIT_OK if all(b.converged for b in bundles) else EXIT_NOT_CONVERGED


def cmd_validate(args) -> int:
    sc = _load(args)
    print(f"ok: {sc.name or 'scenario'} with {sc.n_ies} IES over {sc.T} periods")
    return EXIT_OK


def cmd_run(args) -> int:
    bundles = _run(args, args.case)
    manifest = export_results(bundles, args.out)
    for name, digest in manifest.items():
        print(f"{Path(args.out) / name}  {digest[:12]}")
    return _finish(bundles)


def cmd_compare(args) -> int:
    bundles = _run(args, "all")
    export_results(bundles, args.out, formats=("csv",))
    print(render_exports(bundles)["comparison.csv"], end="")
    return _finish(bundles)


def cmd_trace(args) -> int:
    bundles = _run(args, args.case)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "residuals.csv").write_text(render_exports(bundles)["residuals.csv"])
    print(out / "residuals.csv")
    return _finish(bundles)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exergy-ves", description="Exergy-sharing VES/IES scheduling")
    parser.add_argument("-v", "--verbose", action="store_true", help="log ADMM progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True, case=False):
        p.add_argument("--scenario", help="scenario JSON (default: bundled reference scenario)")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-iter", type=int, help="outer iteration limit")
        p.add_argument("--tol", type=float, help="tolerance for every convergence test")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if case:
            p.add_argument("--case", choices=["1", "2", "3", "all"], default="all")

    common(sub.add_parser("run", help="run one case or all and export results"), case=True)
    common(sub.add_parser("validate", help="check a scenario file"), out=False)
    common(sub.add_parser("compare", help="run all cases and write comparison.csv"))
    common(sub.add_parser("trace", help="write residual traces"), case=True)
    return parser


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "compare": cmd_compare, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (AgentSolveError, BargainingInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
