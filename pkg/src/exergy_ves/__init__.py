"""Virtual energy station scheduling with exergy sharing among integrated energy systems."""

from .admm import RuntimeOptions, SolveReport, run_bilevel
from .results import ResultsBundle, export_results, run_all, run_case
from .scenario import Scenario, ScenarioError, load_reference_scenario, load_scenario

__all__ = [
    "ResultsBundle", "RuntimeOptions", "Scenario", "ScenarioError", "SolveReport", "export_results",
    "load_reference_scenario", "load_scenario", "run_all", "run_bilevel", "run_case",
]
