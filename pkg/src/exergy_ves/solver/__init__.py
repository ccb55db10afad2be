"""Uniform build-and-solve interface for mixed-integer convex programs."""

from __future__ import annotations

import logging
import time

import numpy as np

from .backends import (Solution, SolveOptions, solve_continuous, solve_enumeration, solve_mixed_linear,
                       solve_outer_approximation)
from .lpformat import dump_lp
from .program import Affine, ConeBlock, Program, ProgramError, as_affine, hstack_sum
from .scalar import SubproblemError, solve_scalar_log_subproblem

__all__ = [
    "Affine", "ConeBlock", "Program", "ProgramError", "Solution", "SolveOptions",
    "SubproblemError", "as_affine", "dump_lp", "hstack_sum", "solve", "solve_enumeration",
    "solve_scalar_log_subproblem",
]

log = logging.getLogger(__name__)


def _solve_single(program: Program, options: SolveOptions, hint) -> Solution:
    n_free = len(program.free_binary_index())
    if not n_free:
        return solve_continuous(program, opts=options)
    if n_free <= options.enumerate_max_binaries:
        return solve_enumeration(program, options)
    if not program.has_nonlinear:
        return solve_mixed_linear(program, options)
    return solve_outer_approximation(program, options, hint=hint)


def _solve_split(program: Program, components: list, options: SolveOptions, hint) -> Solution:
    """Solve independent blocks one at a time and stitch the answers."""
    t0 = time.perf_counter()
    x = np.zeros(program.n_vars)
    for k, cols in enumerate(components):
        sub = program.restrict(cols, keep_constant=k == 0)
        sol = _solve_single(sub, options, None if hint is None else np.asarray(hint)[cols])
        if sol.x is None:
            sol.stats["component"] = k
            return Solution(sol.status, None, np.nan, program, sol.stats)
        x[cols] = sol.x
    stats = {"backend": "split", "components": len(components), "solve_time": time.perf_counter() - t0}
    return Solution("optimal", x, program.objective_value(x), program, stats)


def solve(program: Program, options: SolveOptions | None = None, hint=None) -> Solution:
    """Solve ``program`` and re-verify the answer against its own rows.

    Mixed-integer programs that fall apart into independent blocks are solved
    block by block.  ``hint`` is an earlier solution used to seed the binary
    search.
    """
    options = options or SolveOptions()
    program.validate()
    components = program.components() if len(program.free_binary_index()) else []
    if len(components) > 1:
        sol = _solve_split(program, components, options, hint)
    else:
        sol = _solve_single(program, options, hint)
    if sol.x is not None:
        res = program.residuals(sol.x)
        sol.stats["residuals"] = res
        worst = max(res.values())
        sol.stats["max_residual"] = worst
        if sol.status == "optimal" and worst > options.feas_tol:
            log.warning("program %s: solution violates constraints by %.2e", program.name, worst)
            sol.status = "numerical-failure"
    return sol
