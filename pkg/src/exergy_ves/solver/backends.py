"""Solver backends: Clarabel for continuous conic programs, HiGHS for MILPs,
and an outer-approximation loop that combines them for mixed-integer
convex programs."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import clarabel
import highspy
import numpy as np
import scipy.sparse as sp

from .program import Affine, Program

log = logging.getLogger(__name__)

INF = np.inf


@dataclass
class SolveOptions:
    feas_tol: float = 1e-6
    gap_rel: float = 1e-6
    gap_abs: float = 1e-6
    max_oa_iter: int = 100
    # blocks with at most this many free binaries are solved by enumeration
    enumerate_max_binaries: int = 4
    mip_rel_gap: float = 1e-7
    time_limit: float | None = None
    verbose: bool = False


@dataclass
class Solution:
    """Result of :func:`exergy_ves.solver.solve`.

    ``x`` is ``None`` unless the status is ``optimal`` or ``iteration-limit``.
    """

    status: str
    x: np.ndarray | None
    objective: float
    program: Program | None = None
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr: Affine) -> np.ndarray:
        if self.x is None:
            raise ValueError(f"no values available (status {self.status})")
        return expr.value(self.x)

    def __getitem__(self, name: str) -> np.ndarray:
        start, size = self.program.blocks[name]
        return self.x[start:start + size].copy()


# ---------------------------------------------------------------------------
# matrix assembly


def _stack(items, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    exprs = [e for _, e in items]
    if not exprs:
        return sp.csr_matrix((0, n)), np.zeros(0)
    e = Affine.concat(exprs)
    return e.matrix(n), -e.const


@dataclass
class _Linear:
    """Linear data of a program: ``A_eq x = b_eq``, ``A_le x <= b_le``."""

    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_le: sp.csr_matrix
    b_le: np.ndarray


def _linear(prog: Program) -> _Linear:
    n = prog.n_vars
    A_eq, b_eq = _stack(prog.eqs, n)
    A_le, b_le = _stack(prog.les, n)
    return _Linear(A_eq, b_eq, A_le, b_le)


# ---------------------------------------------------------------------------
# continuous conic solve (Clarabel)

_CLARABEL_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "iteration-limit",
    "MaxTime": "iteration-limit",
}


def solve_continuous(prog: Program, lb=None, ub=None, opts: SolveOptions | None = None,
                     lin: _Linear | None = None) -> Solution:
    """Solve the continuous relaxation (binaries within the given bounds)."""
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    n = prog.n_vars
    lb = np.asarray(prog.lb if lb is None else lb, dtype=float)
    ub = np.asarray(prog.ub if ub is None else ub, dtype=float)
    lin = lin or _linear(prog)

    n_log = sum(w.size for _, w, _ in prog.neg_logs)
    N = n + n_log

    def widen(M: sp.spmatrix) -> sp.csr_matrix:
        M = sp.csr_matrix(M)
        return sp.csr_matrix((M.data, M.indices, M.indptr), shape=(M.shape[0], N))

    # objective
    q = np.zeros(N)
    lo = prog.linear_objective
    np.add.at(q, lo.cols, lo.vals)
    const = float(lo.const[0])
    P = sp.csr_matrix((N, N))
    w_sq, e_sq = prog.square_parts()
    if e_sq.size:
        A = widen(e_sq.matrix(n))
        W = sp.diags(w_sq)
        P = 2.0 * (A.T @ W @ A)
        q += 2.0 * (A.T @ (w_sq * e_sq.const))
        const += float(np.dot(w_sq, e_sq.const ** 2))
    q[n:] = 1.0

    blocks_A, blocks_b, cones = [], [], []

    # fixed variables are substituted out; ``keep`` indexes the reduced columns
    fixed = np.zeros(N, dtype=bool)
    fixed[:n] = np.isfinite(lb) & np.isfinite(ub) & (np.abs(ub - lb) <= 1e-12)
    keep = np.flatnonzero(~fixed)
    x_fix = np.zeros(N)
    x_fix[:n][fixed[:n]] = lb[fixed[:n]]

    def reduce(M: sp.csr_matrix, b: np.ndarray, drop_empty: bool):
        b = b - M @ x_fix
        M = M[:, keep].tocsr()
        if not drop_empty:
            return M, b, 0.0
        empty = np.diff(M.indptr) == 0
        return M[~empty], b[~empty], b[empty]

    # equalities (zero cone)
    A_z, b_z, rest_z = reduce(widen(lin.A_eq), lin.b_eq, True)
    # inequalities and bounds (nonnegative cone)
    free = ~fixed[:n]
    li = np.flatnonzero(np.isfinite(lb) & free)
    ui = np.flatnonzero(np.isfinite(ub) & free)
    A_n, b_n, rest_n = reduce(widen(lin.A_le), lin.b_le, True)
    if np.any(np.abs(rest_z) > opts.feas_tol) or np.any(rest_n < -opts.feas_tol):
        stats = {"backend": "clarabel", "iterations": 0, "solve_time": time.perf_counter() - t0,
                 "raw_status": "fixed variables violate a constraint"}
        return Solution("infeasible", None, np.nan, prog, stats)
    if A_z.shape[0]:
        blocks_A.append(A_z)
        blocks_b.append(b_z)
        cones.append(clarabel.ZeroConeT(A_z.shape[0]))
    bounds = sp.vstack([sp.csr_matrix((-np.ones(len(li)), (np.arange(len(li)), li)), shape=(len(li), N)),
                        sp.csr_matrix((np.ones(len(ui)), (np.arange(len(ui)), ui)), shape=(len(ui), N))]).tocsr()
    A_n = sp.vstack([A_n, bounds[:, keep]]).tocsr()
    b_n = np.concatenate([b_n, -lb[li], ub[ui]])
    if A_n.shape[0]:
        blocks_A.append(A_n)
        blocks_b.append(b_n)
        cones.append(clarabel.NonnegativeConeT(A_n.shape[0]))

    # second-order cones: s = (t, y) = b - A x
    for cone in prog.cones:
        k = len(cone.components)
        m = cone.count
        parts = [cone.t, *cone.components]
        # interleave rows so each cone's (t, y_1..y_k) is contiguous
        rows, cols, vals, consts = [], [], [], np.zeros(m * (k + 1))
        for j, e in enumerate(parts):
            rows.append(e.rows * (k + 1) + j)
            cols.append(e.cols)
            vals.append(e.vals)
            consts[np.arange(m) * (k + 1) + j] = e.const
        A_c = sp.csr_matrix((-np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(m * (k + 1), N))
        A_c, consts, _ = reduce(A_c, consts, False)
        blocks_A.append(A_c)
        blocks_b.append(consts)
        cones.extend(clarabel.SecondOrderConeT(k + 1) for _ in range(m))

    # exponential cones for -w*log(a): (-tau/w, 1, a) in K_exp
    offset = n
    for _, w, e in prog.neg_logs:
        m = e.size
        for r in range(m):
            tau = offset + r
            er = e[r]
            if w[r] <= 0:
                # tau only needs a lower bound of 0 when the weight vanishes
                blocks_A.append(sp.csr_matrix(([-1.0], ([0], [tau])), shape=(1, N))[:, keep])
                blocks_b.append(np.zeros(1))
                cones.append(clarabel.NonnegativeConeT(1))
                continue
            rows = [0] + [2] * len(er.cols)
            cols = [tau] + list(er.cols)
            vals = [1.0 / w[r]] + list(-er.vals)
            A_e, b_e, _ = reduce(sp.csr_matrix((vals, (rows, cols)), shape=(3, N)),
                                 np.array([0.0, 1.0, er.const[0]]), False)
            blocks_A.append(A_e)
            blocks_b.append(b_e)
            cones.append(clarabel.ExponentialConeT())
        offset += m

    if not len(keep):
        x = x_fix[:n].copy()
        stats = {"backend": "clarabel", "iterations": 0, "solve_time": time.perf_counter() - t0,
                 "raw_status": "all variables fixed"}
        return Solution("optimal", x, prog.objective_value(x), prog, stats)
    A_all = sp.vstack(blocks_A).tocsc() if blocks_A else sp.csc_matrix((0, len(keep)))
    b_all = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
    P = sp.csr_matrix(P)
    q = (q + P @ x_fix)[keep]
    P_u = sp.triu(sp.csc_matrix(P[keep][:, keep])).tocsc()

    stats = {"backend": "clarabel", "iterations": 0, "retries": 0}
    for attempt, overrides in enumerate(_CLARABEL_RETRIES):
        settings = clarabel.DefaultSettings()
        settings.verbose = opts.verbose
        settings.tol_gap_abs = 1e-9
        settings.tol_gap_rel = 1e-9
        settings.tol_feas = 1e-9
        settings.max_iter = 500
        if opts.time_limit:
            settings.time_limit = float(opts.time_limit)
        for key, value in overrides.items():
            setattr(settings, key, value)
        res = clarabel.DefaultSolver(P_u, q, A_all, b_all, cones, settings).solve()
        raw = str(res.status).split(".")[-1]
        status = _CLARABEL_STATUS.get(raw, "numerical-failure")
        stats.update(iterations=stats["iterations"] + int(res.iterations), raw_status=str(res.status),
                     retries=attempt)
        x = None
        if status in ("optimal", "iteration-limit"):
            full = x_fix.copy()
            full[keep] = np.asarray(res.x)
            x = np.clip(full[:n], lb, ub)
        if raw == "Solved" or (x is not None and _continuous_residual(prog, x) <= opts.feas_tol):
            break
        if status in ("infeasible", "unbounded") and raw in ("PrimalInfeasible", "DualInfeasible"):
            break
    stats["solve_time"] = time.perf_counter() - t0
    if x is None:
        return Solution(status, None, np.nan, prog, stats)
    return Solution(status, x, prog.objective_value(x), prog, stats)


# Clarabel's scaling occasionally stalls at an inaccurate point on long
# horizons; these variants recover it and run only after a poor answer.
_CLARABEL_RETRIES = (
    {},
    {"equilibrate_max_iter": 50},
    {"equilibrate_enable": False},
    {"direct_solve_method": "faer"},
)


def _continuous_residual(prog: Program, x: np.ndarray) -> float:
    res = prog.residuals(x)
    return max(v for k, v in res.items() if k != "integrality")


# ---------------------------------------------------------------------------
# MILP (HiGHS)

_HIGHS_STATUS = {
    "kOptimal": "optimal",
    "kInfeasible": "infeasible",
    "kUnbounded": "unbounded",
    "kUnboundedOrInfeasible": "infeasible",
    "kTimeLimit": "iteration-limit",
    "kIterationLimit": "iteration-limit",
    "kSolutionLimit": "iteration-limit",
}


def solve_milp(c: np.ndarray, const: float, A_eq, b_eq, A_le, b_le, lb, ub, integer: np.ndarray,
               opts: SolveOptions, rel_gap: float | None = None,
               start: np.ndarray | None = None) -> tuple[str, np.ndarray | None, float, float]:
    """HiGHS solve; returns status, x, objective and the proven lower bound."""
    n = len(c)
    A = sp.vstack([A_eq, A_le]).tocsc()
    row_lo = np.concatenate([b_eq, np.full(len(b_le), -highspy.kHighsInf)])
    row_hi = np.concatenate([b_eq, b_le])
    h = highspy.Highs()
    h.setOptionValue("output_flag", bool(opts.verbose))
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", 1)
    h.setOptionValue("mip_rel_gap", opts.mip_rel_gap if rel_gap is None else rel_gap)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if opts.time_limit:
        h.setOptionValue("time_limit", float(opts.time_limit))
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = np.asarray(c, dtype=float)
    lp.col_lower_ = np.where(np.isfinite(lb), lb, -highspy.kHighsInf)
    lp.col_upper_ = np.where(np.isfinite(ub), ub, highspy.kHighsInf)
    lp.row_lower_ = row_lo
    lp.row_upper_ = row_hi
    lp.offset_ = float(const)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    if integer is not None and np.any(integer):
        lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                           for f in integer]
    h.passModel(lp)
    if start is not None:
        sol = highspy.HighsSolution()
        sol.col_value = list(np.clip(start, lb, ub))
        h.setSolution(sol)
    h.run()
    raw = str(h.getModelStatus()).split(".")[-1]
    status = _HIGHS_STATUS.get(raw, "numerical-failure")
    if status not in ("optimal", "iteration-limit"):
        return status, None, np.nan, -np.inf
    x = np.asarray(h.getSolution().col_value)
    if not len(x):
        return "numerical-failure", None, np.nan, -np.inf
    info = h.getInfo()
    obj = float(info.objective_function_value)
    bound = float(info.mip_dual_bound) if integer is not None and np.any(integer) else obj
    return status, x, obj, min(bound, obj)


def solve_mixed_linear(prog: Program, opts: SolveOptions) -> Solution:
    """Pure MILP path: HiGHS, then a polishing LP with binaries fixed."""
    t0 = time.perf_counter()
    lin = _linear(prog)
    n = prog.n_vars
    c = np.zeros(n)
    lo = prog.linear_objective
    np.add.at(c, lo.cols, lo.vals)
    lb, ub = np.asarray(prog.lb), np.asarray(prog.ub)
    integer = np.asarray(prog.is_binary, dtype=bool)
    status, x, obj, _ = solve_milp(c, lo.const[0], lin.A_eq, lin.b_eq, lin.A_le, lin.b_le, lb, ub,
                                integer, opts)
    stats = {"backend": "highs", "solve_time": time.perf_counter() - t0}
    if x is None:
        return Solution(status, None, np.nan, prog, stats)
    b = prog.binary_index
    if len(b):
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[b] = ub2[b] = np.round(x[b])
        s2, x2, _, _ = solve_milp(c, lo.const[0], lin.A_eq, lin.b_eq, lin.A_le, lin.b_le, lb2, ub2,
                               None, opts)
        if x2 is not None:
            x = x2
    x = np.clip(x, lb, ub)
    return Solution(status, x, prog.objective_value(x), prog, stats)


def solve_enumeration(prog: Program, opts: SolveOptions | None = None) -> Solution:
    """Exact solve by trying every assignment of the free binaries."""
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    lin = _linear(prog)
    lb, ub = np.asarray(prog.lb, dtype=float), np.asarray(prog.ub, dtype=float)
    free = prog.free_binary_index()
    best: Solution | None = None
    failures: dict[str, int] = {}
    for code in range(2 ** len(free)):
        assign = np.array([(code >> k) & 1 for k in range(len(free))], dtype=float)
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[free] = ub2[free] = assign
        sol = solve_continuous(prog, lb2, ub2, opts, lin)
        if not sol.ok:
            failures[sol.status] = failures.get(sol.status, 0) + 1
            continue
        if best is None or sol.objective < best.objective - 1e-12:
            best = sol
    stats = {"backend": "enumeration", "assignments": 2 ** len(free), "failures": failures,
             "solve_time": time.perf_counter() - t0}
    if best is None:
        status = "unbounded" if "unbounded" in failures else "infeasible"
        if set(failures) - {"infeasible", "unbounded"}:
            status = "numerical-failure"
        return Solution(status, None, np.nan, prog, stats)
    return Solution("optimal", best.x, best.objective, prog, stats)


# ---------------------------------------------------------------------------
# outer approximation for mixed-integer programs with squares / cones


class _CutPool:
    """Linear under-estimators of the nonlinear parts, over ``[x, sigma]``."""

    def __init__(self, prog: Program):
        self.prog = prog
        self.n = prog.n_vars
        self.w_sq, self.e_sq = prog.square_parts()
        self.n_sq = self.e_sq.size
        self.A_sq = self.e_sq.matrix(self.n) if self.n_sq else None
        # cones grouped by their number of components, stacked into one block each
        by_k: dict[int, list] = {}
        for cone in prog.cones:
            by_k.setdefault(len(cone.components), []).append(cone)
        self.cone_groups = []
        for k, cones in sorted(by_k.items()):
            t = Affine.concat([c.t for c in cones])
            comps = [Affine.concat([c.components[j] for c in cones]) for j in range(k)]
            self.cone_groups.append((t, t.matrix(self.n), comps, [c.matrix(self.n) for c in comps]))
        self.rows: list[sp.csr_matrix] = []
        self.rhs: list[np.ndarray] = []

    @property
    def width(self) -> int:
        return self.n + self.n_sq

    def _pad(self, M: sp.spmatrix) -> sp.csr_matrix:
        M = sp.csr_matrix(M)
        return sp.csr_matrix((M.data, M.indices, M.indptr), shape=(M.shape[0], self.width))

    def add_initial(self) -> None:
        # sigma >= 0 comes from bounds; cones: t >= |y_j|, t >= 0
        for t, At, comps, Ac in self.cone_groups:
            self.rows.append(self._pad(-At))
            self.rhs.append(t.const)
            for c, A in zip(comps, Ac):
                for sgn in (1.0, -1.0):
                    self.rows.append(self._pad(sgn * A - At))
                    self.rhs.append(t.const - sgn * c.const)

    def add_at(self, x: np.ndarray, only_violated: bool = False, tol: float = 1e-9) -> int:
        added = 0
        if self.n_sq:
            v = self.e_sq.value(x)
            # sigma_k >= 2 v (a x + c) - v^2  ->  2 v a x - sigma_k <= v^2 - 2 v c
            M = sp.diags(2.0 * v) @ self.A_sq
            S = sp.csr_matrix((-np.ones(self.n_sq), (np.arange(self.n_sq), self.n + np.arange(self.n_sq))),
                              shape=(self.n_sq, self.width))
            self.rows.append(self._pad(M) + S)
            self.rhs.append(v ** 2 - 2.0 * v * self.e_sq.const)
            added += self.n_sq
        for t_expr, At, comps, Ac in self.cone_groups:
            ys = [c.value(x) for c in comps]
            norm = np.sqrt(sum(y ** 2 for y in ys))
            t = t_expr.value(x)
            keep = norm > 1e-10
            if only_violated:
                keep &= norm - t > tol * (1.0 + np.abs(t))
            idx = np.flatnonzero(keep)
            if not len(idx):
                continue
            # gradient cut: sum_j g_j y_j(x) <= t(x) with g = y / |y|
            M = -At[idx]
            rhs = t_expr.const[idx].copy()
            for y, c, A in zip(ys, comps, Ac):
                g = y[idx] / norm[idx]
                M = M + sp.diags(g) @ A[idx]
                rhs -= g * c.const[idx]
            self.rows.append(self._pad(M))
            self.rhs.append(rhs)
            added += len(idx)
        return added

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if not self.rows:
            return sp.csr_matrix((0, self.width)), np.zeros(0)
        return sp.vstack(self.rows).tocsr(), np.concatenate(self.rhs)


def _nogood(binary_idx: np.ndarray, assignment: np.ndarray, width: int) -> tuple[sp.csr_matrix, float]:
    # sum_{b=1} x_b - sum_{b=0} x_b <= |ones| - 1
    coef = np.where(assignment > 0.5, 1.0, -1.0)
    row = sp.csr_matrix((coef, (np.zeros(len(binary_idx), dtype=int), binary_idx)), shape=(1, width))
    return row, float(np.sum(assignment > 0.5) - 1)


def solve_outer_approximation(prog: Program, opts: SolveOptions, hint: np.ndarray | None = None) -> Solution:
    """Outer approximation; ``hint`` (a previous solution) seeds the first assignment."""
    t0 = time.perf_counter()
    n = prog.n_vars
    lin = _linear(prog)
    lb, ub = np.asarray(prog.lb, dtype=float), np.asarray(prog.ub, dtype=float)
    bidx = prog.binary_index
    pool = _CutPool(prog)
    W = pool.width

    root = solve_continuous(prog, lb, ub, opts, lin)
    stats = {"backend": "outer-approximation", "oa_iterations": 0, "nlp_solves": 1}
    if root.status in ("infeasible", "unbounded", "numerical-failure"):
        stats["solve_time"] = time.perf_counter() - t0
        return Solution(root.status, None, np.nan, prog, stats)
    lower = root.objective if root.ok else -np.inf

    best_x, best_obj = None, np.inf
    seen: set[bytes] = set()
    nogood_rows, nogood_rhs = [], []

    def try_assignment(assign: np.ndarray):
        nonlocal best_x, best_obj
        key = assign.astype(np.int8).tobytes()
        seen.add(key)
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[bidx] = ub2[bidx] = assign
        sol = solve_continuous(prog, lb2, ub2, opts, lin)
        stats["nlp_solves"] += 1
        if sol.ok:
            pool.add_at(sol.x)
            if sol.objective < best_obj:
                best_x, best_obj = sol.x, sol.objective
        else:
            r, b = _nogood(bidx, assign, W)
            nogood_rows.append(r)
            nogood_rhs.append(b)
        return sol

    pool.add_initial()
    if root.x is not None:
        pool.add_at(root.x)
    if hint is not None:
        try_assignment(np.round(np.clip(np.asarray(hint, dtype=float)[bidx], 0, 1)))
    if root.x is not None:
        guess = np.round(np.clip(root.x[bidx], 0, 1))
        if guess.astype(np.int8).tobytes() not in seen:
            try_assignment(guess)

    c = np.zeros(W)
    lo = prog.linear_objective
    np.add.at(c, lo.cols, lo.vals)
    c[n:] = pool.w_sq
    lbW = np.concatenate([lb, np.zeros(pool.n_sq)])
    ubW = np.concatenate([ub, np.full(pool.n_sq, INF)])
    integer = np.concatenate([np.asarray(prog.is_binary, dtype=bool), np.zeros(pool.n_sq, dtype=bool)])
    A_eq = sp.csr_matrix((lin.A_eq.data, lin.A_eq.indices, lin.A_eq.indptr), shape=(lin.A_eq.shape[0], W))
    A_le0 = sp.csr_matrix((lin.A_le.data, lin.A_le.indices, lin.A_le.indptr), shape=(lin.A_le.shape[0], W))

    status = "optimal"
    for it in range(1, opts.max_oa_iter + 1):
        stats["oa_iterations"] = it
        if best_x is not None and best_obj - lower <= max(opts.gap_abs, opts.gap_rel * abs(best_obj)):
            break
        C, d = pool.matrix()
        parts = [A_le0, C] + nogood_rows
        A_le = sp.vstack(parts).tocsr()
        b_le = np.concatenate([lin.b_le, d, np.asarray(nogood_rhs, dtype=float)])
        start = None
        if best_x is not None:
            start = np.concatenate([best_x, pool.e_sq.value(best_x) ** 2 if pool.n_sq else np.zeros(0)])
        mstat, xm, mobj, mbound = solve_milp(c, lo.const[0], A_eq, lin.b_eq, A_le, b_le, lbW, ubW, integer, opts,
                                             start=start)
        if xm is None:
            if mstat == "infeasible":
                if best_x is None:
                    stats["solve_time"] = time.perf_counter() - t0
                    return Solution("infeasible", None, np.nan, prog, stats)
                break
            status = mstat
            break
        lower = max(lower, mbound)
        assign = np.round(np.clip(xm[bidx], 0, 1))
        key = assign.astype(np.int8).tobytes()
        if key in seen:
            # linearizations at the assignment's optimum make the master exact there
            pool.add_at(xm[:n], only_violated=True)
            if best_x is not None and best_obj - lower <= max(opts.gap_abs, opts.gap_rel * abs(best_obj)):
                break
            if pool.add_at(xm[:n], only_violated=True) == 0 and best_x is not None:
                break
            continue
        try_assignment(assign)
        pool.add_at(xm[:n], only_violated=True)
    else:
        status = "iteration-limit"

    stats["solve_time"] = time.perf_counter() - t0
    stats["lower_bound"] = lower
    if best_x is None:
        return Solution("infeasible" if status == "optimal" else status, None, np.nan, prog, stats)
    stats["gap"] = best_obj - lower
    return Solution(status, best_x, best_obj, prog, stats)
