"""Mixed-integer convex program container.

A :class:`Program` holds continuous and binary variables, linear equality and
inequality rows, second-order cones, and an objective built from a linear
part, weighted squares of affine expressions, and weighted negative
logarithms of affine expressions.  Everything is stored in coordinate form so
backends can assemble sparse matrices in one pass.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ProgramError(ValueError):
    """Raised for malformed programs (undeclared variables, bad shapes)."""


class Affine:
    """A vector of affine expressions ``A @ x + c`` in COO form.

    Only the operations the model builders need are provided: addition,
    subtraction, scaling by scalars or per-row arrays, row selection, sums and
    concatenation.  Size-1 expressions broadcast against longer ones.
    """

    __slots__ = ("size", "rows", "cols", "vals", "const")
    # let numpy scalars and arrays defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, size, rows=None, cols=None, vals=None, const=None):
        self.size = int(size)
        self.rows = np.asarray(rows if rows is not None else [], dtype=np.int64)
        self.cols = np.asarray(cols if cols is not None else [], dtype=np.int64)
        self.vals = np.asarray(vals if vals is not None else [], dtype=float)
        if const is None:
            const = np.zeros(self.size)
        self.const = np.broadcast_to(np.asarray(const, dtype=float), (self.size,)).copy()

    # -- construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, values) -> "Affine":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(values.size, const=values)

    @classmethod
    def concat(cls, parts: Sequence["Affine | float | np.ndarray"]) -> "Affine":
        parts = [as_affine(p) for p in parts]
        offset = 0
        rows, cols, vals, const = [], [], [], []
        for p in parts:
            rows.append(p.rows + offset)
            cols.append(p.cols)
            vals.append(p.vals)
            const.append(p.const)
            offset += p.size
        if not parts:
            return cls(0)
        return cls(offset, np.concatenate(rows), np.concatenate(cols),
                   np.concatenate(vals), np.concatenate(const))

    # -- algebra --------------------------------------------------------------
    def _broadcast(self, size: int) -> "Affine":
        if self.size == size:
            return self
        if self.size != 1:
            raise ProgramError(f"cannot broadcast expression of size {self.size} to {size}")
        k = len(self.rows)
        rows = np.repeat(np.arange(size), k)
        cols = np.tile(self.cols, size)
        vals = np.tile(self.vals, size)
        return Affine(size, rows, cols, vals, np.full(size, self.const[0]))

    def __add__(self, other) -> "Affine":
        other = as_affine(other)
        n = max(self.size, other.size)
        a, b = self._broadcast(n), other._broadcast(n)
        return Affine(n, np.concatenate([a.rows, b.rows]), np.concatenate([a.cols, b.cols]),
                      np.concatenate([a.vals, b.vals]), a.const + b.const)

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine(self.size, self.rows, self.cols, -self.vals, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-as_affine(other))

    def __rsub__(self, other) -> "Affine":
        return as_affine(other) + (-self)

    def __mul__(self, scale) -> "Affine":
        if isinstance(scale, Affine):
            raise ProgramError("products of expressions are not affine")
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 0:
            return Affine(self.size, self.rows, self.cols, self.vals * scale, self.const * scale)
        scale = scale.ravel()
        base = self._broadcast(scale.size)
        return Affine(base.size, base.rows, base.cols, base.vals * scale[base.rows], base.const * scale)

    __rmul__ = __mul__

    def __truediv__(self, scale) -> "Affine":
        return self * (1.0 / np.asarray(scale, dtype=float))

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, key) -> "Affine":
        idx = np.atleast_1d(np.arange(self.size)[key])
        if not len(self.rows):
            return Affine(idx.size, const=self.const[idx])
        m = self.matrix(self.max_col() + 1)[idx].tocoo()
        return Affine(idx.size, m.row, m.col, m.data, self.const[idx])

    def sum(self) -> "Affine":
        return Affine(1, np.zeros(len(self.rows), dtype=np.int64), self.cols, self.vals,
                      [self.const.sum()])

    def dot(self, weights) -> "Affine":
        return (self * np.asarray(weights, dtype=float)).sum()

    def shift(self, k: int, fill: "Affine | float" = 0.0) -> "Affine":
        """Expression delayed by ``k`` rows, front padded with ``fill``."""
        if k == 0:
            return self
        head = as_affine(fill)._broadcast(k)
        return Affine.concat([head, self[: self.size - k]])

    # -- evaluation -----------------------------------------------------------
    def matrix(self, n_vars: int) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.size, n_vars))

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        if len(self.rows):
            np.add.at(out, self.rows, self.vals * x[self.cols])
        return out

    def max_col(self) -> int:
        return int(self.cols.max()) if len(self.cols) else -1

    def __repr__(self) -> str:
        return f"Affine(size={self.size}, nnz={len(self.vals)})"


def _take(e: Affine, rows: np.ndarray, remap: np.ndarray) -> Affine:
    """Rows ``rows`` of ``e`` with columns renumbered through ``remap``."""
    pos = np.full(e.size, -1, dtype=np.int64)
    pos[rows] = np.arange(len(rows))
    k = pos[e.rows] >= 0
    return Affine(len(rows), pos[e.rows[k]], remap[e.cols[k]], e.vals[k], e.const[rows])


def as_affine(obj) -> Affine:
    if isinstance(obj, Affine):
        return obj
    return Affine.constant(obj)


def hstack_sum(parts: Iterable[Affine]) -> Affine:
    """Elementwise sum of same-sized expressions (``sum`` with no start value)."""
    parts = list(parts)
    if not parts:
        raise ProgramError("empty sum")
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


@dataclass
class ConeBlock:
    """``len(components)`` components and one bound: ``||x|| <= t`` per cone.

    ``t`` has size ``m`` and every component has size ``m``; cone ``r`` is
    ``||(components[0][r], components[1][r], ...)|| <= t[r]``.
    """

    t: Affine
    components: list[Affine]
    name: str = ""

    @property
    def count(self) -> int:
        return self.t.size


@dataclass
class Program:
    """Builder for a mixed-integer convex program (minimization)."""

    name: str = ""
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    is_binary: list = field(default_factory=list)
    blocks: dict = field(default_factory=dict)
    eqs: list = field(default_factory=list)
    les: list = field(default_factory=list)
    cones: list = field(default_factory=list)
    linear_objective: Affine = field(default_factory=lambda: Affine(1))
    squares: list = field(default_factory=list)
    neg_logs: list = field(default_factory=list)

    # -- variables ------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.lb)

    def var(self, name: str, size: int = 1, lb=0.0, ub=np.inf, binary: bool = False) -> Affine:
        if name in self.blocks:
            raise ProgramError(f"variable block {name!r} declared twice")
        size = int(size)
        start = self.n_vars
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (size,))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (size,))
        if binary:
            lb = np.maximum(lb, 0.0)
            ub = np.minimum(ub, 1.0)
        if np.any(lb > ub + 1e-12):
            raise ProgramError(f"variable block {name!r} has lb > ub")
        self.lb.extend(lb.tolist())
        self.ub.extend(ub.tolist())
        self.is_binary.extend([binary] * size)
        self.blocks[name] = (start, size)
        idx = np.arange(start, start + size)
        return Affine(size, np.arange(size), idx, np.ones(size))

    def binary(self, name: str, size: int = 1) -> Affine:
        return self.var(name, size, 0.0, 1.0, binary=True)

    def fix(self, name: str, values) -> None:
        start, size = self.blocks[name]
        values = np.broadcast_to(np.asarray(values, dtype=float), (size,))
        for k in range(size):
            self.lb[start + k] = float(values[k])
            self.ub[start + k] = float(values[k])

    def block(self, name: str) -> Affine:
        start, size = self.blocks[name]
        return Affine(size, np.arange(size), np.arange(start, start + size), np.ones(size))

    # -- constraints ----------------------------------------------------------
    def add_eq(self, lhs, rhs=0.0, name: str = "") -> None:
        expr = as_affine(lhs) - as_affine(rhs)
        self._check(expr)
        self.eqs.append((name, expr))

    def add_le(self, lhs, rhs=0.0, name: str = "") -> None:
        expr = as_affine(lhs) - as_affine(rhs)
        self._check(expr)
        self.les.append((name, expr))

    def add_ge(self, lhs, rhs=0.0, name: str = "") -> None:
        self.add_le(as_affine(rhs) - as_affine(lhs), 0.0, name)

    def add_soc(self, t, components: Sequence, name: str = "") -> None:
        t = as_affine(t)
        comps = [as_affine(c)._broadcast(t.size) for c in components]
        for e in (t, *comps):
            self._check(e)
        self.cones.append(ConeBlock(t, comps, name))

    def add_rotated_soc(self, u, v, components: Sequence, name: str = "") -> None:
        """``u * v >= sum(c**2)`` with ``u, v >= 0`` (elementwise)."""
        u, v = as_affine(u), as_affine(v)
        comps = [2.0 * as_affine(c) for c in components]
        self.add_soc(u + v, [*comps, u - v], name)

    # -- objective ------------------------------------------------------------
    def minimize(self, expr) -> None:
        expr = as_affine(expr)
        self._check(expr)
        self.linear_objective = self.linear_objective + expr.sum()

    def add_squares(self, weight, expr, name: str = "") -> None:
        """Add ``sum_k weight_k * expr_k**2`` to the objective."""
        expr = as_affine(expr)
        self._check(expr)
        w = np.broadcast_to(np.asarray(weight, dtype=float), (expr.size,)).copy()
        if np.any(w < 0):
            raise ProgramError("square weights must be non-negative")
        self.squares.append((name, w, expr))

    def add_neg_log(self, weight, expr, name: str = "") -> None:
        """Add ``-sum_k weight_k * log(expr_k)`` to the objective."""
        expr = as_affine(expr)
        self._check(expr)
        w = np.broadcast_to(np.asarray(weight, dtype=float), (expr.size,)).copy()
        if np.any(w < 0):
            raise ProgramError("log weights must be non-negative")
        self.neg_logs.append((name, w, expr))

    # -- inspection -----------------------------------------------------------
    def _check(self, expr: Affine) -> None:
        if expr.max_col() >= self.n_vars:
            raise ProgramError("expression references an undeclared variable")

    @property
    def binary_index(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.is_binary, dtype=bool))

    @property
    def has_nonlinear(self) -> bool:
        return bool(self.squares or self.cones or self.neg_logs)

    def stacked(self, items) -> Affine:
        exprs = [e for _, e in items]
        return Affine.concat(exprs) if exprs else Affine(0)

    def square_parts(self) -> tuple[np.ndarray, Affine]:
        if not self.squares:
            return np.zeros(0), Affine(0)
        return (np.concatenate([w for _, w, _ in self.squares]),
                Affine.concat([e for _, _, e in self.squares]))

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self.linear_objective.value(x)[0])
        for _, w, e in self.squares:
            val += float(np.dot(w, e.value(x) ** 2))
        for _, w, e in self.neg_logs:
            arg = e.value(x)
            if np.any(arg[w > 0] <= 0):
                return np.inf
            val -= float(np.dot(w[w > 0], np.log(arg[w > 0])))
        return val

    def validate(self) -> None:
        """Structural well-formedness check; raises :class:`ProgramError`."""
        n = self.n_vars
        for name, e in self.eqs + self.les:
            if e.max_col() >= n:
                raise ProgramError(f"row block {name!r} references an undeclared variable")
        for cone in self.cones:
            if not cone.components:
                raise ProgramError(f"cone block {cone.name!r} has no components")
            for c in cone.components:
                if c.size != cone.t.size:
                    raise ProgramError(f"cone block {cone.name!r} has ragged components")
        if self.linear_objective.size != 1:
            raise ProgramError("objective must be scalar")
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
            raise ProgramError("NaN variable bound")
        if np.any(lb > ub + 1e-9):
            raise ProgramError("variable with lb > ub")
        if self.neg_logs and len(self.binary_index):
            raise ProgramError("log terms are only supported in continuous programs")

    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Largest violation per constraint family, scaled by row magnitude."""
        out = {"eq": 0.0, "le": 0.0, "bounds": 0.0, "integrality": 0.0, "cone": 0.0}
        for _, e in self.eqs:
            r = e.value(x)
            out["eq"] = max(out["eq"], float(np.max(np.abs(r) / (1.0 + np.abs(e.const)), initial=0.0)))
        for _, e in self.les:
            r = e.value(x)
            out["le"] = max(out["le"], float(np.max(np.maximum(r, 0) / (1.0 + np.abs(e.const)), initial=0.0)))
        lb, ub = np.asarray(self.lb), np.asarray(self.ub)
        viol = np.maximum(lb - x, 0) + np.maximum(x - ub, 0)
        out["bounds"] = float(np.max(viol / (1.0 + np.minimum(np.abs(np.where(np.isfinite(lb), lb, 0)),
                                                              np.abs(np.where(np.isfinite(ub), ub, 0)))),
                                     initial=0.0))
        b = self.binary_index
        if len(b):
            out["integrality"] = float(np.max(np.abs(x[b] - np.round(x[b])), initial=0.0))
        for cone in self.cones:
            t = cone.t.value(x)
            norm = np.sqrt(sum(c.value(x) ** 2 for c in cone.components))
            out["cone"] = max(out["cone"], float(np.max(np.maximum(norm - t, 0) / (1.0 + np.abs(t)), initial=0.0)))
        return out

    def with_binaries_fixed(self, x: np.ndarray) -> "Program":
        """Shallow copy with every binary pinned to its rounded value in ``x``."""
        b = self.binary_index
        lb, ub = list(self.lb), list(self.ub)
        for k, v in zip(b, np.round(np.clip(np.asarray(x, dtype=float)[b], 0, 1))):
            lb[k] = ub[k] = float(v)
        return dataclasses.replace(self, lb=lb, ub=ub)

    def free_binary_index(self) -> np.ndarray:
        """Binaries whose bounds still leave both values open."""
        b = self.binary_index
        lb, ub = np.asarray(self.lb)[b], np.asarray(self.ub)[b]
        return b[ub - lb > 0.5]

    def _row_groups(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(row id, column) incidence pairs; rows that must stay together share an id."""
        groups, next_id = [], 0

        def rows_of(e: Affine, ids: np.ndarray):
            groups.append((ids[e.rows], e.cols))

        for _, e in self.eqs + self.les:
            rows_of(e, next_id + np.arange(e.size))
            next_id += e.size
        for cone in self.cones:
            ids = next_id + np.arange(cone.count)
            for e in (cone.t, *cone.components):
                rows_of(e, ids)
            next_id += cone.count
        for _, _, e in self.squares + self.neg_logs:
            rows_of(e, next_id + np.arange(e.size))
            next_id += e.size
        return groups, next_id

    def components(self) -> list[np.ndarray]:
        """Column sets of the independent blocks of the program, in column order."""
        from scipy.sparse.csgraph import connected_components

        n = self.n_vars
        groups, n_rows = self._row_groups()
        rows = np.concatenate([g[0] for g in groups]) if groups else np.zeros(0, dtype=np.int64)
        cols = np.concatenate([g[1] for g in groups]) if groups else np.zeros(0, dtype=np.int64)
        # bipartite graph: columns are nodes 0..n-1, rows are nodes n..n+n_rows-1
        graph = sp.coo_matrix((np.ones(len(rows)), (cols, n + rows)), shape=(n + n_rows, n + n_rows))
        _, labels = connected_components(graph, directed=False)
        var_labels = labels[:n]
        order = {}
        for lab in var_labels:
            order.setdefault(int(lab), len(order))
        return [np.flatnonzero(var_labels == lab) for lab in order]

    def restrict(self, cols: np.ndarray, keep_constant: bool = False) -> "Program":
        """Sub-program over ``cols`` holding every row that touches them.

        Rows must not reach outside ``cols`` (use :meth:`components`).  The
        objective constant is kept only when ``keep_constant`` is set.
        """
        cols = np.asarray(cols, dtype=np.int64)
        remap = np.full(self.n_vars, -1, dtype=np.int64)
        remap[cols] = np.arange(len(cols))

        def sub(e: Affine, keep_empty: bool = False) -> Affine:
            touched = np.zeros(e.size, dtype=bool)
            touched[e.rows[remap[e.cols] >= 0]] = True
            if keep_empty:
                touched |= np.bincount(e.rows, minlength=e.size) == 0
            rows = np.flatnonzero(touched)
            pos = np.full(e.size, -1, dtype=np.int64)
            pos[rows] = np.arange(len(rows))
            k = touched[e.rows]
            if np.any(remap[e.cols[k]] < 0):
                raise ProgramError("restricted rows reach outside the column set")
            return Affine(len(rows), pos[e.rows[k]], remap[e.cols[k]], e.vals[k], e.const[rows])

        out = Program(name=self.name)
        lb, ub, isb = np.asarray(self.lb), np.asarray(self.ub), np.asarray(self.is_binary)
        out.lb, out.ub, out.is_binary = lb[cols].tolist(), ub[cols].tolist(), isb[cols].tolist()
        for name, (start, size) in self.blocks.items():
            idx = remap[start:start + size]
            if np.all(idx >= 0) and size and np.all(np.diff(idx) == 1):
                out.blocks[name] = (int(idx[0]), size)
        out.eqs = [(nm, sub(e, keep_constant)) for nm, e in self.eqs]
        out.les = [(nm, sub(e, keep_constant)) for nm, e in self.les]
        out.eqs = [(nm, e) for nm, e in out.eqs if e.size]
        out.les = [(nm, e) for nm, e in out.les if e.size]
        for cone in self.cones:
            touched = np.zeros(cone.count, dtype=bool)
            for e in (cone.t, *cone.components):
                touched[e.rows[remap[e.cols] >= 0]] = True
            rows = np.flatnonzero(touched)
            if len(rows):
                out.cones.append(ConeBlock(_take(cone.t, rows, remap),
                                           [_take(c, rows, remap) for c in cone.components], cone.name))
        lo = self.linear_objective
        k = remap[lo.cols] >= 0
        out.linear_objective = Affine(1, np.zeros(int(k.sum()), dtype=np.int64), remap[lo.cols[k]], lo.vals[k],
                                      lo.const if keep_constant else [0.0])
        for attr in ("squares", "neg_logs"):
            for nm, w, e in getattr(self, attr):
                se = sub(e, keep_constant)
                if not se.size:
                    continue
                touched = np.zeros(e.size, dtype=bool)
                touched[e.rows[remap[e.cols] >= 0]] = True
                if keep_constant:
                    touched |= np.bincount(e.rows, minlength=e.size) == 0
                getattr(out, attr).append((nm, w[touched], se))
        return out

    def values(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: x[s:s + n].copy() for name, (s, n) in self.blocks.items()}
