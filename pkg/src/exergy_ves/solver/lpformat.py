"""Export a :class:`Program` as CPLEX LP text for external cross-checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .program import Affine, Program, ProgramError


def _var_names(prog: Program) -> list[str]:
    names = [""] * prog.n_vars
    for block, (start, size) in prog.blocks.items():
        safe = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in block)
        for k in range(size):
            names[start + k] = f"{safe}_{k}" if size > 1 else safe
    return names


def _terms(coefs: dict[int, float], names: list[str]) -> str:
    out = []
    for j in sorted(coefs):
        v = coefs[j]
        if v == 0.0:
            continue
        out.append(f"{'+' if v >= 0 else '-'} {abs(v):.17g} {names[j]}")
    if not out:
        return "0 " + names[0]
    # LP readers cap the line length, so wrap every few terms
    return "\n   ".join(" ".join(out[k:k + 8]) for k in range(0, len(out), 8))


def _row_coefs(e: Affine) -> list[dict[int, float]]:
    rows: list[dict[int, float]] = [dict() for _ in range(e.size)]
    for r, c, v in zip(e.rows, e.cols, e.vals):
        rows[r][int(c)] = rows[r].get(int(c), 0.0) + float(v)
    return rows


def dump_lp(prog: Program, path: str | Path) -> Path:
    """Write the program in LP format.

    Squares become ``w * z^2`` in a quadratic objective through auxiliary
    variables ``z = expr``; cones become ``t^2 >= sum y^2`` with auxiliary
    variables and ``t >= 0``.  Log terms have no LP-format equivalent.
    """
    if prog.neg_logs:
        raise ProgramError("log terms cannot be expressed in LP format")
    names = _var_names(prog)
    aux_names: list[str] = []
    aux_rows: list[tuple[str, dict[int, float], float]] = []

    def new_aux(tag: str, coefs: dict[int, float], const: float) -> str:
        name = f"aux_{tag}_{len(aux_names)}"
        aux_names.append(name)
        aux_rows.append((name, coefs, const))
        return name

    lines = ["\\ exported program " + (prog.name or "unnamed"), "Minimize", " obj:"]
    lo = _row_coefs(prog.linear_objective)[0]
    obj = " " + _terms(lo, names) if lo else " 0 " + names[0]
    quad = []
    for _, w, e in prog.squares:
        for r, coefs in enumerate(_row_coefs(e)):
            if w[r] == 0:
                continue
            z = new_aux("sq", coefs, float(e.const[r]))
            quad.append(f"{2 * w[r]:.17g} {z} ^ 2")
    if quad:
        chunks = [" + ".join(quad[k:k + 8]) for k in range(0, len(quad), 8)]
        obj += "\n + [ " + "\n   + ".join(chunks) + " ] / 2"
    lines.append(obj)
    if prog.linear_objective.const[0]:
        lines.append(f"\\ objective constant {prog.linear_objective.const[0]:.17g}")

    lines.append("Subject To")
    count = 0
    for tag, items, sense in (("e", prog.eqs, "="), ("l", prog.les, "<=")):
        for _, e in items:
            for r, coefs in enumerate(_row_coefs(e)):
                lines.append(f" {tag}{count}: {_terms(coefs, names)} {sense} {-e.const[r]:.17g}")
                count += 1
    for cone in prog.cones:
        trows = _row_coefs(cone.t)
        crows = [_row_coefs(c) for c in cone.components]
        for r in range(cone.count):
            t = new_aux("t", trows[r], float(cone.t.const[r]))
            ys = [new_aux("y", cr[r], float(c.const[r])) for cr, c in zip(crows, cone.components)]
            lines.append(f" q{count}: [ " + " + ".join(f"{y} ^ 2" for y in ys) + f" - {t} ^ 2 ] <= 0")
            count += 1
    all_names = names + aux_names
    for name, coefs, const in aux_rows:
        j = len(names) + aux_names.index(name)
        row = dict(coefs)
        row[j] = row.get(j, 0.0) - 1.0
        lines.append(f" d{count}: {_terms(row, all_names)} = {-const:.17g}")
        count += 1

    lines.append("Bounds")
    lb, ub = np.asarray(prog.lb), np.asarray(prog.ub)
    for j, name in enumerate(names):
        lo_s = "-inf" if not np.isfinite(lb[j]) else f"{lb[j]:.17g}"
        up_s = "+inf" if not np.isfinite(ub[j]) else f"{ub[j]:.17g}"
        lines.append(f" {lo_s} <= {name} <= {up_s}")
    for name in aux_names:
        lines.append(f" {name} >= 0" if name.startswith("aux_t") else f" {name} free")
    b = prog.binary_index
    if len(b):
        lines.append("Binaries")
        lines.extend(" " + names[j] for j in b)
    lines.append("End")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
