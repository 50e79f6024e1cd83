"""Model dump in MPS row/column layout for cross-checking with other solvers.

Layout notes (free-format MPS):

* columns are named ``x{index}`` and rows ``r{index}``; original diagnostic
  names appear in ``*`` comment lines at the top.
* binary columns are wrapped in ``INTORG``/``INTEND`` markers and also carry
  ``BV`` bound lines.
* ``QUADOBJ`` entries hold the coefficient of ``x_i * x_j`` exactly as it
  appears in the objective (upper triangle, not halved).
* a constant objective offset, when present, is written as the RHS of the
  objective row with its sign flipped, which is the common convention.
"""

from __future__ import annotations

from .model import BINARY, EQ, GE, LE, MipModel

_ROW_TYPE = {LE: "L", GE: "G", EQ: "E"}


def write_mps(model: MipModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_mps(model))


def dump_mps(model: MipModel) -> str:
    lines = [f"* {model.name}"]
    for var in model.variables:
        if var.name:
            lines.append(f"* column x{var.index} = {var.name}")
    for i, row in enumerate(model.constraints):
        if row.name:
            lines.append(f"* row r{i} = {row.name}")
    lines.append(f"NAME {model.name}")

    lines.append("ROWS")
    lines.append(" N  COST")
    for i, row in enumerate(model.constraints):
        lines.append(f" {_ROW_TYPE[row.relation]}  r{i}")

    by_column: dict[int, list[tuple[str, float]]] = {v.index: [] for v in model.variables}
    for var, coeff in model.objective.linear.items():
        by_column[var].append(("COST", coeff))
    for i, row in enumerate(model.constraints):
        for var, coeff in row.coeffs:
            by_column[var].append((f"r{i}", coeff))

    lines.append("COLUMNS")
    in_integer_block = False
    marker = 0
    for var in model.variables:
        wants_integer = var.kind == BINARY
        if wants_integer != in_integer_block:
            tag = "INTORG" if wants_integer else "INTEND"
            lines.append(f"    MARKER{marker}  'MARKER'  '{tag}'")
            marker += 1
            in_integer_block = wants_integer
        entries = by_column[var.index]
        if not entries:
            entries = [("COST", 0.0)]
        for row_name, coeff in entries:
            lines.append(f"    x{var.index}  {row_name}  {coeff!r}")
    if in_integer_block:
        lines.append(f"    MARKER{marker}  'MARKER'  'INTEND'")

    lines.append("RHS")
    if model.objective.constant:
        lines.append(f"    RHS  COST  {(-model.objective.constant)!r}")
    for i, row in enumerate(model.constraints):
        if row.rhs:
            lines.append(f"    RHS  r{i}  {row.rhs!r}")

    lines.append("BOUNDS")
    for var in model.variables:
        if var.kind == BINARY:
            lines.append(f" BV BND  x{var.index}")
            continue
        lo_finite = var.lower != float("-inf")
        hi_finite = var.upper != float("inf")
        if lo_finite and hi_finite and var.lower == var.upper:
            lines.append(f" FX BND  x{var.index}  {var.lower!r}")
            continue
        if not lo_finite and not hi_finite:
            lines.append(f" FR BND  x{var.index}")
            continue
        if lo_finite:
            lines.append(f" LO BND  x{var.index}  {var.lower!r}")
        else:
            lines.append(f" MI BND  x{var.index}")
        if hi_finite:
            lines.append(f" UP BND  x{var.index}  {var.upper!r}")

    if model.objective.quadratic:
        lines.append("QUADOBJ")
        for (i, j), coeff in sorted(model.objective.quadratic.items()):
            lines.append(f"    x{i}  x{j}  {coeff!r}")

    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
