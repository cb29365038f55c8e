#!/usr/bin/env python3
"""Solve a free-format MPS file with SciPy's HiGHS and print `name value` lines.

usage: solve_mps.py MODEL.mps [SOLUTION.txt]

The first line is `# objective <value>`. Exits 1 when HiGHS does not report
an optimal solution, 2 on usage or parse errors.
"""
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix


def parse_mps(text):
    rows, senses, obj_row = [], {}, None
    cols, col_index, integer = [], {}, []
    entries, cost, rhs = [], {}, {}
    lower, upper = {}, {}
    section, in_int = None, False
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            section = raw.split()[0]
            continue
        f = raw.split()
        if section == "ROWS":
            if f[0] == "N":
                obj_row = obj_row or f[1]
            else:
                senses[f[1]] = f[0]
                rows.append(f[1])
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                in_int = f[2] == "'INTORG'"
                continue
            name = f[0]
            if name not in col_index:
                col_index[name] = len(cols)
                cols.append(name)
                integer.append(in_int)
            for r, v in zip(f[1::2], f[2::2]):
                if r == obj_row:
                    cost[name] = float(v)
                else:
                    entries.append((r, name, float(v)))
        elif section == "RHS":
            for r, v in zip(f[1::2], f[2::2]):
                rhs[r] = float(v)
        elif section == "BOUNDS":
            kind, name = f[0], f[2]
            v = float(f[3]) if len(f) > 3 else None
            if kind == "UP":
                upper[name] = v
            elif kind == "LO":
                lower[name] = v
            elif kind == "FX":
                lower[name] = upper[name] = v
            elif kind == "MI":
                lower[name] = -np.inf
            elif kind == "PL":
                upper[name] = np.inf
            elif kind == "FR":
                lower[name], upper[name] = -np.inf, np.inf
            elif kind == "BV":
                lower[name], upper[name] = 0.0, 1.0
                integer[col_index[name]] = True
            else:
                raise ValueError(f"unsupported bound type {kind}")
        elif section == "RANGES":
            raise ValueError("RANGES are not supported")
    row_index = {r: i for i, r in enumerate(rows)}
    n = len(cols)
    a = coo_matrix(
        ([v for _, _, v in entries], ([row_index[r] for r, _, _ in entries], [col_index[c] for _, c, _ in entries])),
        shape=(len(rows), n),
    ).tocsr()
    b = np.array([rhs.get(r, 0.0) for r in rows])
    lo_row = np.where([senses[r] in "GE" for r in rows], b, -np.inf)
    hi_row = np.where([senses[r] in "LE" for r in rows], b, np.inf)
    c = np.array([cost.get(name, 0.0) for name in cols])
    lb = np.array([lower.get(name, 0.0) for name in cols])
    ub = np.array([upper.get(name, np.inf) for name in cols])
    return cols, c, a, lo_row, hi_row, lb, ub, np.array(integer, dtype=int)


def main(argv):
    if len(argv) not in (2, 3):
        print(__doc__, file=sys.stderr)
        return 2
    try:
        with open(argv[1]) as fh:
            cols, c, a, lo, hi, lb, ub, integrality = parse_mps(fh.read())
    except (OSError, ValueError, KeyError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    constraints = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    res = milp(c, constraints=constraints, bounds=Bounds(lb, ub), integrality=integrality,
               options={"mip_rel_gap": 1e-9})
    if res.status != 0:
        print(f"error: HiGHS status {res.status}: {res.message}", file=sys.stderr)
        return 1
    x = res.x
    x = np.where(integrality == 1, np.round(x), x)
    lines = [f"# objective {float(c @ x)!r}"] + [f"{n} {float(v)!r}" for n, v in zip(cols, x)]
    out = "\n".join(lines) + "\n"
    if len(argv) == 3:
        with open(argv[2], "w") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
