"""CSV tables written by the harness.

Floats use 17 significant digits so every value round-trips; the Dirichlet
problem is written with ``alpha = inf``.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

from .studies import GAP_COLUMNS

HEADERS = {
    "study_h": ("h", "alpha", "err_control", "err_state", "err_adjoint", "J", "iters"),
    "study_alpha": ("h", "alpha", "err_control", "err_state", "err_adjoint", "J", "iters",
                    "fixed_state", "fixed_adjoint"),
    "study_diagonal": ("k", "n", "h", "alpha", "err_control", "err_state", "err_adjoint", "J",
                       "iters"),
    "cost_gaps": ("h", "alpha") + GAP_COLUMNS,
    "constants": ("n", "h", "alpha", "lambda_h", "lambda1_h", "lambda_alpha_h", "gamma_norm_h",
                  "M1", "M2", "C0", "C0alpha", "m", "M", "rho"),
    "bound_audit": ("name", "alpha", "measured", "bound", "satisfied"),
}


def fmt(value) -> str:
    if value is None:
        return "inf"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.17g" % value
    return str(value)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header {len(header)}")
            w.writerow([fmt(v) for v in row])
    return path


def _field(rec, name):
    if name in ("h", "alpha", "err_control", "err_state", "err_adjoint", "J", "iters"):
        return getattr(rec, name)
    return rec.extra.get(name, math.nan)


def write_records(outdir, table, records) -> Path:
    """Write study records under their table's fixed header."""
    header = HEADERS[table]
    rows = [[_field(r, name) for name in header] for r in records]
    return write_table(Path(outdir) / f"{table}.csv", header, rows)


def write_constants(outdir, reports) -> Path:
    """``reports``: list of ``(n, h, ConstantsReport, rho)``."""
    rows = []
    for n, h, c, rho in reports:
        rows.append([n, h, c.alpha, c.lambda_h, c.lambda1_h,
                     math.nan if c.lambda_alpha_h is None else c.lambda_alpha_h,
                     c.gamma_norm_h, c.M1, c.M2, c.C0,
                     math.nan if c.C0alpha is None else c.C0alpha, c.m, c.M, rho])
    return write_table(Path(outdir) / "constants.csv", HEADERS["constants"], rows)


def write_audit(outdir, audit) -> Path:
    rows = [[r.name, None if math.isinf(r.alpha) else r.alpha, r.measured, r.bound, r.satisfied]
            for r in audit.records]
    return write_table(Path(outdir) / "bound_audit.csv", HEADERS["bound_audit"], rows)


def read_table(path):
    """Rows of a harness CSV as dicts of strings."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
