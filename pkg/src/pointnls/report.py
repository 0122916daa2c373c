"""Tabulated sweep results and their CSV form.

The CSV carries one row per mass with 17 significant digits so doubles round
trip exactly. Instance parameters and solver settings travel in a JSON sidecar
next to the CSV (``<name>.meta.json``).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .model import DomainError, PhysicalParams

CSV_COLUMNS = ("mu", "E", "omega", "q", "h_alpha", "lp_p", "iters", "residual", "converged")


def format_float(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True)
class SweepRow:
    mu: float
    E: float
    omega: float
    q: float
    h_alpha: float
    lp_p: float
    iters: int
    residual: float
    converged: bool

    def csv_fields(self) -> list[str]:
        return [format_float(self.mu), format_float(self.E), format_float(self.omega),
                format_float(self.q), format_float(self.h_alpha), format_float(self.lp_p),
                str(int(self.iters)), format_float(self.residual),
                "true" if self.converged else "false"]


@dataclass(frozen=True)
class SweepReport:
    """Rows of ``(mu, E, omega, q, h_alpha, lp_p, iters, residual, converged)``.

    Rows are kept sorted by ``mu``. ``grad_tol`` records the solver tolerance
    the rows were produced with; checks derive their margins from it.
    """

    params: PhysicalParams
    rows: tuple = ()
    grad_tol: float = 1e-8
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = tuple(self.rows)
        mus = [r.mu for r in rows]
        if any(b <= a for a, b in zip(mus, mus[1:])):
            raise DomainError("sweep rows must be sorted by strictly increasing mu")
        object.__setattr__(self, "rows", rows)

    def converged_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if r.converged]

    def meta_dict(self) -> dict:
        return {"params": self.params.to_dict(), "grad_tol": self.grad_tol, **self.meta}

    def write_csv(self, path) -> Path:
        """Write the table and its sidecar; returns the CSV path."""
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(row.csv_fields())
        with open(sidecar_path(path), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.meta_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise DomainError(f"not a boolean: {text!r}")


def read_csv(path, params: PhysicalParams | None = None) -> SweepReport:
    """Load a report. ``params`` overrides the sidecar; one of them is required."""
    path = Path(path)
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    if params is None:
        if "params" not in meta:
            raise DomainError(f"no instance parameters for {path}: missing {side.name}")
        pd = meta["params"]
        params = PhysicalParams(int(pd["dim"]), float(pd["alpha"]), float(pd["p"]))
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise DomainError(f"unexpected CSV header {reader.fieldnames}")
        for rec in reader:
            rows.append(SweepRow(
                mu=float(rec["mu"]), E=float(rec["E"]), omega=float(rec["omega"]),
                q=float(rec["q"]), h_alpha=float(rec["h_alpha"]), lp_p=float(rec["lp_p"]),
                iters=int(rec["iters"]), residual=float(rec["residual"]),
                converged=_parse_bool(rec["converged"])))
    grad_tol = float(meta.get("grad_tol", 1e-8))
    extra = {k: v for k, v in meta.items() if k not in ("params", "grad_tol")}
    if not math.isfinite(grad_tol) or grad_tol <= 0:
        raise DomainError("grad_tol in sidecar must be positive")
    return SweepReport(params, tuple(rows), grad_tol, extra)
