"""
CSV files written by the scan, sweep and kappa subcommands, and their
readers. Floats use ``%.10g``; a missing value is an empty cell.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from experiments.types import SCAN_FIELDS, LegRecord, PhaseScan, SweepRow
from optics.types import PathSet
from threepath.exceptions import DataFormatError, InvalidConfigError

FLOAT_FORMAT = "%.10g"
GRID_COLUMNS = ["phi_A", "phi_C", *SCAN_FIELDS]
SWEEP_COLUMNS = ["r_abc_det_cps", "kappa_det", "kappa_exp", "kappa_stderr"]
AUDIT_COLUMNS = ["run_index", "combination", "order_position", "count", "duration_s", "seed"]


def _write(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def _read(path: str | Path, columns: list[str], **kwargs) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True, **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{path}: {e}") from e
    frame.columns = [str(column).strip() for column in frame.columns]
    if list(frame.columns) != columns:
        raise DataFormatError(f"{path}: expected columns {','.join(columns)}")
    if frame.empty:
        raise DataFormatError(f"{path}: no rows")
    return frame


def _numeric(frame: pd.DataFrame, path, required: Sequence[str]) -> pd.DataFrame:
    """Coerce every column to float; names the first line with a bad cell."""
    numbers = frame.apply(pd.to_numeric, errors="coerce")
    bad = (numbers.isna() & frame.notna()).any(axis=1) | numbers[list(required)].isna().any(axis=1)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise DataFormatError(f"{path}, line {line}: missing or non-numeric value")
    return numbers


@dataclass(frozen=True)
class GridData:
    """A rectangular grid CSV: axes in radians, one 2-D array per field."""

    grid_A: np.ndarray
    grid_C: np.ndarray
    fields: dict

    def field(self, name: str) -> np.ndarray:
        if name not in self.fields:
            raise InvalidConfigError(
                f"unknown field {name!r}; choose one of {', '.join(SCAN_FIELDS)}"
            )
        return self.fields[name]


def write_grid_csv(scan: PhaseScan, path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "phi_A": [point.phi_A for point in scan.points],
            "phi_C": [point.phi_C for point in scan.points],
            **{name: scan.values(name).ravel() for name in SCAN_FIELDS},
        },
        columns=GRID_COLUMNS,
    )
    _write(frame, path)


def read_grid_csv(path: str | Path) -> GridData:
    """
    Read a grid CSV written row-major (phi_C varying fastest).

    A ragged or misordered grid raises DataFormatError naming the first
    offending line.
    """
    numbers = _numeric(_read(path, GRID_COLUMNS), path, ["phi_A", "phi_C", "r_abc_det_cps"])
    phi_a = numbers["phi_A"].to_numpy()
    phi_c = numbers["phi_C"].to_numpy()
    columns = int(np.argmax(phi_a != phi_a[0])) if np.any(phi_a != phi_a[0]) else len(phi_a)
    grid_c = phi_c[:columns]
    if np.any(np.diff(grid_c) <= 0.0):
        line = int(np.argmax(np.diff(grid_c) <= 0.0)) + 3
        raise DataFormatError(f"{path}, line {line}: phi_C must increase along a row")
    rows = math.ceil(len(phi_a) / columns)
    grid_a = phi_a[::columns]
    for k in range(len(phi_a)):
        i, j = divmod(k, columns)
        misordered = j == 0 and i > 0 and grid_a[i] <= grid_a[i - 1]
        if phi_a[k] != grid_a[i] or phi_c[k] != grid_c[j] or misordered:
            raise DataFormatError(f"{path}, line {k + 2}: grid is not rectangular")
    if rows * columns != len(phi_a):
        raise DataFormatError(f"{path}, line {len(phi_a) + 1}: incomplete last grid row")
    fields = {name: numbers[name].to_numpy().reshape(rows, columns) for name in SCAN_FIELDS}
    return GridData(grid_A=grid_a, grid_C=grid_c, fields=fields)


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "r_abc_det_cps": [row.r_abc_det for row in rows],
            "kappa_det": [row.kappa_det for row in rows],
            "kappa_exp": [np.nan if row.kappa_exp is None else row.kappa_exp for row in rows],
            "kappa_stderr": [
                np.nan if row.kappa_stderr is None else row.kappa_stderr for row in rows
            ],
        },
        columns=SWEEP_COLUMNS,
    )
    _write(frame, path)


def read_sweep_csv(path: str | Path) -> pd.DataFrame:
    return _numeric(_read(path, SWEEP_COLUMNS), path, ["r_abc_det_cps", "kappa_det"])


def write_audit_csv(legs: Sequence[LegRecord], path: str | Path) -> None:
    frame = pd.DataFrame(
        {
            "run_index": [leg.run_index for leg in legs],
            "combination": [leg.combination.label for leg in legs],
            "order_position": [leg.order_position for leg in legs],
            "count": [leg.count for leg in legs],
            "duration_s": [leg.duration for leg in legs],
            # Seeds exceed int64; keep them as text.
            "seed": [str(leg.seed) for leg in legs],
        },
        columns=AUDIT_COLUMNS,
    )
    _write(frame, path)


def read_audit_csv(path: str | Path) -> list[LegRecord]:
    frame = _read(path, AUDIT_COLUMNS, dtype=str, keep_default_na=False)
    legs = []
    for position, row in enumerate(frame.to_dict("records")):
        try:
            legs.append(
                LegRecord(
                    run_index=int(row["run_index"]),
                    combination=PathSet.from_label(row["combination"]),
                    order_position=int(row["order_position"]),
                    count=int(row["count"]),
                    duration=float(row["duration_s"]),
                    seed=int(row["seed"]),
                )
            )
        except (TypeError, ValueError) as e:
            raise DataFormatError(f"{path}, line {position + 2}: {e}") from e
    return legs
