"""
Quadruple datasets and calibration results on disk.
"""

import math
from pathlib import Path
from typing import Sequence

import pandas as pd

from threepath.exceptions import DataFormatError, InvalidConfigError

from .types import CalibrationResult, QuadrupleMeasurement

FLOAT_FORMAT = "%.10g"
QUADRUPLE_COLUMNS = ["dark_cps", "a_cps", "b_cps", "ab_cps", "duration_s"]
REPEAT_COLUMNS = ["a_repeat_cps", "b_repeat_cps"]
RESULT_COLUMNS = [
    "tau_s",
    "tau_stderr_s",
    "r0_cps",
    "r0_stderr_cps",
    "n_quadruples",
    "bootstrap_resamples",
    "bootstrap_failures",
]


def _optional(value) -> float | None:
    return None if pd.isna(value) else float(value)


def read_quadruples(path: str | Path) -> list[QuadrupleMeasurement]:
    """
    Read a quadruple CSV (header row required, comma separated).

    Errors name the file line of the offending row.
    """
    try:
        frame = pd.read_csv(path, skipinitialspace=True, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataFormatError(f"{path}: {e}") from e
    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in QUADRUPLE_COLUMNS if column not in frame.columns]
    if missing:
        raise DataFormatError(f"{path}: missing columns {', '.join(missing)}")
    has_repeats = all(column in frame.columns for column in REPEAT_COLUMNS)

    data = []
    for position, row in enumerate(frame.itertuples(index=False)):
        line = position + 2
        values = row._asdict()
        try:
            numbers = [float(values[column]) for column in QUADRUPLE_COLUMNS]
            if not all(math.isfinite(number) for number in numbers):
                raise ValueError("empty or non-finite value")
            repeats = (
                [_optional(values[column]) for column in REPEAT_COLUMNS]
                if has_repeats
                else [None, None]
            )
            data.append(QuadrupleMeasurement(*numbers, *repeats))
        except (TypeError, ValueError, InvalidConfigError) as e:
            raise DataFormatError(f"{path}, line {line}: {e}") from e
    if not data:
        raise DataFormatError(f"{path}: no quadruples")
    return data


def quadruples_frame(data: Sequence[QuadrupleMeasurement]) -> pd.DataFrame:
    frame = pd.DataFrame(
        {
            "dark_cps": [q.dark_rate for q in data],
            "a_cps": [q.rate_a for q in data],
            "b_cps": [q.rate_b for q in data],
            "ab_cps": [q.rate_ab for q in data],
            "duration_s": [q.duration for q in data],
        }
    )
    if any(q.has_repeats for q in data):
        frame["a_repeat_cps"] = [q.rate_a_repeat for q in data]
        frame["b_repeat_cps"] = [q.rate_b_repeat for q in data]
    return frame


def write_quadruples(data: Sequence[QuadrupleMeasurement], path: str | Path) -> None:
    quadruples_frame(data).to_csv(
        path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )


def format_report(result: CalibrationResult) -> str:
    """Flat ``key = value`` report, one entry per line."""
    lines = [
        f"tau_ns = {result.tau_hat * 1e9:.4f}",
        f"tau_stderr_ns = {result.tau_stderr * 1e9:.4f}",
        f"r0_cps = {result.r0_hat:.3f}",
        f"r0_stderr_cps = {result.r0_stderr:.3f}",
        f"n_quadruples = {result.n_quadruples}",
        f"bootstrap_resamples = {result.bootstrap_resamples}",
        f"bootstrap_failures = {result.bootstrap_failures}",
        "drifting_quadruples = " + ",".join(str(i) for i in result.drifting),
    ]
    lines += [
        f"residual_{index}_cps = {residual:.6g}"
        for index, residual in enumerate(result.residuals)
    ]
    return "\n".join(lines) + "\n"


def write_report(result: CalibrationResult, path: str | Path) -> None:
    Path(path).write_text(format_report(result), encoding="utf-8")


def write_result_csv(result: CalibrationResult, path: str | Path) -> None:
    frame = pd.DataFrame(
        [
            [
                result.tau_hat,
                result.tau_stderr,
                result.r0_hat,
                result.r0_stderr,
                result.n_quadruples,
                result.bootstrap_resamples,
                result.bootstrap_failures,
            ]
        ],
        columns=RESULT_COLUMNS,
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_result_csv(path: str | Path) -> dict[str, float]:
    frame = pd.read_csv(path)
    if list(frame.columns) != RESULT_COLUMNS or len(frame) != 1:
        raise DataFormatError(f"{path}: not a calibration result file")
    return {column: float(frame[column].iloc[0]) for column in RESULT_COLUMNS}
