"""Text formats: error-matrix interchange file, schedule JSON and report CSV.

Error-matrix file::

    #cem-error-matrix v1
    T=<int> intervals=<n1,n2,...> samples=<int>
    t,<K means>,<K variances>      # one line per timestep, T first
    ...

Absent cells are written as ``NA``; numbers use Python's shortest
round-trip ``repr`` so values survive a write/read cycle exactly.
"""
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .error_model import ErrorMatrix, structural_absence
from .errors import ContractError, IntegrityError, ParseError
from .scheduler import CacheSchedule

MATRIX_MAGIC = "#cem-error-matrix v1"
SCHEDULE_VERSION = 1
_HEADER = re.compile(r"T=(\d+) intervals=(\d+(?:,\d+)*) samples=(\d+)")
_SCHEDULE_KEYS = (
    "version",
    "total_steps",
    "num_caching",
    "candidates",
    "weights",
    "intervals",
    "compute_steps",
    "total_cost",
)


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_number(value: float) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _cell(value: float) -> str:
    return "NA" if math.isnan(value) else format_number(value)


def format_error_matrix(matrix: ErrorMatrix) -> str:
    lines = [
        MATRIX_MAGIC,
        f"T={matrix.total_steps} intervals={','.join(map(str, matrix.intervals))} "
        f"samples={matrix.num_samples}",
    ]
    for row, t in enumerate(matrix.timesteps):
        cells = [_cell(v) for v in matrix.mean[row]] + [_cell(v) for v in matrix.variance[row]]
        lines.append(",".join([str(t), *cells]))
    return "\n".join(lines) + "\n"


def parse_error_matrix(text: str) -> ErrorMatrix:
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != MATRIX_MAGIC:
        raise ParseError(f"expected header {MATRIX_MAGIC!r}", line=1)
    if len(lines) < 2:
        raise ParseError("missing dimensions line", line=2)
    m = _HEADER.fullmatch(lines[1])
    if not m:
        raise ParseError("malformed dimensions line, expected 'T=<int> intervals=<ints> samples=<int>'", line=2)
    T = int(m.group(1))
    intervals = tuple(int(v) for v in m.group(2).split(","))
    samples = int(m.group(3))
    K = len(intervals)
    if T < 1 or samples < 1:
        raise ParseError("T and samples must be positive", line=2)
    if any(n < 1 for n in intervals) or any(b <= a for a, b in zip(intervals, intervals[1:])):
        raise ParseError("intervals must be strictly increasing positive integers", line=2)

    data = lines[2:]
    if len(data) != T:
        raise ParseError(
            f"header declares T={T} but the file has {len(data)} data rows"
            + (f" ({T - len(data)} missing)" if len(data) < T else f" ({len(data) - T} extra)")
        )
    mean = np.full((T, K), np.nan)
    var = np.full((T, K), np.nan)
    seen = {}
    for row, raw in enumerate(data):
        lineno = row + 3
        fields = raw.split(",")
        if len(fields) != 1 + 2 * K:
            raise ParseError(f"expected {1 + 2 * K} columns, found {len(fields)}", line=lineno)
        try:
            t = int(fields[0])
        except ValueError:
            raise ParseError(f"timestep {fields[0]!r} is not an integer", line=lineno) from None
        if t in seen:
            raise ParseError(f"duplicate timestep {t} (first on line {seen[t]})", line=lineno)
        seen[t] = lineno
        if t != T - row:
            raise ParseError(f"expected timestep {T - row}, found {t}", line=lineno)
        values = [_parse_cell(f, lineno) for f in fields[1:]]
        mean[row] = values[:K]
        var[row] = values[K:]

    absent = np.isnan(mean)
    if not np.array_equal(absent, np.isnan(var)):
        bad = int(np.argmax((absent != np.isnan(var)).any(axis=1)))
        raise ParseError("mean and variance must be NA in the same cells", line=bad + 3)
    forced = structural_absence(T, intervals) & ~absent
    if forced.any():
        bad = int(np.argmax(forced.any(axis=1)))
        raise ParseError(f"cells with t + n > T must be NA (timestep {T - bad})", line=bad + 3)
    try:
        return ErrorMatrix(T, intervals, mean, var, samples)
    except ContractError as exc:
        raise ParseError(str(exc)) from None


def _parse_cell(field: str, lineno: int) -> float:
    if field == "NA":
        return math.nan
    try:
        value = float(field)
    except ValueError:
        raise ParseError(f"non-numeric cell {field!r}", line=lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {field!r}", line=lineno)
    return value


def write_error_matrix(matrix: ErrorMatrix, path) -> None:
    atomic_write_text(path, format_error_matrix(matrix))


def read_error_matrix(path) -> ErrorMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_error_matrix(fh.read())


def schedule_to_dict(schedule: CacheSchedule) -> dict:
    return {
        "version": SCHEDULE_VERSION,
        "total_steps": schedule.total_steps,
        "num_caching": schedule.num_caching,
        "candidates": list(schedule.candidates) if schedule.candidates is not None else None,
        "weights": list(schedule.weights) if schedule.weights is not None else None,
        "intervals": list(schedule.intervals),
        "compute_steps": list(schedule.compute_steps),
        "total_cost": schedule.total_cost,
    }


def format_schedule(schedule: CacheSchedule) -> str:
    return json.dumps(schedule_to_dict(schedule), indent=2) + "\n"


def _int_list(doc, key, allow_none=False):
    value = doc[key]
    if value is None and allow_none:
        return None
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ParseError(f"{key!r} must be a list of integers")
    return value


def parse_schedule(text: str) -> CacheSchedule:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("schedule file must hold a JSON object")
    missing = [k for k in _SCHEDULE_KEYS if k not in doc]
    if missing:
        raise ParseError(f"missing keys {missing}")
    unknown = sorted(set(doc) - set(_SCHEDULE_KEYS))
    if unknown:
        raise ParseError(f"unknown keys {unknown}")
    if doc["version"] != SCHEDULE_VERSION:
        raise ParseError(f"unsupported schedule version {doc['version']!r}")
    for key in ("total_steps", "num_caching"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool):
            raise ParseError(f"{key!r} must be an integer")
    intervals = _int_list(doc, "intervals")
    compute_steps = _int_list(doc, "compute_steps")
    candidates = _int_list(doc, "candidates", allow_none=True)
    weights = doc["weights"]
    if weights is not None and (
        not isinstance(weights, list) or not all(isinstance(w, (int, float)) and not isinstance(w, bool) for w in weights)
    ):
        raise ParseError("'weights' must be a list of numbers or null")
    cost = doc["total_cost"]
    if cost is not None and (not isinstance(cost, (int, float)) or isinstance(cost, bool)):
        raise ParseError("'total_cost' must be a number or null")

    try:
        schedule = CacheSchedule(
            total_steps=doc["total_steps"],
            intervals=tuple(intervals),
            candidates=tuple(candidates) if candidates is not None else None,
            weights=tuple(weights) if weights is not None else None,
            total_cost=cost,
        )
    except ContractError as exc:
        raise ParseError(f"invalid schedule: {exc}") from None
    if doc["num_caching"] != schedule.num_caching:
        raise IntegrityError(
            f"num_caching={doc['num_caching']} but {schedule.num_caching} intervals are listed"
        )
    if tuple(compute_steps) != schedule.compute_steps:
        raise IntegrityError(
            f"compute_steps {compute_steps} contradict the intervals (expected {list(schedule.compute_steps)})"
        )
    return schedule


def write_schedule(schedule: CacheSchedule, path) -> None:
    atomic_write_text(path, format_schedule(schedule))


def read_schedule(path) -> CacheSchedule:
    with open(path, encoding="utf-8") as fh:
        return parse_schedule(fh.read())


def format_report_csv(
    header: Sequence[str], rows: Iterable[Sequence[float]], trailer: Sequence[str] = ()
) -> str:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ContractError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(format_number(v) for v in row))
    lines.extend(trailer)
    return "\n".join(lines) + "\n"


def write_report_csv(path, header, rows, trailer=()) -> None:
    atomic_write_text(path, format_report_csv(header, rows, trailer))


def read_report_csv(path) -> tuple[list[str], list[list[float]], list[str]]:
    """Return ``(header, rows, trailer_lines)``; trailer lines start with ``#``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty report")
    header = lines[0].split(",")
    rows, trailer = [], []
    for i, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            trailer.append(line)
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise ParseError("non-numeric report field", line=i) from None
    return header, rows, trailer
