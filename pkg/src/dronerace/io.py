"""Race log CSV format.

Column order is fixed: ``t``; per drone (rear first, then front) the 15
augmented states, the four thrusts, the residual norm and the solve time;
then the two potential values and the running minimum distance. Values are
written with 17 significant digits so a read gives back the exact doubles.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaMismatch
from .harness import RaceLog

_DRONE_FIELDS = ("x", "y", "z", "vx", "vy", "vz", "w1", "w2", "w3",
                 "q0", "q1", "q2", "q3", "theta", "sigma",
                 "F1", "F2", "F3", "F4", "residual", "solve_ms")
COLUMNS = (("t",)
           + tuple(f"rear_{c}" for c in _DRONE_FIELDS)
           + tuple(f"front_{c}" for c in _DRONE_FIELDS)
           + ("potential_ego", "potential_opp", "min_distance"))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def log_to_matrix(log: RaceLog, include_timing: bool = True) -> np.ndarray:
    """The log as an (n, len(COLUMNS)) array in column order."""
    n = len(log)
    blocks = [log.t[:, None]]
    for pos in ("rear", "front"):
        ms = getattr(log, f"{pos}_solve_ms")
        blocks += [getattr(log, f"{pos}_state"), getattr(log, f"{pos}_input"),
                   getattr(log, f"{pos}_residual")[:, None],
                   (ms if include_timing else np.zeros(n))[:, None]]
    blocks += [log.potential_ego[:, None], log.potential_opp[:, None], log.min_distance[:, None]]
    return np.hstack(blocks) if n else np.zeros((0, len(COLUMNS)))


def matrix_to_log(M: np.ndarray, front: str = "", rear: str = "") -> RaceLog:
    M = np.asarray(M, dtype=float).reshape(-1, len(COLUMNS))
    k = 1
    parts = {}
    for pos in ("rear", "front"):
        parts[pos] = (M[:, k:k + 15], M[:, k + 15:k + 19], M[:, k + 19], M[:, k + 20])
        k += 21
    r, f = parts["rear"], parts["front"]
    return RaceLog(M[:, 0].copy(), r[0].copy(), f[0].copy(), r[1].copy(), f[1].copy(),
                   r[2].copy(), f[2].copy(), r[3].copy(), f[3].copy(),
                   M[:, k].copy(), M[:, k + 1].copy(), M[:, k + 2].copy(), front, rear)


def write_race_csv(log: RaceLog, path, include_timing: bool = True) -> Path:
    """Write a race log; ``include_timing=False`` writes solve_ms as 0.

    Wall-clock solve times differ between runs, so leaving them out makes
    the file a deterministic function of the configuration.
    """
    path = Path(path)
    M = log_to_matrix(log, include_timing)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in M:
            w.writerow([_fmt(v) for v in row])
    return path


def read_race_csv(path, front: str = "", rear: str = "") -> RaceLog:
    """Parse a file written by ``write_race_csv``.

    Raises:
        SchemaMismatch: header or column count differs from ``COLUMNS``.
        ParseError: a cell is not a finite number (row is 1-based, header
            excluded).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise SchemaMismatch(f"{path}: header does not match the race log schema")
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(COLUMNS):
                raise SchemaMismatch(f"{path}: row {i} has {len(row)} columns, "
                                     f"expected {len(COLUMNS)}")
            vals = []
            for name, cell in zip(COLUMNS, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: cannot parse {cell!r}", i, name) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: non-finite value {cell!r}", i, name)
                vals.append(v)
            rows.append(vals)
    return matrix_to_log(np.array(rows).reshape(-1, len(COLUMNS)), front, rear)
