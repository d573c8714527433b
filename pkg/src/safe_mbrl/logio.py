"""CSV serialization of simulation logs."""

import csv
import json
from pathlib import Path

import numpy as np

from safe_mbrl.sim import SimLog

__all__ = ["csv_header", "write_log", "read_log", "summarize", "write_summary"]


def csv_header(n, m, L, p):
    cols = ["t"]
    cols += [f"x{i + 1}" for i in range(n)]
    cols += [f"u{i + 1}" for i in range(m)]
    cols += [f"u_sg{i + 1}" for i in range(m)]
    cols += ["h", "B", "delta_t"]
    cols += [f"Wc{i + 1}" for i in range(L)]
    cols += [f"Wa{i + 1}" for i in range(L)]
    cols += [f"th{i + 1}" for i in range(p)]
    cols += ["gamma_min", "status"]
    return cols


def _row_indices(count, every):
    idx = list(range(0, count, every))
    if idx[-1] != count - 1:
        idx.append(count - 1)
    return idx


def write_log(log: SimLog, path, every: int = 10):
    """Write every ``every``-th record (and always the last one).

    The ``status`` column carries the per-step flag (``ok``, ``unsafe``,
    ``substituted``) except on the final row, which carries the run's terminal
    status.  Floats use ``repr`` so they parse back to the identical double.
    """
    if every < 1:
        raise ValueError("decimation factor must be at least 1")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = len(log)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(log.n, log.m, log.L, log.p))
        for k in _row_indices(count, every):
            values = [log.t[k], *log.x[k], *log.u[k], *log.u_safeguard[k], log.h[k], log.B[k], log.delta_t[k]]
            values += [*log.w_c[k], *log.w_a[k], *log.theta[k], log.gamma_min[k]]
            status = log.status if k == count - 1 else log.flags[k]
            writer.writerow([repr(float(v)) for v in values] + [status])
    return path


def read_log(path):
    """Parse a CSV log into ``(header, float matrix, status column)``."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    data = np.array([[float(v) for v in row[:-1]] for row in rows], dtype=float).reshape(len(rows), len(header) - 1)
    return header, data, [row[-1] for row in rows]


def summarize(log: SimLog) -> dict:
    pe = log.pe_levels()
    out = {
        "scenario": log.scenario,
        "status": log.status,
        "message": log.message,
        "records": len(log),
        "t_final": float(log.t[-1]),
        "x_final": log.x[-1].tolist(),
        "norm_x_final": float(np.linalg.norm(log.x[-1])),
        "min_h": float(np.nanmin(log.h)),
        "first_violation_time": log.first_violation_time,
        "violation_steps": int(np.sum(log.h <= 0)),
        "gamma_min": float(np.nanmin(log.gamma_min)),
        "gamma_max": float(np.nanmax(log.gamma_max)),
        "w_c_final": log.w_c[-1].tolist(),
        "w_a_final": log.w_a[-1].tolist(),
        "max_norm_w_a": float(np.max(np.linalg.norm(log.w_a, axis=1))),
        "pe_c1": pe[0],
        "pe_c2": pe[1],
        "pe_c3": pe[2],
        "wall_time_s": log.wall_time,
    }
    if log.p:
        out["theta_final"] = log.theta[-1].tolist()
        out["stack_size"] = log.stack_size
        out["stack_full_rank_time"] = (
            None if log.stack_full_rank_index is None else float(log.t[log.stack_full_rank_index])
        )
    return out


def write_summary(log: SimLog, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summarize(log), indent=2) + "\n")
    return path
