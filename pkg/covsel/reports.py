"""
Report output: key=value lines, JSON records and printed tables.

Key=value files put every timing key after a '# timings' marker so the
lines above it are reproducible byte for byte.
"""

import json
import math
import os
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .newton_cg import SolverReport

TIMING_PREFIX = "seconds"


def _plain(value):
    """JSON-safe copy of numpy scalars, arrays and tuples."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def flatten(record: dict, prefix: str = "") -> Dict[str, object]:
    """Nested dicts become dotted keys."""
    out: Dict[str, object] = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, f"{name}."))
        else:
            out[name] = value
    return out


def _is_timing(key: str) -> bool:
    return any(part.startswith(TIMING_PREFIX) for part in key.split("."))


def key_value_lines(record: dict) -> List[str]:
    flat = flatten(record)
    stable = [k for k in flat if not _is_timing(k)]
    timings = [k for k in flat if _is_timing(k)]
    lines = [f"{k}={format_value(flat[k])}" for k in stable]
    if timings:
        lines.append("# timings")
        lines.extend(f"{k}={format_value(flat[k])}" for k in timings)
    return lines


def write_key_values(path: str, record: dict) -> None:
    with open(path, "w") as f:
        f.write("\n".join(key_value_lines(record)) + "\n")


def read_key_values(path: str) -> Dict[str, str]:
    out = {}
    with open(path, "r") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_json(path: str, record: dict) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_plain(record), f, indent=2)


def read_json(path: str) -> dict:
    with open(path, "r") as f:
        return json.load(f)


def solver_summary(report: SolverReport, seconds_embed: Optional[float] = None) -> dict:
    """The fixed solve keys followed by the per-step lists."""
    summary = {
        "n": report.n,
        "m": report.m,
        "newton_steps": report.newton_steps,
        "cg_total": report.cg_total,
        "gap": report.gap,
        "feas": report.feas,
        "converged": report.converged,
        "dual_objective": report.dual_objective,
        "primal_objective": report.primal_objective,
        "cg_iters": report.cg_iters,
        "decrements": report.decrements,
        "step_sizes": report.step_sizes,
    }
    if report.monitor is not None:
        mon = report.monitor
        summary.update({
            "phi_max": mon.phi_max,
            "lambda_max_x0": mon.lambda_max_x0,
            "lambda_min_xhat": mon.lambda_min_xhat,
            "condition_bound": mon.bound,
            "hypothesis_satisfied": mon.satisfied,
            "condition_estimates": mon.conditions,
        })
    if seconds_embed is not None:
        summary["seconds_embed"] = seconds_embed
    summary["seconds_solve"] = report.seconds.get("setup", 0.0) + report.seconds.get("solve", 0.0)
    return summary


def format_table(rows: Sequence[dict], columns: Sequence[str], title: str = "") -> str:
    """Fixed-width table framed by '=' rules."""
    cells = [[_cell(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    rule = "=" * (sum(widths) + 2 * (len(widths) - 1))
    out = [rule]
    if title:
        out += [title, rule]
    out.append("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    out.append("-" * len(rule))
    for row in cells:
        out.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    out.append(rule)
    return "\n".join(out)


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v == 0.0:
            return "0"
        if abs(v) >= 1e4 or abs(v) < 1e-3:
            return f"{v:.2e}"
        return f"{v:.4g}"
    return str(value)


def format_record(record: dict, title: str = "") -> str:
    """Two-column key/value table."""
    rows = [{"key": k, "value": v} for k, v in flatten(record).items() if not isinstance(v, (list, tuple))]
    return format_table(rows, ["key", "value"], title)


def iter_table_rows(records: Iterable) -> List[dict]:
    return [r.to_dict() if hasattr(r, "to_dict") else dict(vars(r)) for r in records]
