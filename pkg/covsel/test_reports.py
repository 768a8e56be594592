import json

import numpy as np

from .newton_cg import HypothesisMonitor, SolverReport
from .reports import (
    flatten,
    format_record,
    format_table,
    format_value,
    iter_table_rows,
    key_value_lines,
    read_json,
    read_key_values,
    solver_summary,
    write_json,
    write_key_values,
)


def test_format_value():
    assert format_value(None) == "none"
    assert format_value(True) == "true" and format_value(False) == "false"
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1e-9)) == "1e-09"
    assert format_value([1, 2.5]) == "1,2.5"
    assert format_value(np.array([3, 4])) == "3,4"
    assert format_value("mindeg") == "mindeg"


def test_flatten_uses_dotted_keys():
    flat = flatten({"a": 1, "b": {"c": 2, "d": {"e": 3}}})
    assert flat == {"a": 1, "b.c": 2, "b.d.e": 3}


def test_timings_go_last():
    record = {
        "n": 3,
        "seconds_solve": 1.5,
        "solver": {"seconds": {"setup": 0.25}, "gap": 1e-9},
        "converged": True,
    }
    assert key_value_lines(record) == [
        "n=3",
        "solver.gap=1e-09",
        "converged=true",
        "# timings",
        "seconds_solve=1.5",
        "solver.seconds.setup=0.25",
    ]
    assert "# timings" not in key_value_lines({"n": 3})


def test_key_value_file_reads_back(tmp_path):
    path = tmp_path / "r.txt"
    write_key_values(str(path), {"n": 5, "gap": 0.5, "seconds_embed": 0.1})
    assert read_key_values(str(path)) == {"n": "5", "gap": "0.5", "seconds_embed": "0.1"}
    assert path.read_text().endswith("\n")


def test_json_handles_numpy_and_non_finite(tmp_path):
    path = tmp_path / "nested" / "r.json"
    write_json(str(path), {"a": np.int64(3), "b": np.array([1.0, 2.0]), "c": float("inf"), "d": (1, 2)})
    data = read_json(str(path))
    assert data == {"a": 3, "b": [1.0, 2.0], "c": "inf", "d": [1, 2]}
    json.loads(path.read_text())


def test_solver_summary():
    report = SolverReport(n=4, m=1, newton_steps=2, cg_iters=[1, 2], decrements=[0.1, 1e-9],
                          step_sizes=[1.0, 1.0], converged=True, gap=1e-12, feas=1e-13,
                          seconds={"setup": 0.5, "solve": 1.0})
    summary = solver_summary(report, seconds_embed=0.25)
    assert summary["cg_total"] == 3
    assert summary["seconds_solve"] == 1.5 and summary["seconds_embed"] == 0.25
    assert "phi_max" not in summary
    report.monitor = HypothesisMonitor(phi_max=0.3, bound=12.0, conditions=[2.0, 1.5])
    summary = solver_summary(report)
    assert summary["phi_max"] == 0.3 and summary["condition_bound"] == 12.0
    assert summary["condition_estimates"] == [2.0, 1.5]
    assert "seconds_embed" not in summary


def test_format_table():
    text = format_table([{"n": 10, "gap": None, "ok": True}, {"n": 200, "gap": 1.5e-9, "ok": False}],
                        ["n", "gap", "ok"], "TITLE")
    lines = text.splitlines()
    assert lines[0] == lines[2] == lines[-1]
    assert set(lines[0]) == {"="}
    assert lines[1] == "TITLE"
    assert "-" in lines[5] and "yes" in lines[5]
    assert "1.50e-09" in lines[6] and "no" in lines[6]


def test_format_record_skips_lists():
    text = format_record({"n": 3, "cg_iters": [1, 2], "embedding": {"m": 1}})
    assert "embedding.m" in text
    assert "cg_iters" not in text


def test_iter_table_rows():
    class Plain:
        def __init__(self):
            self.n = 1

    rows = iter_table_rows([SolverReport(n=2), Plain()])
    assert rows[0]["n"] == 2 and rows[0]["cg_total"] == 0
    assert rows[1] == {"n": 1}
