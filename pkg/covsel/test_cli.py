from pathlib import Path

import numpy as np
import pytest

from .cli import EXIT_BAD_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, dispatch
from .mmio import read_matrix_market, read_pattern, read_samples, write_matrix_market, write_pattern
from .pipeline import estimate_precision
from .reports import read_json, read_key_values
from .sparse_sym import band_pattern, build_pattern, full_pattern, project

SAMPLES = str(Path(__file__).resolve().parent.parent / "data" / "sample30.txt")


def ar1_cov(n, rho=0.5):
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def write_cycle(path, corr):
    G = build_pattern(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    D = np.eye(4)
    for (i, j), v in zip([(0, 1), (1, 2), (2, 3), (3, 0)], corr):
        D[i, j] = D[j, i] = v
    write_matrix_market(path, project(D, G))
    return str(path)


def test_estimate_on_shipped_samples(tmp_path, capsys):
    out, rep, js = tmp_path / "X.mtx", tmp_path / "est.txt", tmp_path / "est.json"
    code = dispatch(["estimate", "--samples", SAMPLES, "--lambda", "0.3",
                     "--out", str(out), "--report", str(rep), "--report-json", str(js)])
    assert code == EXIT_OK
    assert "ESTIMATE" in capsys.readouterr().out
    X = read_matrix_market(out)
    assert X.n == 30
    assert np.linalg.eigvalsh(X.to_dense())[0] > 0
    kv = read_key_values(str(rep))
    assert kv["converged"] == "true" and kv["n"] == "30"
    assert "threshold.ties" in kv and "embedding.m" in kv
    lines = rep.read_text().splitlines()
    marker = lines.index("# timings")
    keys = [line.split("=")[0] for line in lines]
    assert all("seconds" in key for key in keys[marker + 1:])
    assert not any("seconds" in key for key in keys[:marker])
    assert read_json(str(js))["converged"] is True


def test_threshold_embed_solve_chain(tmp_path):
    C_H, Gt, X = tmp_path / "C_H.mtx", tmp_path / "Gt.mtx", tmp_path / "X.mtx"
    assert dispatch(["threshold", "--samples", SAMPLES, "--lambda", "0.3", "--block", "7",
                     "--out", str(C_H)]) == EXIT_OK
    assert dispatch(["embed", "--pattern", str(C_H), "--ordering", "rcm", "--amalgamate", "4",
                     "--out", str(Gt)]) == EXIT_OK
    assert read_pattern(str(Gt)).n == 30
    rep = tmp_path / "solve.txt"
    assert dispatch(["solve", "--cov", str(C_H), "--out", str(X), "--report", str(rep),
                     "--preconditioner", "jacobi"]) == EXIT_OK
    kv = read_key_values(str(rep))
    assert kv["converged"] == "true"
    cov = read_matrix_market(C_H)
    est = read_matrix_market(X)
    assert est.pattern == cov.pattern
    mask = cov.pattern.to_mask()
    assert np.abs(np.linalg.inv(est.to_dense())[mask] - cov.to_dense()[mask]).max() < 1e-6


def test_threshold_block_size_does_not_change_output(tmp_path):
    cov = tmp_path / "C.mtx"
    write_matrix_market(cov, project(read_samples(SAMPLES).covariance(), full_pattern(30)))
    for source in (["--cov", str(cov)], ["--samples", SAMPLES]):
        a, b = tmp_path / "a.mtx", tmp_path / "b.mtx"
        assert dispatch(["threshold", *source, "--lambda", "0.25", "--block", "4", "--out", str(a)]) == 0
        assert dispatch(["threshold", *source, "--lambda", "0.25", "--block", "30",
                         "--threads", "2", "--out", str(b)]) == 0
        assert a.read_text() == b.read_text()


def test_check_reports_exactness_and_kkt(tmp_path):
    C = ar1_cov(10)
    cov = tmp_path / "C.mtx"
    write_matrix_market(cov, project(C, full_pattern(10)))
    est = tmp_path / "X.mtx"
    write_matrix_market(est, estimate_precision(C, 0.3).X)
    rep = tmp_path / "check.txt"
    code = dispatch(["check", "--cov", str(cov), "--lambda", "0.3", "--estimate", str(est), "--report", str(rep)])
    assert code == EXIT_OK
    kv = read_key_values(str(rep))
    assert kv["all_ok"] == "true"
    assert kv["kkt_ok"] == "true"


def test_solve_iteration_cap_exits_one(tmp_path, capsys):
    cov = write_cycle(tmp_path / "C.mtx", [0.3, 0.3, 0.3, 0.3])
    rep = tmp_path / "solve.txt"
    code = dispatch(["solve", "--cov", cov, "--ordering", "natural", "--max-newton", "1",
                     "--newton-tol", "1e-14", "--report", str(rep)])
    assert code == EXIT_NOT_CONVERGED
    assert read_key_values(str(rep))["converged"] == "false"
    assert "no convergence" in capsys.readouterr().err


def test_solve_with_config_file(tmp_path):
    cov = write_cycle(tmp_path / "C.mtx", [0.3, 0.3, 0.3, 0.3])
    cfg = tmp_path / "solver.json"
    cfg.write_text('{"max_newton": 1, "newton_tol": 1e-14}')
    assert dispatch(["solve", "--cov", cov, "--config", str(cfg), "--ordering", "natural"]) == EXIT_NOT_CONVERGED
    # command-line flags override the file
    assert dispatch(["solve", "--cov", cov, "--config", str(cfg), "--ordering", "natural",
                     "--max-newton", "50", "--newton-tol", "1e-10"]) == EXIT_OK


def test_infeasible_start_is_bad_input(tmp_path, capsys):
    cov = write_cycle(tmp_path / "C.mtx", [0.9, 0.9, 0.9, -0.9])
    assert dispatch(["solve", "--cov", cov, "--ordering", "natural"]) == EXIT_BAD_INPUT
    assert "not PD-completable" in capsys.readouterr().err


def test_malformed_matrix_market(tmp_path, capsys):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n")
    assert dispatch(["solve", "--cov", str(bad)]) == EXIT_BAD_INPUT
    assert f"{bad}:1:" in capsys.readouterr().err


def test_missing_inputs(tmp_path):
    assert dispatch(["estimate", "--samples", SAMPLES]) == EXIT_BAD_INPUT
    assert dispatch(["estimate", "--samples", str(tmp_path / "nope.txt"), "--lambda", "0.3"]) == EXIT_BAD_INPUT
    assert dispatch(["estimate", "--samples", SAMPLES, "--lambda", "0.3", "--threads", "0"]) == EXIT_BAD_INPUT


def test_usage_errors_exit_two():
    assert dispatch([]) == 2
    assert dispatch(["frobnicate"]) == 2
    assert dispatch(["solve"]) == 2
    assert dispatch(["threshold", "--samples", "a", "--cov", "b", "--out", "c"]) == 2


def test_help_exits_zero(capsys):
    assert dispatch(["--help"]) == 0
    assert "threshold" in capsys.readouterr().out


def test_bench_banded(tmp_path, capsys):
    out, js = tmp_path / "bench.txt", tmp_path / "bench.json"
    code = dispatch(["bench", "banded", "--sizes", "40,80", "--bandwidth", "5", "--seed", "3",
                     "--amalgamate", "4", "--out", str(out), "--report-json", str(js)])
    assert code == EXIT_OK
    assert "BANDED SCALING" in capsys.readouterr().out
    kv = read_key_values(str(out))
    assert kv["bandwidth"] == "5" and kv["seed"] == "3"
    assert kv["n40.error"] == ""
    data = read_json(str(js))
    assert [r["n"] for r in data["rows"]] == [40, 80]


def test_bench_banded_bad_sizes():
    assert dispatch(["bench", "banded", "--sizes", "40,x"]) == EXIT_BAD_INPUT
    assert dispatch(["bench", "banded", "--sizes", "80,40", "--bandwidth", "5"]) == EXIT_BAD_INPUT


def test_bench_graph(tmp_path):
    pattern = tmp_path / "G.mtx"
    write_pattern(pattern, band_pattern(12, 2))
    js = tmp_path / "graph.json"
    code = dispatch(["bench", "graph", "--pattern", str(pattern), "--samples", "3000", "--lambda", "0.1",
                     "--report-json", str(js)])
    rows = read_json(str(js))["rows"]
    assert [r["variant"] for r in rows] == ["gl", "rgl"]
    assert code == (EXIT_OK if not any(r["error"] for r in rows) else EXIT_NOT_CONVERGED)


@pytest.mark.parametrize("command", ["threshold", "embed", "solve", "estimate", "check", "bench"])
def test_parser_knows_every_command(command):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert command in sub.choices
