import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from .bench import (
    ScalingReport,
    fit_slope,
    gen_banded,
    gen_graph_case,
    gen_precision,
    graph_case_run,
    sample_gaussian,
    scaling_run,
    stream,
)
from .errors import ConfigError
from .newton_cg import SolverConfig
from .sparse_sym import band_pattern, build_pattern, is_subpattern


def test_streams_are_keyed_by_seed_column_and_tag():
    a = stream(7, 3, "values").random(5)
    assert_array_equal(a, stream(7, 3, "values").random(5))
    assert not np.array_equal(a, stream(7, 3, "corruption").random(5))
    assert not np.array_equal(a, stream(7, 4, "values").random(5))
    assert not np.array_equal(a, stream(8, 3, "values").random(5))


def test_banded_columns_do_not_depend_on_n():
    small = np.tril(gen_banded(30, 5, 7, diagonal=5.0).to_dense())
    large = np.tril(gen_banded(40, 5, 7, diagonal=5.0).to_dense())
    assert_array_equal(small[:, :27], large[:30, :27])


def test_banded_structure():
    C = gen_banded(300, 11, 3, diagonal="dominant")
    D = C.to_dense()
    rows, cols = C.pattern.edges()
    assert np.all(rows - cols <= 5)
    off = D[rows, cols]
    assert np.all(off[off != 0.0] < 0.0) and np.all(off >= -2.0)
    kept = C.pattern.num_edges / sum(min(5, 299 - j) for j in range(299))
    assert 0.6 < kept < 0.8
    # "dominant" diagonal is 1 + absolute row sum
    assert_allclose(np.diag(D), 1.0 + np.abs(D - np.diag(np.diag(D))).sum(axis=1))
    assert np.linalg.eigvalsh(D)[0] > 0


def test_banded_corruption_rate():
    n = 5000
    C = gen_banded(n, 11, 7)
    band = sum(min(5, n - 1 - j) for j in range(n - 1))
    dropped = 1.0 - C.pattern.num_edges / band
    assert dropped == pytest.approx(0.3, abs=0.02)


@pytest.mark.parametrize("bandwidth", [0, 4, 30, 31])
def test_banded_rejects_bad_bandwidth(bandwidth):
    with pytest.raises(ConfigError):
        gen_banded(30, bandwidth, 1)


def test_banded_rejects_unknown_diagonal():
    with pytest.raises(ConfigError):
        gen_banded(30, 5, 1, diagonal="huge")


def test_generated_precision():
    G = build_pattern(25, [(i, (i + 1) % 25) for i in range(25)] + [(0, 12), (5, 20)])
    K = gen_precision(G, 4)
    assert is_subpattern(K.pattern, G)
    assert 0 < K.pattern.num_edges <= G.num_edges
    assert np.linalg.eigvalsh(K.to_dense())[0] > 0
    assert_array_equal(gen_precision(G, 4).values, K.values)


@pytest.mark.parametrize("dense_limit", [400, 10])
def test_gaussian_samples_follow_precision(dense_limit):
    K = gen_precision(band_pattern(12, 2), 5)
    x = sample_gaussian(K, 40000, 2, dense_limit=dense_limit)
    assert x.shape == (12, 40000)
    emp = x @ x.T / x.shape[1]
    target = np.linalg.inv(K.to_dense())
    assert np.abs(emp - target).max() < 0.05 * np.abs(target).max()


def test_graph_case_shapes():
    case = gen_graph_case(band_pattern(10, 1), 50, 3)
    assert (case.samples.n, case.samples.N) == (10, 50)
    assert case.precision.n == 10


def test_fit_slope():
    assert fit_slope([10, 20, 40], [1.0, 4.0, 16.0]) == pytest.approx(2.0)
    assert fit_slope([10], [1.0]) is None


def test_small_scaling_run():
    report = scaling_run([40, 80, 160], 5, 7, cfg=SolverConfig(newton_tol=1e-10), amalgamate=4)
    assert report.sizes == [40, 80, 160]
    assert all(row.ok for row in report.rows)
    for row in report.rows:
        assert row.newton_steps >= 0
        assert row.gap < 1e-5 and row.feas < 1e-5
    assert report.slope is not None
    back = ScalingReport.from_dict(report.to_dict())
    assert back.sizes == report.sizes and back.slope == report.slope


def test_scaling_run_records_failures():
    report = scaling_run([5, 40], 5, 7)
    assert not report.rows[0].ok
    assert "ConfigError" in report.rows[0].error
    assert report.rows[1].ok
    assert report.slope is None


def test_scaling_run_needs_increasing_sizes():
    with pytest.raises(ConfigError):
        scaling_run([40, 40], 5, 7)


def test_graph_case_run_compares_with_reference():
    rows = graph_case_run(band_pattern(15, 2), 3000, 7, 0.1)
    assert [r.variant for r in rows] == ["gl", "rgl"]
    for row in rows:
        if row.error:
            continue
        assert row.objective is not None and row.reference_objective is not None
        assert row.objective >= row.reference_objective - 1e-6 * abs(row.reference_objective)
        assert row.relative_difference >= 0.0
