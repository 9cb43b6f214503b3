import io
from math import comb

import numpy as np
import pytest

from netsel.estimator import default_bounds
from netsel.exceptions import EnumerationCapError, UndefinedMetricError, ValidationError
from netsel.harness import (
    BenchmarkInstance,
    HistogramData,
    error_metric,
    evaluate_selection,
    exhaustive_search,
    random_baseline,
    timing_benchmark,
    write_campaign_csv,
    write_gnuplot_script,
    write_histogram_csv,
    write_timing_csv,
)
from netsel.integrate import DiscretizationConfig
from netsel.netmodels import duffing_model, random_duffing_spec
from netsel.selector import SelectionProblem, run_pipeline


def instance_for(N, seed=0, L=20):
    model = duffing_model(random_duffing_spec(N, seed=seed, connected=True))
    lo, hi = default_bounds(model)
    problem = SelectionProblem(model, DiscretizationConfig("TI", 1e-3), L, lo, hi)
    x0 = np.random.default_rng(seed + 100).uniform(0, 1, model.dim)
    return BenchmarkInstance.simulated(problem, x0, seed=seed)


@pytest.fixture(scope="module")
def small():
    return instance_for(3)


def test_error_metric_examples():
    assert error_metric([3.0, 4.0], [3.0, 4.0]) == 0.0
    assert error_metric([3.0, 4.0], [0.0, 0.0]) == 1.0
    assert error_metric([3.0, 4.0], [6.0, 8.0]) == 1.0
    with pytest.raises(UndefinedMetricError):
        error_metric([0.0, 0.0], [1.0, 0.0])


def test_exhaustive_examples(small):
    full = exhaustive_search(small, 3)
    assert len(full.results) == 1 and full.best_e <= 1e-4
    pairs = exhaustive_search(small, 2)
    assert len(pairs.results) == 3
    assert pairs.best_e == min(pairs.errors)


def test_exhaustive_counts_and_cap():
    inst = instance_for(10, L=5)
    with pytest.raises(EnumerationCapError):
        exhaustive_search(inst, 2, cap=10)
    thetas = exhaustive_search(inst, 1).results
    assert len(thetas) == comb(10, 1)


def test_random_baseline(small):
    full = random_baseline(small, 3, 1, seed=0)
    assert full.errors[0] <= 1e-4
    a = random_baseline(small, 2, 6, seed=9)
    b = random_baseline(small, 2, 6, seed=9)
    assert [r.indices for r in a.results] == [r.indices for r in b.results]
    np.testing.assert_array_equal(a.errors, b.errors)
    assert all(r.theta.sum() == 2 for r in a.results)
    with pytest.raises(ValidationError):
        random_baseline(small, 2, 0)


def test_parallel_matches_serial(small):
    serial = random_baseline(small, 2, 4, seed=1, workers=1)
    parallel = random_baseline(small, 2, 4, seed=1, workers=2)
    np.testing.assert_array_equal(serial.errors, parallel.errors)


def test_pipeline_error_matches_harness_scoring(small):
    # the pipeline's last phase and the harness score the same selection identically
    report = small.run("A3", 2, seed=0)
    scored = evaluate_selection(small, report.theta_hat.theta)
    assert scored.error == report.error_e


def test_instance_shares_pipeline_start(small):
    report = run_pipeline(small.problem, small.scenario("A3", 2), small.pipeline_config(seed=0))
    np.testing.assert_array_equal(report.x0_init, small.x0_init)


def test_failing_trial_is_recorded(small):
    bad = BenchmarkInstance(small.problem, small.x0_true, small.z_seq, np.full(6, np.nan))
    res = evaluate_selection(bad, np.array([1.0, 0, 0]))
    assert res.status.startswith("failed") and np.isnan(res.error)


def test_histogram_counts_and_markers():
    errors = np.random.default_rng(0).uniform(0, 1, 1000)
    hist = HistogramData.from_errors(errors, {"A1": 0.2, "A2": 1.5})
    assert hist.total == 1000 and len(hist.counts) <= 30
    assert hist.outliers == {"A1": False, "A2": True}
    buf = io.StringIO()
    write_histogram_csv(hist, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "bin_left,bin_right,count"
    assert sum(1 for l in lines if l.startswith("# marker")) == 2
    assert sum(int(l.split(",")[2]) for l in lines[1:] if not l.startswith("#")) == 1000


def test_histogram_of_nan_errors_is_empty():
    assert HistogramData.from_errors([np.nan, np.inf]).total == 0


def test_campaign_csv(small):
    camp = random_baseline(small, 1, 3, seed=0)
    buf = io.StringIO()
    write_campaign_csv(camp.results, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "trial,theta,e,status" and len(lines) == 4


def test_timing_rows_and_csv(small):
    rows = timing_benchmark({3: small}, algorithms=("A2", "A3"), m_max=1, repeats=1)
    assert [r["algorithm"] for r in rows] == ["A2", "A3"]
    assert all(r["total"] > 0 for r in rows)
    buf = io.StringIO()
    write_timing_csv(rows, buf)
    assert buf.getvalue().startswith("label,algorithm,repeats,")


def test_gnuplot_script_mentions_every_marker():
    hist = HistogramData.from_errors([0.1, 0.2, 0.3], {"A3": 0.15})
    buf = io.StringIO()
    write_gnuplot_script({"M=2": ("out/random_m2_hist.csv", hist)}, buf)
    text = buf.getvalue()
    assert "random_m2_hist.csv" in text and "# A3" in text
