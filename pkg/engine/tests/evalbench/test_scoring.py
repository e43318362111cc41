# tests/evalbench/test_scoring.py
import math
from dataclasses import replace

import numpy as np
import pytest
from stainreg.errors import ArgumentError, EmptyEvaluationError, ValidationError
from stainreg.evalbench.landmarks import PairDims, SubmissionRecord, dba, tre
from stainreg.evalbench.scoring import (
    METRICS,
    EvalConfig,
    MetricValue,
    PairScore,
    Statistic,
    aggregate,
    bootstrap_ci,
    evaluate_submission,
    pair_score,
    percentile,
    read_metrics,
    score_annotators,
    write_metrics,
)

from tests.factories import landmark_pair

DIMS = {name: PairDims(1000, 800) for name in ("a", "b", "c")}
FAST = EvalConfig(n_boot=200)


def score(pair_id: str, p90: float, before: float = 100.0, after: float = 10.0) -> PairScore:
    return PairScore(pair_id, 10, p90, before, after, 100.0 * (1 - after / before), (after,) * 10, (before,) * 10)


def midpoints(records) -> list[SubmissionRecord]:
    return [
        SubmissionRecord(r.pair_id, r.point_id, (r.tgt1_x + r.tgt2_x) / 2, (r.tgt1_y + r.tgt2_y) / 2) for r in records
    ]


# --- Percentile ---


def test_percentile_interpolates_between_order_statistics():
    assert percentile(range(1, 11), 90) == pytest.approx(9.1)
    assert percentile([4.2], 37) == 4.2
    assert percentile([3.0, 9.0, 1.0], 100) == 9.0


def test_percentile_is_monotone_and_bounded(rng):
    values = rng.exponential(50.0, size=37)
    results = [percentile(values, p) for p in np.linspace(0, 100, 41)]

    assert np.all(np.diff(results) >= 0)
    assert results[0] == values.min()
    assert results[-1] == values.max()


def test_percentile_rejects_bad_arguments():
    with pytest.raises(ArgumentError):
        percentile([], 50)
    with pytest.raises(ArgumentError):
        percentile([1.0], 101)


# --- Pair Scores ---


def test_pair_score_percentile_and_reduction():
    records = landmark_pair("a", spread=0.0, shift=(100.0, 0.0))
    resolved = {r.key: (r.tgt1_x + k + 1.0, r.tgt1_y) for k, r in enumerate(records)}

    result = pair_score(records, resolved, DIMS["a"])

    assert result.n_included == 10
    assert result.p90_um == pytest.approx(9.1)
    assert result.mean_before_um == pytest.approx(100.0)
    assert result.mean_after_um == pytest.approx(5.5)
    assert result.reduction_pct == pytest.approx(94.5)


def test_pair_score_equal_errors_give_that_percentile():
    records = landmark_pair("a", spread=0.0, shift=(100.0, 0.0))
    resolved = {r.key: (r.tgt1_x + 1.0, r.tgt1_y) for r in records}

    result = pair_score(records, resolved, DIMS["a"])

    assert result.p90_um == pytest.approx(1.0)
    assert result.reduction_pct == pytest.approx(99.0)


def test_pair_without_initial_error_has_no_reduction():
    records = landmark_pair("a", spread=0.0, shift=(0.0, 0.0))
    resolved = {r.key: (r.tgt1_x, r.tgt1_y) for r in records}

    assert pair_score(records, resolved, DIMS["a"]).reduction_pct is None


# --- Aggregation ---


def test_aggregate_pair_statistics():
    metrics = aggregate([score("a", 10.0), score("b", 20.0), score("c", 30.0)])

    assert metrics["median90_um"].value == 20.0
    assert metrics["mean90_um"].value == 20.0
    assert metrics["p90of90_um"].value == pytest.approx(28.0)
    assert metrics["reduction_pct"].value == pytest.approx(90.0)


def test_aggregate_of_single_pair_equals_its_score():
    single = score("a", 12.5, before=80.0, after=8.0)

    metrics = aggregate([single])

    for name in ("median90_um", "p90of90_um", "mean90_um"):
        assert metrics[name].value == 12.5
    assert metrics["median_all_um"].value == 8.0
    assert metrics["mean_all_um"].value == 8.0
    assert metrics["reduction_pct"].value == pytest.approx(single.reduction_pct)


def test_pooled_metrics_match_direct_recomputation(rng):
    truth = landmark_pair("a", count=12, spread=6.0) + landmark_pair("b", count=10, spread=2.0, shift=(5.0, 5.0))
    submission = [
        SubmissionRecord(r.pair_id, r.point_id, r.tgt1_x + rng.normal(), r.tgt1_y + rng.normal()) for r in truth
    ]

    result = evaluate_submission(truth, submission, DIMS, FAST)

    errors = [tre((s.reg_x, s.reg_y), r) for r, s in zip(truth, submission, strict=True)]
    assert result.value("mean_all_um") == pytest.approx(np.mean(errors), rel=1e-12)
    assert result.value("median_all_um") == pytest.approx(np.median(errors), rel=1e-12)


def test_landmark_reduction_pools_before_dividing():
    scores = [score("a", 1.0, before=100.0, after=50.0), score("b", 1.0, before=10.0, after=0.0)]

    slide = aggregate(scores, "slide")["reduction_pct"].value
    pooled = aggregate(scores, "landmark")["reduction_pct"].value

    assert slide == pytest.approx(75.0)
    assert pooled == pytest.approx(100.0 * (1 - 50.0 / 110.0))


def test_aggregate_needs_scores():
    with pytest.raises(EmptyEvaluationError):
        aggregate([])


# --- Bootstrap ---


def test_bootstrap_of_single_value_is_degenerate():
    lo, hi = bootstrap_ci([42.0], Statistic("median", lambda s: np.median(s, axis=-1)), n_boot=50)

    assert (lo, hi) == (42.0, 42.0)


def test_bootstrap_is_deterministic_and_contains_point(rng):
    sample = rng.exponential(30.0, size=25)

    first = bootstrap_ci(sample, lambda s: np.median(s, axis=-1), n_boot=500, seed=3)
    second = bootstrap_ci(sample, lambda s: np.median(s, axis=-1), n_boot=500, seed=3)

    assert first == second
    assert first[0] <= np.median(sample) <= first[1]


def test_bootstrap_does_not_depend_on_batching(rng, monkeypatch):
    sample = rng.normal(size=15)
    mean = Statistic("mean", lambda s: np.mean(s, axis=-1))
    expected = bootstrap_ci(sample, mean, n_boot=700, seed=1)

    monkeypatch.setattr("stainreg.evalbench.scoring.BOOTSTRAP_BLOCK", 64)

    assert bootstrap_ci(sample, mean, n_boot=700, seed=1) == expected


def test_bootstrap_median_interval_has_nominal_coverage():
    population_median = math.log(2.0)
    draws = np.random.default_rng(11).exponential(1.0, size=(400, 60))
    covered = 0
    for trial, sample in enumerate(draws):
        lo, hi = bootstrap_ci(sample, lambda s: np.median(s, axis=-1), n_boot=1000, seed=trial)
        covered += lo <= population_median <= hi

    assert covered >= 0.93 * len(draws)


# --- End-to-End ---


def test_midpoint_submission_scores_half_the_annotator_distance():
    truth = landmark_pair("a", spread=8.0, mpp=0.5) + landmark_pair("b", count=11, spread=3.0)

    result = evaluate_submission(truth, midpoints(truth), DIMS, FAST)

    assert result.value("mean_all_um") == pytest.approx(np.mean([dba(r) for r in truth]) / 2, rel=1e-12)
    assert [p.pair_id for p in result.pairs] == ["a", "b"]


def test_empty_submission_scores_unregistered_positions():
    truth = landmark_pair("a", spread=0.0, shift=(30.0, 40.0))

    result = evaluate_submission(truth, [], DIMS, FAST)

    assert result.value("median90_um") == pytest.approx(50.0)
    assert result.value("reduction_pct") == pytest.approx(0.0)


def test_every_metric_gets_an_interval():
    truth = landmark_pair("a") + landmark_pair("b", spread=10.0) + landmark_pair("c", spread=1.0)

    result = evaluate_submission(truth, midpoints(truth), DIMS, FAST)

    assert set(result.metrics) == set(METRICS)
    for name in METRICS:
        m = result.metrics[name]
        assert m.ci_lo <= m.value <= m.ci_hi


def test_all_pairs_excluded_is_an_error():
    truth = landmark_pair("a", count=9)

    with pytest.raises(EmptyEvaluationError):
        evaluate_submission(truth, [], DIMS, FAST)


def test_annotator_scores_use_annotator_distance():
    truth = landmark_pair("a", spread=8.0)

    result = score_annotators(truth, DIMS, FAST)

    assert result.value("median90_um") == pytest.approx(8.0)


def test_config_validation():
    with pytest.raises(ArgumentError):
        EvalConfig(reduction_mode="pixel")
    with pytest.raises(ArgumentError):
        replace(FAST, n_boot=0)


# --- Metrics CSV ---


def test_metrics_file_keeps_missing_values(tmp_path):
    metrics = {name: MetricValue(1.25, 1.0, 1.5) for name in METRICS}
    metrics["reduction_pct"] = MetricValue(None)

    write_metrics(metrics, tmp_path / "metrics.csv")

    assert read_metrics(tmp_path / "metrics.csv") == metrics


def test_metrics_file_needs_every_metric(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("metric,value,ci_lo,ci_hi\nmedian90_um,1,0.5,2\n")

    with pytest.raises(ValidationError):
        read_metrics(path)
