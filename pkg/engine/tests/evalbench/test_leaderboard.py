# tests/evalbench/test_leaderboard.py
import pytest
from stainreg.errors import ArgumentError
from stainreg.evalbench.landmarks import PairDims, SubmissionRecord
from stainreg.evalbench.leaderboard import (
    load_metrics_dir,
    rank_submissions,
    ranking_stability,
    save_leaderboard,
)
from stainreg.evalbench.scoring import METRICS, EvalConfig, MetricValue, write_metrics

from tests.factories import landmark, landmark_pair


def metrics_with(median90: float | None, ci: bool = False) -> dict[str, MetricValue]:
    value = MetricValue(median90, median90 - 1, median90 + 1) if ci and median90 is not None else MetricValue(median90)
    return {name: value if name == "median90_um" else MetricValue(5.0) for name in METRICS}


# --- Ranking ---


def test_rank_orders_by_median90():
    entries = rank_submissions(
        {"third": metrics_with(137.63), "first": metrics_with(60.1), "second": metrics_with(123.32)}
    )

    assert [(e.name, e.rank) for e in entries] == [("first", 1), ("second", 2), ("third", 3)]


def test_single_submission_ranks_first():
    assert rank_submissions({"only": metrics_with(80.0)})[0].rank == 1


def test_ties_share_rank_and_skip_next():
    entries = rank_submissions({"b": metrics_with(50.0), "a": metrics_with(50.0), "c": metrics_with(70.0)})

    assert [(e.name, e.rank) for e in entries] == [("a", 1), ("b", 1), ("c", 3)]


def test_unscored_submission_goes_last():
    entries = rank_submissions({"none": metrics_with(None), "some": metrics_with(300.0)})

    assert [e.name for e in entries] == ["some", "none"]


def test_rank_needs_submissions():
    with pytest.raises(ArgumentError):
        rank_submissions({})


# --- Threshold Sweep ---


def test_ranking_stability_across_thresholds():
    truth = landmark_pair("a", spread=4.0) + [landmark("b", f"p{k}", (100.0 + 5 * k, 80.0), 60.0) for k in range(10)]
    dims = {"a": PairDims(500, 500), "b": PairDims(500, 500)}
    near_b = [SubmissionRecord(r.pair_id, r.point_id, r.tgt1_x, r.tgt1_y) for r in truth if r.pair_id == "b"]
    near_a = [SubmissionRecord(r.pair_id, r.point_id, r.tgt1_x, r.tgt1_y) for r in truth if r.pair_id == "a"]
    cfg = EvalConfig(n_boot=10)

    ranks = ranking_stability(truth, {"fits_a": near_a, "fits_b": near_b}, dims, [10.0, 115.0], cfg)

    assert ranks[10.0] == {"fits_a": 1, "fits_b": 2}
    assert set(ranks[115.0]) == {"fits_a", "fits_b"}


def test_ranking_stability_skips_empty_thresholds():
    truth = landmark_pair("a", spread=40.0)
    dims = {"a": PairDims(500, 500)}

    ranks = ranking_stability(truth, {"s": []}, dims, [1.0, 115.0], EvalConfig(n_boot=10))

    assert list(ranks) == [115.0]


# --- Output ---


def test_save_leaderboard_writes_text_and_csv(tmp_path):
    entries = rank_submissions({"first": metrics_with(60.5, ci=True), "second": metrics_with(123.32)})

    text_path, csv_path = save_leaderboard(entries, tmp_path / "board")

    text = text_path.read_text().splitlines()
    assert text[0].startswith("Rank")
    assert "60.50 [59.50, 61.50]" in text[2]
    assert text[3].split()[:2] == ["2", "second"]
    rows = csv_path.read_text().splitlines()
    assert rows[0].startswith("rank,submission,median90_um,median90_um_lo,median90_um_hi")
    assert rows[1].startswith("1,first,60.5,59.5,61.5")
    assert rows[2].startswith("2,second,123.32,,")


def test_load_metrics_dir_keys_by_stem(tmp_path):
    write_metrics(metrics_with(60.1), tmp_path / "team_a.csv")
    write_metrics(metrics_with(70.0), tmp_path / "team_b.csv")

    loaded = load_metrics_dir(tmp_path)

    assert sorted(loaded) == ["team_a", "team_b"]
    assert loaded["team_a"]["median90_um"].value == 60.1


def test_load_metrics_dir_needs_files(tmp_path):
    with pytest.raises(ArgumentError):
        load_metrics_dir(tmp_path)
