# tests/evalbench/test_landmarks.py
from unittest.mock import patch

import pytest
from stainreg.errors import ArgumentError, UnreadableInputError, ValidationError
from stainreg.evalbench.landmarks import (
    LandmarkRecord,
    PairDims,
    SubmissionRecord,
    dba,
    filter_landmarks,
    read_dims,
    read_submission,
    read_truth,
    resolve_submission,
    tre,
    write_submission,
    write_truth,
)

from tests.factories import landmark, landmark_pair

DIMS = {"a": PairDims(1000, 800), "b": PairDims(1000, 800)}


# --- Distances ---


def test_dba_of_agreeing_annotators_is_zero():
    assert dba(landmark("a", "p", spread=0.0)) == 0.0


def test_dba_three_four_five():
    record = LandmarkRecord("a", "p", 0.0, 0.0, 0.0, 0.0, 3.0, 4.0, 1.0)

    assert dba(record) == 5.0


def test_dba_scales_with_resolution():
    assert dba(landmark("a", "p", spread=10.0, mpp=0.92)) == pytest.approx(9.2)


def test_tre_is_mean_distance_to_both_annotators():
    record = LandmarkRecord("a", "p", 0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 1.0)

    assert tre((0.0, 5.0), record) == 5.0
    assert tre((0.0, 0.0), record) == 5.0
    assert tre((0.0, 0.0), LandmarkRecord("a", "p", 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)) == 0.0


def test_tre_never_beats_half_the_annotator_distance(rng):
    record = LandmarkRecord("a", "p", 0.0, 0.0, 10.0, 20.0, 31.0, -4.0, 0.5)
    points = rng.uniform(-50, 80, size=(200, 2))

    for point in points:
        assert tre(tuple(point), record) >= dba(record) / 2 - 1e-12
    for t in (0.0, 0.3, 1.0):
        on_segment = (10.0 + t * 21.0, 20.0 - t * 24.0)
        assert tre(on_segment, record) == pytest.approx(dba(record) / 2)


def test_record_rejects_bad_values():
    with pytest.raises(ArgumentError):
        LandmarkRecord("a", "p", float("nan"), 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ArgumentError):
        LandmarkRecord("a", "p", 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


# --- Exclusion Rules ---


def test_filter_keeps_threshold_distance():
    records = landmark_pair("a", spread=4.0)
    records[0] = landmark("a", "p0", spread=115.0)

    kept, excluded = filter_landmarks(records)

    assert len(kept) == 10
    assert excluded == []


def test_filter_drops_pair_below_minimum_count():
    records = landmark_pair("a") + landmark_pair("b")
    records[3] = landmark("a", "p3", spread=116.0)

    with patch("stainreg.evalbench.landmarks._log") as mock_log:
        kept, excluded = filter_landmarks(records)

    assert excluded == ["a"]
    assert {r.pair_id for r in kept} == {"b"}
    mock_log.warning.assert_called_once()


def test_filter_is_idempotent_and_order_independent(rng):
    records = landmark_pair("a", spread=120.0)[:3] + landmark_pair("a")[3:] + landmark_pair("b", count=12)
    shuffled = [records[i] for i in rng.permutation(len(records))]

    kept, excluded = filter_landmarks(records)
    again, excluded_again = filter_landmarks(kept)
    reordered, excluded_reordered = filter_landmarks(shuffled)

    assert again == kept
    assert excluded_again == []
    assert set(reordered) == set(kept)
    assert excluded_reordered == excluded == ["a"]


def test_filter_rejects_nonpositive_thresholds():
    with pytest.raises(ArgumentError):
        filter_landmarks([], dba_threshold_um=0.0)


# --- Missing Landmarks ---


def test_resolve_uses_submitted_points():
    truth = [landmark("a", "p1", src=(10.0, 20.0))]

    resolved = resolve_submission(truth, [SubmissionRecord("a", "p1", 1.5, 2.5)], DIMS)

    assert resolved == {("a", "p1"): (1.5, 2.5)}


def test_resolve_clamps_missing_source_points():
    truth = [landmark("a", "p1", src=(-5.0, 1e9)), landmark("a", "p2", src=(10.0, 20.0))]

    resolved = resolve_submission(truth, [SubmissionRecord("a", "p2")], DIMS)

    assert resolved[("a", "p1")] == (0.0, 799.0)
    assert resolved[("a", "p2")] == (10.0, 20.0)


def test_resolve_ignores_unknown_rows():
    truth = [landmark("a", "p1")]

    with patch("stainreg.evalbench.landmarks._log") as mock_log:
        resolved = resolve_submission(truth, [SubmissionRecord("z", "p9", 1.0, 1.0)], DIMS)

    assert list(resolved) == [("a", "p1")]
    mock_log.warning.assert_called_once()


def test_resolve_rejects_duplicates():
    rows = [SubmissionRecord("a", "p1", 1.0, 1.0), SubmissionRecord("a", "p1", 2.0, 2.0)]

    with pytest.raises(ValidationError):
        resolve_submission([landmark("a", "p1")], rows, DIMS)


def test_resolve_needs_dimensions_for_every_pair():
    with pytest.raises(ValidationError):
        resolve_submission([landmark("c", "p1")], [], DIMS)


# --- CSV I/O ---


def test_truth_file_round_trips(tmp_path):
    records = landmark_pair("a", count=3, mpp=0.92)

    write_truth(records, tmp_path / "truth.csv")

    assert read_truth(tmp_path / "truth.csv") == records


def test_empty_submission_cells_are_missing(tmp_path):
    path = tmp_path / "submission.csv"
    write_submission([SubmissionRecord("a", "p1"), SubmissionRecord("a", "p2", 0.1, 3.0)], path)

    rows = read_submission(path)

    assert rows[0].missing
    assert (rows[1].reg_x, rows[1].reg_y) == (0.1, 3.0)


def test_wrong_header_is_reported_on_row_one(tmp_path):
    path = tmp_path / "truth.csv"
    path.write_text("pair,point\na,p1\n")

    with pytest.raises(ValidationError) as info:
        read_truth(path)

    assert info.value.row == 1


def test_bad_number_reports_its_row(tmp_path):
    path = tmp_path / "submission.csv"
    path.write_text("pair_id,point_id,reg_x,reg_y\na,p1,1,2\n\na,p2,abc,2\n")

    with pytest.raises(ValidationError) as info:
        read_submission(path)

    assert info.value.row == 4


def test_half_empty_submission_row_is_rejected(tmp_path):
    path = tmp_path / "submission.csv"
    path.write_text("pair_id,point_id,reg_x,reg_y\na,p1,1,\n")

    with pytest.raises(ValidationError):
        read_submission(path)


def test_duplicate_truth_rows_are_rejected(tmp_path):
    path = tmp_path / "truth.csv"
    row = "a,p1,1,1,1,1,1,1,0.5\n"
    path.write_text("pair_id,point_id,src_x,src_y,tgt1_x,tgt1_y,tgt2_x,tgt2_y,mpp\n" + row + row)

    with pytest.raises(ValidationError) as info:
        read_truth(path)

    assert info.value.row == 3


def test_dims_must_be_positive_integers(tmp_path):
    path = tmp_path / "dims.csv"
    path.write_text("pair_id,width,height\na,100,0\n")

    with pytest.raises(ValidationError):
        read_dims(path)


def test_missing_file_is_unreadable(tmp_path):
    with pytest.raises(UnreadableInputError):
        read_truth(tmp_path / "absent.csv")


def test_dims_are_parsed(tmp_path):
    path = tmp_path / "dims.csv"
    path.write_text("pair_id,width,height\nb,640,480\na,1000,800\n")

    assert read_dims(path) == {"b": PairDims(640, 480), "a": PairDims(1000, 800)}
