# tests/synthgen/test_landmarks.py
from dataclasses import replace

import numpy as np
import pytest
from stainreg.errors import GenerationError
from stainreg.evalbench.landmarks import dba, tre
from stainreg.raster.image import Mask
from stainreg.synthgen.landmarks import gen_landmarks
from stainreg.synthgen.settings import SynthSpec
from stainreg.synthgen.warps import gen_warp
from stainreg.transform.geometry import CompositeTransform

from tests.factories import rectangles_mask

BOX = Mask(rectangles_mask((128, 128), [(20, 30, 100, 90)]))


def test_noise_free_annotators_agree_on_the_true_point(small_spec):
    truth = gen_landmarks(BOX, CompositeTransform(), replace(small_spec, annot_sigma_um=0.0))

    for record, point in zip(truth.records, truth.true_points, strict=True):
        assert dba(record) == 0.0
        assert (record.tgt1_x, record.tgt1_y) == tuple(point)
    assert truth.median_dba_um == 0.0


def test_identity_warp_keeps_sources_on_true_points(small_spec):
    truth = gen_landmarks(BOX, CompositeTransform(), small_spec)

    np.testing.assert_array_equal([r.src for r in truth.records], truth.true_points)


def test_sources_are_true_points_through_the_warp():
    spec = SynthSpec(seed=8, width=128, height=128, warp_kind="deformable", n_landmarks=30)
    transform = gen_warp(spec)

    truth = gen_landmarks(BOX, transform, spec)

    np.testing.assert_array_equal([r.src for r in truth.records], transform.apply(truth.true_points))


def test_true_points_are_distinct_foreground_pixels(small_spec):
    truth = gen_landmarks(BOX, CompositeTransform(), replace(small_spec, n_landmarks=200))
    pixels = np.floor(truth.true_points + 0.5).astype(int)

    assert len({tuple(p) for p in pixels}) == 200
    assert BOX.bits[pixels[:, 1], pixels[:, 0]].all()


def test_records_are_named_by_case_and_index(small_spec):
    truth = gen_landmarks(BOX, CompositeTransform(), small_spec)

    assert truth.count == small_spec.n_landmarks
    assert truth.records[0].key == ("case_3", "lm000")
    assert truth.records[-1].point_id == f"lm{small_spec.n_landmarks - 1:03d}"
    assert all(r.mpp == small_spec.mpp for r in truth.records)


def test_default_noise_puts_median_dba_near_twenty_microns():
    medians = []
    for seed in range(100):
        spec = SynthSpec(seed=seed, width=128, height=128)
        medians.append(gen_landmarks(BOX, CompositeTransform(), spec).median_dba_um)

    assert 15.0 <= np.median(medians) <= 25.0
    assert min(medians) > 10.0


def test_true_point_error_is_bounded_by_annotator_geometry(small_spec):
    truth = gen_landmarks(BOX, CompositeTransform(), small_spec)

    for record, point in zip(truth.records, truth.true_points, strict=True):
        r1 = np.hypot(record.tgt1_x - point[0], record.tgt1_y - point[1]) * record.mpp
        r2 = np.hypot(record.tgt2_x - point[0], record.tgt2_y - point[1]) * record.mpp
        error = tre(tuple(point), record)
        assert error == pytest.approx((r1 + r2) / 2)
        assert dba(record) / 2 - 1e-9 <= error <= max(r1, r2) + 1e-9


def test_generation_is_deterministic(small_spec):
    first = gen_landmarks(BOX, CompositeTransform(), small_spec)
    second = gen_landmarks(BOX, CompositeTransform(), small_spec)

    assert first.records == second.records


def test_too_small_mask_is_a_generation_error(small_spec):
    tiny = Mask(rectangles_mask((128, 128), [(0, 0, 4, 4)]))

    with pytest.raises(GenerationError):
        gen_landmarks(tiny, CompositeTransform(), small_spec)
