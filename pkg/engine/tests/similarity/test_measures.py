# tests/similarity/test_measures.py
import numpy as np
import pytest
from stainreg.errors import ArgumentError, GeometryMismatchError
from stainreg.raster.image import Image
from stainreg.similarity.measures import (
    ScoreMap,
    SimilarityConfig,
    conv_score_map,
    local_ncc,
    mse,
    ncc,
    ncc_score_map,
)

# --- Config ---


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"h": -1.0}, {"window": 4}, {"window": 1}])
def test_config_rejects_invalid_values(kwargs):
    with pytest.raises(ArgumentError):
        SimilarityConfig(**kwargs)


def test_config_weight_is_half_h_squared():
    assert SimilarityConfig(h=3.0).weight == 4.5


# --- NCC ---


def test_ncc_self_is_one(textured):
    image = Image(textured)

    result = ncc(image, image)

    assert result.value == pytest.approx(1.0, abs=1e-12)
    assert not result.degenerate


def test_ncc_affine_intensity_invariance(textured):
    a = Image(0.3 * textured)

    assert ncc(a, Image(2.0 * a.data + 0.1)).value == pytest.approx(1.0, abs=1e-12)
    assert ncc(a, Image(1.0 - a.data)).value == pytest.approx(-1.0, abs=1e-12)


def test_ncc_constant_input_is_degenerate(textured):
    result = ncc(Image(textured), Image(np.full(textured.shape, 0.5)))

    assert result == (0.0, True)


def test_ncc_geometry_mismatch(gray_image):
    with pytest.raises(GeometryMismatchError):
        ncc(gray_image, Image(np.zeros((3, 3))))


def test_local_ncc_identical_images(textured):
    image = Image(textured)

    result = local_ncc(image, image, SimilarityConfig(window=7))

    assert result.value == pytest.approx(1.0, abs=1e-9)
    assert not result.degenerate


def test_local_ncc_constant_images_all_degenerate():
    flat = Image(np.full((20, 20), 0.25))

    assert local_ncc(flat, flat, SimilarityConfig(window=5)) == (0.0, True)


def test_local_ncc_single_window_equals_ncc(textured):
    a = Image(textured[:15, :15])
    b = Image(textured[10:25, 5:20])

    windowed = local_ncc(a, b, SimilarityConfig(window=15))

    assert windowed.value == pytest.approx(ncc(a, b).value, abs=1e-9)


def test_local_ncc_window_larger_than_image():
    image = Image(np.zeros((8, 8)))

    with pytest.raises(ArgumentError):
        local_ncc(image, image, SimilarityConfig(window=9))


# --- MSE ---


def test_mse_examples(textured):
    a = Image(textured)
    zeros = Image(np.zeros((4, 4)))
    ones = Image(np.ones((4, 4)))

    assert mse(a, a) == 0.0
    assert mse(zeros, ones) == 1.0


def test_mse_is_symmetric(gray_image, rng):
    other = Image(rng.integers(0, 256, size=gray_image.shape, dtype=np.uint8))

    assert mse(gray_image, other) == mse(other, gray_image)


# --- Score Maps ---


def test_score_map_ties_prefer_first_row_major():
    assert ScoreMap(np.array([[1, 3], [3, 0]])).argmax == (1, 0)


def test_conv_zero_template_gives_zero_map(gray_image):
    scores = conv_score_map(gray_image, Image(np.zeros((5, 6), dtype=np.uint8)))

    assert scores.values.shape == (20, 27)
    assert not scores.values.any()


def test_conv_finds_planted_template(rng):
    template = rng.integers(1, 256, size=(6, 7), dtype=np.uint8)
    canvas = np.zeros((20, 24), dtype=np.uint8)
    canvas[3:9, 5:12] = template

    scores = conv_score_map(Image(canvas), Image(template))

    assert scores.argmax == (5, 3)
    assert scores.best == int(np.sum(template.astype(np.int64) ** 2))


def test_conv_matches_brute_force(rng):
    image = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    template = rng.integers(0, 256, size=(5, 5), dtype=np.uint8)
    expected = np.zeros((12, 12), dtype=np.int64)
    for dy in range(12):
        for dx in range(12):
            total = 0
            for v in range(5):
                for u in range(5):
                    total += int(template[v, u]) * int(image[dy + v, dx + u])
            expected[dy, dx] = total

    scores = conv_score_map(Image(image), Image(template))

    np.testing.assert_array_equal(scores.values, expected)
    assert scores.values.dtype == np.int64


def test_conv_rejects_large_template(gray_image):
    with pytest.raises(ArgumentError):
        conv_score_map(gray_image, Image(np.zeros((30, 5), dtype=np.uint8)))


def test_ncc_score_map_finds_planted_crop(textured):
    image = Image(textured)
    template = Image(textured[4:20, 7:23])

    scores = ncc_score_map(image, template)

    assert scores.argmax == (7, 4)
    assert scores.best == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.abs(scores.values) <= 1.0)


def test_ncc_score_map_flat_windows_score_zero(textured):
    canvas = np.zeros((30, 30))
    canvas[:, 15:] = textured[:30, :15]

    scores = ncc_score_map(Image(canvas), Image(textured[:8, :8]))

    assert np.all(scores.values[:, :8] == 0.0)
