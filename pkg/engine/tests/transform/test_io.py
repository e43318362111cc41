# tests/transform/test_io.py
import numpy as np
import pytest
from stainreg.errors import UnreadableInputError, ValidationError
from stainreg.transform.geometry import AffineTransform, CompositeTransform, DisplacementGrid
from stainreg.transform.io import format_transform, parse_transform, read_transform, write_transform


def test_affine_only_format():
    text = format_transform(CompositeTransform(AffineTransform(tx=2.5)))

    assert text == "affine 1 0 0 1 2.5 0\n"


def test_round_trip_with_grid(tmp_path, rng):
    grid = DisplacementGrid(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), 12.5, (0.25, -3.0))
    transform = CompositeTransform(AffineTransform(0.1 + 0.2, 1 / 3, -2 / 7, 1.0, 1e-17, 5.0), grid)
    path = tmp_path / "pair.txt"

    write_transform(transform, path)
    restored = read_transform(path)

    assert restored.affine == transform.affine
    np.testing.assert_array_equal(restored.deform.u1, grid.u1)
    np.testing.assert_array_equal(restored.deform.u2, grid.u2)
    assert (restored.deform.h, restored.deform.origin) == (12.5, (0.25, -3.0))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[1] == "grid 4 3 12.5 0.25 -3"
    assert len(lines) == 2 + 12


def test_parse_rejects_wrong_node_count():
    text = "affine 1 0 0 1 0 0\ngrid 2 2 4 0 0\n0 0\n0 0\n0 0\n"

    with pytest.raises(ValidationError) as excinfo:
        parse_transform(text)

    assert excinfo.value.row == 6


def test_parse_rejects_non_numeric_node():
    text = "affine 1 0 0 1 0 0\ngrid 1 1 4 0 0\n0 x\n"

    with pytest.raises(ValidationError) as excinfo:
        parse_transform(text)

    assert excinfo.value.row == 3


@pytest.mark.parametrize("text", ["", "grid 1 1 1 0 0\n", "affine 1 0 0 1 0\n", "affine 1 0 0 1 nan 0\n"])
def test_parse_rejects_bad_affine_record(text):
    with pytest.raises(ValidationError):
        parse_transform(text)


def test_read_missing_file(tmp_path):
    with pytest.raises(UnreadableInputError):
        read_transform(tmp_path / "absent.txt")
