# tests/register/test_affine.py
import numpy as np
import pytest
from stainreg.raster.image import Image
from stainreg.register.affine import affine_register_gn
from stainreg.register.settings import RegConfig
from stainreg.transform.geometry import AffineTransform

from tests.factories import embed, textured_image


@pytest.fixture
def shifted_pair():
    """A 32 px texture at (16, 16) and at (18, 15) on 64 x 64 canvases: reference x maps to x + (2, -1)."""
    texture = textured_image(32)
    return Image(embed(texture, 64, (16, 16))), Image(embed(texture, 64, (18, 15)))


def test_identical_images_stay_at_identity():
    image = Image(textured_image(64))

    stage = affine_register_gn(image, image, AffineTransform(), RegConfig(affine_levels=2))

    np.testing.assert_allclose(stage.transform.affine.params, AffineTransform().params, atol=1e-12)
    assert all(len(trace) == 1 for trace in stage.traces.values())
    assert stage.final_value == pytest.approx(0.0, abs=1e-12)
    assert stage.transform.deform is None


def test_recovers_integer_translation(shifted_pair):
    reference, moving = shifted_pair

    stage = affine_register_gn(reference, moving, AffineTransform(), RegConfig(affine_levels=2))

    affine = stage.transform.affine
    assert affine.tx == pytest.approx(2.0, abs=0.1)
    assert affine.ty == pytest.approx(-1.0, abs=0.1)
    np.testing.assert_allclose(affine.matrix, np.eye(2), atol=0.02)
    assert set(stage.traces) == {"affine/L1", "affine/L0"}


def test_level_traces_never_increase(shifted_pair):
    reference, moving = shifted_pair

    stage = affine_register_gn(reference, moving, AffineTransform(), RegConfig(affine_levels=2))

    for trace in stage.traces.values():
        assert np.all(np.diff(trace) <= 0)
    assert stage.final_value == stage.traces["affine/L0"][-1]
    assert 0.0 < stage.overlap <= 1.0
