# tests/conftest.py
import logging

import numpy as np
import pytest
from stainreg import config
from stainreg.main import run_command
from stainreg.raster.image import Image
from stainreg.synthgen.settings import SynthSpec

from tests.factories import gaussian_blob, textured_image


@pytest.fixture
def rng():
    """Seeded numpy generator so every randomized test is deterministic."""
    return np.random.default_rng(20240613)


@pytest.fixture
def gray_image(rng):
    """Random 8-bit gray image, 24 rows by 32 columns, at 4.6 um/px."""
    return Image(rng.integers(0, 256, size=(24, 32), dtype=np.uint8), 4.6)


@pytest.fixture
def rgb_image(rng):
    """Random 8-bit RGB image, 10 rows by 12 columns."""
    return Image(rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8), 0.92)


@pytest.fixture
def blob_image():
    """Real-valued 64 x 64 Gaussian blob on a zero background."""
    return Image(gaussian_blob(64, (30.0, 34.0), 6.0), 1.0)


@pytest.fixture
def textured():
    """48 x 48 smooth texture in [0, 1] used by similarity and registration tests."""
    return textured_image()


@pytest.fixture
def small_spec():
    """Quick synthetic case: 128 x 128 px, 20 landmarks, rigid warp."""
    return SynthSpec(seed=3, width=128, height=128, n_landmarks=20, warp_magnitude=6.0)


QUICK_REGISTRATION = (
    "register.max_dim=48",
    "register.n_rotations=4",
    "register.ara_max_dim=48",
    "register.rigid_iters=3",
    "register.affine_levels=1",
    "register.deform_levels=1",
    "register.max_iter_affine=5",
    "register.max_iter_deform=5",
    "register.grid_h=8",
)


@pytest.fixture
def restore_root_logging():
    """Undoes the handlers configure_logging installs on the root logger."""
    root_logger = logging.getLogger()
    original_handlers = root_logger.handlers[:]
    original_level = root_logger.level

    yield

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        if handler not in original_handlers:
            handler.close()
    for handler in original_handlers:
        root_logger.addHandler(handler)
    root_logger.setLevel(original_level)


@pytest.fixture
def cli(monkeypatch, restore_root_logging):
    """run_command with STAINREG_* variables cleared and a fresh config cache."""
    for variable in config.ENV_OVERRIDES:
        monkeypatch.delenv(variable, raising=False)
    monkeypatch.setattr(config, "_config_cache", None)
    return run_command


@pytest.fixture
def quick_args():
    """Global flags that shrink registration to a few iterations on 48 px working images."""
    args = ["--threads", "1"]
    for override in QUICK_REGISTRATION:
        args += ["--set", override]
    return args
