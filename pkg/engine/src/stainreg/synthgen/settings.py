# src/stainreg/synthgen/settings.py
from dataclasses import dataclass

from stainreg.errors import ArgumentError

WARP_KINDS = ("rigid", "affine", "deformable", "local_bulge")
MIN_DIM = 64

# Stream ids; each concern of a case draws from its own stream.
TISSUE_STREAM = 1
STAIN_STREAM = 2
WARP_STREAM = 3
LANDMARK_STREAM = 4


@dataclass(frozen=True)
class SynthSpec:
    """
    Everything that determines one synthetic case. Generation is a pure
    function of these fields.

    `annot_sigma_um` is the per-axis annotator noise; the default puts the
    median distance between annotators near 20 um.
    """

    seed: int = 0
    width: int = 512
    height: int = 512
    mpp: float = 4.6
    n_blobs: int = 3
    warp_kind: str = "rigid"
    warp_magnitude: float = 8.0
    n_landmarks: int = 50
    annot_sigma_um: float = 12.0
    max_rotation_deg: float = 45.0
    max_translation_frac: float = 0.1
    stain: bool = True

    def __post_init__(self):
        if self.warp_kind not in WARP_KINDS:
            raise ArgumentError(f"warp_kind must be one of {WARP_KINDS}, got '{self.warp_kind}'")
        if self.width < MIN_DIM or self.height < MIN_DIM:
            raise ArgumentError(f"Dimensions must be >= {MIN_DIM}, got {self.width} x {self.height}")
        if self.seed < 0:
            raise ArgumentError(f"seed must be non-negative, got {self.seed}")
        if self.n_landmarks < 1:
            raise ArgumentError(f"n_landmarks must be >= 1, got {self.n_landmarks}")
        if self.n_blobs < 0:
            raise ArgumentError(f"n_blobs must be >= 0, got {self.n_blobs}")
        if self.warp_magnitude < 0:
            raise ArgumentError(f"warp_magnitude must be >= 0, got {self.warp_magnitude}")
        if self.mpp <= 0:
            raise ArgumentError(f"mpp must be positive, got {self.mpp}")
        if self.annot_sigma_um < 0:
            raise ArgumentError(f"annot_sigma_um must be >= 0, got {self.annot_sigma_um}")
        if not 0 <= self.max_rotation_deg <= 180:
            raise ArgumentError(f"max_rotation_deg must be in [0, 180], got {self.max_rotation_deg}")
        if not 0 <= self.max_translation_frac < 0.5:
            raise ArgumentError(f"max_translation_frac must be in [0, 0.5), got {self.max_translation_frac}")

    @property
    def pair_id(self) -> str:
        return f"case_{self.seed}"

    def center(self) -> tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0
