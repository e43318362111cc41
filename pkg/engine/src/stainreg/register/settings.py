# src/stainreg/register/settings.py
from dataclasses import dataclass

from stainreg.errors import ArgumentError
from stainreg.register.optim import OptimizerSettings
from stainreg.similarity.measures import SimilarityConfig

PREALIGN_MODES = ("ara", "conv_full", "ncc_binary")
MASK_MODES = ("threshold", "kmeans")
DEFORMABLE_MODES = ("lbfgs", "rbf", "none")
REGULARIZERS = ("curvature", "diffusive")


@dataclass(frozen=True)
class RegConfig:
    """
    Parameters of the registration pipeline. Pixel quantities refer to the
    working resolution (after downsampling) unless stated otherwise.
    """

    # preprocessing
    max_dim: int = 256
    downsample: int = 0  # 0 derives the factor from max_dim
    remove_border: bool = True
    crop_frac: float = 0.0
    clahe: bool = True
    clahe_tiles: int = 8
    clahe_clip: float = 0.01
    smooth_sigma_um: float = 5.0
    mask_mode: str = "kmeans"
    fixed_thresholds: tuple[int, int] = (50, 230)
    moving_thresholds: tuple[int, int] = (100, 240)

    # pre-alignment
    prealign_mode: str = "ara"
    n_rotations: int = 32
    rotation_stride_deg: float = 1.0
    ara_max_dim: int = 128
    rigid_iters: int = 10

    # affine / deformable optimization
    affine_levels: int = 3
    deform_levels: int = 2
    max_iter_affine: int = 50
    max_iter_deform: int = 100
    deformable: str = "lbfgs"
    regularizer: str = "curvature"
    alpha: float = 10.0
    alpha_sweep: tuple[float, ...] = ()
    grid_h: float = 16.0
    lbfgs_memory: int = 10
    armijo_c: float = 1e-4
    grad_tol: float = 1e-6
    step_tol: float = 1e-8
    ngf: SimilarityConfig = SimilarityConfig()
    masked_ngf: bool = False
    low_overlap_frac: float = 0.1

    # local correction variant
    rbf_patch: int = 256
    rbf_search: int = 512
    rbf_density: float = 128.0
    rbf_inlier_px: float = 32.0  # RANSAC screen of keypoint corrections; 0 disables

    seed: int = 0

    def __post_init__(self):
        if self.prealign_mode not in PREALIGN_MODES:
            raise ArgumentError(f"prealign_mode must be one of {PREALIGN_MODES}, got '{self.prealign_mode}'")
        if self.mask_mode not in MASK_MODES:
            raise ArgumentError(f"mask_mode must be one of {MASK_MODES}, got '{self.mask_mode}'")
        if self.deformable not in DEFORMABLE_MODES:
            raise ArgumentError(f"deformable must be one of {DEFORMABLE_MODES}, got '{self.deformable}'")
        if self.regularizer not in REGULARIZERS:
            raise ArgumentError(f"regularizer must be one of {REGULARIZERS}, got '{self.regularizer}'")
        if self.n_rotations < 2:
            raise ArgumentError(f"n_rotations must be >= 2, got {self.n_rotations}")
        if not 0 < self.rotation_stride_deg <= 180:
            raise ArgumentError(f"rotation_stride_deg must be in (0, 180], got {self.rotation_stride_deg}")
        if self.alpha < 0 or any(a < 0 for a in self.alpha_sweep):
            raise ArgumentError("alpha values must be >= 0")
        if self.grid_h < 2:
            raise ArgumentError(f"grid_h must be >= 2, got {self.grid_h}")
        counts = {
            "rigid_iters": self.rigid_iters,
            "max_iter_affine": self.max_iter_affine,
            "max_iter_deform": self.max_iter_deform,
            "affine_levels": self.affine_levels,
            "deform_levels": self.deform_levels,
            "lbfgs_memory": self.lbfgs_memory,
            "max_dim": self.max_dim,
            "ara_max_dim": self.ara_max_dim,
        }
        for name, value in counts.items():
            if value < 1:
                raise ArgumentError(f"{name} must be >= 1, got {value}")
        if self.downsample < 0:
            raise ArgumentError(f"downsample must be >= 0, got {self.downsample}")
        if not 0 < self.armijo_c < 1:
            raise ArgumentError(f"armijo_c must be in (0, 1), got {self.armijo_c}")
        for name, pair in (("fixed_thresholds", self.fixed_thresholds), ("moving_thresholds", self.moving_thresholds)):
            if len(pair) != 2 or not 0 <= pair[0] <= pair[1] <= 255:
                raise ArgumentError(f"{name} must be (lo, hi) with 0 <= lo <= hi <= 255, got {pair}")
        if self.rbf_patch % 2 or self.rbf_search % 2 or self.rbf_search <= self.rbf_patch:
            raise ArgumentError("rbf_patch and rbf_search must be even with rbf_search > rbf_patch")
        if self.rbf_density <= 0:
            raise ArgumentError(f"rbf_density must be positive, got {self.rbf_density}")
        if self.rbf_inlier_px < 0:
            raise ArgumentError(f"rbf_inlier_px must be >= 0, got {self.rbf_inlier_px}")

    def similarity(self) -> SimilarityConfig:
        return self.ngf

    def optimizer(self, max_iter: int) -> OptimizerSettings:
        return OptimizerSettings(
            max_iter=max_iter,
            armijo_c=self.armijo_c,
            grad_tol=self.grad_tol,
            step_tol=self.step_tol,
            memory=self.lbfgs_memory,
        )
