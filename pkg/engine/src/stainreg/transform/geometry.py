# src/stainreg/transform/geometry.py
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse

from stainreg.errors import ArgumentError, SingularTransformError
from stainreg.raster.image import Image
from stainreg.util import quantize_u8

_log = logging.getLogger(__name__)

SINGULAR_DET = 1e-12
INVERT_TOL = 1e-3
INVERT_MAX_ITER = 100


def _as_points(points) -> tuple[np.ndarray, bool]:
    """(N, 2) float array view of `points`, plus whether a single point was passed."""
    array = np.asarray(points, dtype=np.float64)
    single = array.ndim == 1
    array = np.atleast_2d(array)
    if array.shape[-1] != 2:
        raise ArgumentError(f"points must have two coordinates, got shape {array.shape}")
    return array, single


# --- Affine ---


@dataclass(frozen=True)
class AffineTransform:
    """y = A x + t with A = [[a11, a12], [a21, a22]], mapping reference to moving pixels."""

    a11: float = 1.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22", "tx", "ty"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ArgumentError(f"Affine entry {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, translation) -> "AffineTransform":
        (a11, a12), (a21, a22) = np.asarray(matrix, dtype=np.float64)
        tx, ty = np.asarray(translation, dtype=np.float64)
        return cls(a11, a12, a21, a22, tx, ty)

    @classmethod
    def from_params(cls, params) -> "AffineTransform":
        """Inverse of `params`: the vector (a11, a12, a21, a22, tx, ty)."""
        return cls(*np.asarray(params, dtype=np.float64).tolist())

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a11, self.a12, self.a21, self.a22, self.tx, self.ty])

    def is_identity(self) -> bool:
        return self == AffineTransform()

    def apply(self, points) -> np.ndarray:
        array, single = _as_points(points)
        x, y = array[:, 0], array[:, 1]
        mapped = np.stack([self.a11 * x + self.a12 * y + self.tx, self.a21 * x + self.a22 * y + self.ty], axis=1)
        return mapped[0] if single else mapped

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """self after inner: x -> A (A' x + t') + t."""
        return AffineTransform.from_matrix(
            self.matrix @ inner.matrix, self.matrix @ inner.translation + self.translation
        )


def rotation_matrix(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def invert_affine(affine: AffineTransform) -> AffineTransform:
    """Exact inverse; |det A| <= 1e-12 raises SingularTransformError."""
    det = affine.det
    if abs(det) <= SINGULAR_DET:
        raise SingularTransformError(det)
    inverse = np.array([[affine.a22, -affine.a12], [-affine.a21, affine.a11]]) / det
    return AffineTransform.from_matrix(inverse, -inverse @ affine.translation)


@dataclass(frozen=True)
class RigidParams:
    """
    Rotation by `phi` about the reference point c = (cx, cy) followed by translation t:
    y(x) = R(phi) (x - c) + c + t.
    """

    phi: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def to_affine(self) -> AffineTransform:
        rotation = rotation_matrix(self.phi)
        center = np.array([self.cx, self.cy])
        return AffineTransform.from_matrix(rotation, center + np.array([self.tx, self.ty]) - rotation @ center)


# --- Displacement Grid ---


@dataclass(frozen=True, eq=False)
class DisplacementGrid:
    """
    Control-point displacements on a uniform lattice.

    Node (i, j) sits at origin + (i h, j h); `u1` and `u2` are (gh, gw) arrays of
    moving-frame pixel displacements, bilinearly interpolated inside the
    support and zero outside it.
    """

    u1: np.ndarray
    u2: np.ndarray
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        u1 = np.array(self.u1, dtype=np.float64)
        u2 = np.array(self.u2, dtype=np.float64)
        if u1.ndim != 2 or u1.shape != u2.shape or u1.size == 0:
            raise ArgumentError(f"Grid components must be matching non-empty 2-D arrays, got {u1.shape}, {u2.shape}")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise ArgumentError("Grid displacements must be finite")
        h = float(self.h)
        if not (math.isfinite(h) and h > 0):
            raise ArgumentError(f"Grid spacing must be positive, got {self.h!r}")
        u1.flags.writeable = False
        u2.flags.writeable = False
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def zeros(cls, gw: int, gh: int, h: float, origin: tuple[float, float] = (0.0, 0.0)) -> "DisplacementGrid":
        return cls(np.zeros((gh, gw)), np.zeros((gh, gw)), h, origin)

    @classmethod
    def covering(cls, width: int, height: int, h: float) -> "DisplacementGrid":
        """Zero grid whose support spans pixel centers [0, width-1] x [0, height-1]."""
        gw = math.ceil((width - 1) / h) + 1
        gh = math.ceil((height - 1) / h) + 1
        return cls.zeros(max(gw, 2), max(gh, 2), h)

    @property
    def gw(self) -> int:
        return self.u1.shape[1]

    @property
    def gh(self) -> int:
        return self.u1.shape[0]

    @property
    def node_count(self) -> int:
        return self.u1.size

    def node_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Node x and y coordinates as 1-D arrays."""
        return self.origin[0] + self.h * np.arange(self.gw), self.origin[1] + self.h * np.arange(self.gh)

    def flat(self) -> np.ndarray:
        """Displacements as one vector (u1 row-major, then u2)."""
        return np.concatenate([self.u1.ravel(), self.u2.ravel()])

    def with_flat(self, values: np.ndarray) -> "DisplacementGrid":
        values = np.asarray(values, dtype=np.float64)
        n = self.node_count
        shape = (self.gh, self.gw)
        return DisplacementGrid(values[:n].reshape(shape), values[n:].reshape(shape), self.h, self.origin)

    def max_abs(self) -> float:
        return float(max(np.abs(self.u1).max(), np.abs(self.u2).max()))

    def displacement(self, points) -> np.ndarray:
        return grid_interpolate(self, points)


def interpolation_matrix(grid: DisplacementGrid, points) -> sparse.csr_matrix:
    """
    Sparse bilinear weights, one row per point and one column per node (row-major).

    Rows of points outside the grid support are empty.
    """
    array, _ = _as_points(points)
    gx = (array[:, 0] - grid.origin[0]) / grid.h
    gy = (array[:, 1] - grid.origin[1]) / grid.h
    inside = (gx >= 0) & (gx <= grid.gw - 1) & (gy >= 0) & (gy <= grid.gh - 1)
    rows = np.flatnonzero(inside)
    gx, gy = gx[inside], gy[inside]

    i0 = np.clip(np.floor(gx).astype(np.int64), 0, max(grid.gw - 2, 0))
    j0 = np.clip(np.floor(gy).astype(np.int64), 0, max(grid.gh - 2, 0))
    i1 = np.minimum(i0 + 1, grid.gw - 1)
    j1 = np.minimum(j0 + 1, grid.gh - 1)
    wx = gx - i0
    wy = gy - j0

    cols = np.concatenate([j0 * grid.gw + i0, j0 * grid.gw + i1, j1 * grid.gw + i0, j1 * grid.gw + i1])
    weights = np.concatenate([(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy])
    return sparse.csr_matrix(
        (weights, (np.tile(rows, 4), cols)), shape=(len(array), grid.node_count)
    )


def grid_interpolate(grid: DisplacementGrid, points) -> np.ndarray:
    """Bilinear displacement at `points`; zero outside the grid support."""
    array, single = _as_points(points)
    weights = interpolation_matrix(grid, array)
    displacement = np.stack([weights @ grid.u1.ravel(), weights @ grid.u2.ravel()], axis=1)
    return displacement[0] if single else displacement


# --- Composite ---


@dataclass(frozen=True)
class CompositeTransform:
    """y(x) = A x + t + u(x): an affine part plus an optional control-point displacement."""

    affine: AffineTransform = field(default_factory=AffineTransform)
    deform: DisplacementGrid | None = None

    def apply(self, points) -> np.ndarray:
        array, single = _as_points(points)
        mapped = self.affine.apply(array)
        if self.deform is not None:
            mapped = mapped + grid_interpolate(self.deform, array)
        return mapped[0] if single else mapped

    def with_affine(self, affine: AffineTransform) -> "CompositeTransform":
        return CompositeTransform(affine, self.deform)

    def with_deform(self, deform: DisplacementGrid | None) -> "CompositeTransform":
        return CompositeTransform(self.affine, deform)


def apply(transform: CompositeTransform | AffineTransform, points) -> np.ndarray:
    """Maps reference points (a single (x, y) or an (N, 2) array) into the moving frame."""
    return transform.apply(points)


def pixel_centers(width: int, height: int) -> np.ndarray:
    """All pixel centers of a width x height raster as (x, y) rows in row-major order."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)


def warp_image(
    width: int,
    height: int,
    mpp: float,
    transform: CompositeTransform | AffineTransform,
    moving: Image,
    cval: float = 0.0,
) -> Image:
    """
    Pull-back resampling: output pixel x is moving sampled at y(x) with bilinear
    interpolation. Samples falling outside the moving image take `cval` (in the
    moving image's sample units).
    """
    return resample(moving, transform.apply(pixel_centers(width, height)), width, height, mpp, cval)


def resample(moving: Image, mapped: np.ndarray, width: int, height: int, mpp: float, cval: float = 0.0) -> Image:
    """Bilinear samples of `moving` at `mapped` (one (x, y) row per output pixel, row-major)."""
    coords = np.stack([mapped[:, 1], mapped[:, 0]])

    source = moving.data.astype(np.float64)
    if moving.is_gray:
        sampled = ndimage.map_coordinates(source, coords, order=1, mode="constant", cval=cval)
        warped = sampled.reshape(height, width)
    else:
        warped = np.stack(
            [
                ndimage.map_coordinates(source[:, :, c], coords, order=1, mode="constant", cval=cval)
                .reshape(height, width)
                for c in range(3)
            ],
            axis=2,
        )

    if moving.data.dtype == np.uint8:
        return Image(quantize_u8(warped), mpp)
    return Image(np.clip(warped, 0.0, 1.0), mpp)


# --- Inversion ---


def invert_points(
    transform: CompositeTransform,
    points,
    tol: float = INVERT_TOL,
    max_iter: int = INVERT_MAX_ITER,
    search_shape: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Solves y(q) = p for every moving-frame point p.

    Fixed-point iteration q <- A^-1 (p - t - u(q)) from q = A^-1 (p - t), stopping
    per point once the step drops below `tol`. Points still moving after
    `max_iter` steps fall back to the reference pixel center minimizing
    |y(q) - p| and are flagged as low confidence.

    Returns (reference points, confident flags).
    """
    array, single = _as_points(points)
    inverse = invert_affine(transform.affine)
    base = inverse.apply(array)
    confident = np.ones(len(array), dtype=bool)
    if transform.deform is None:
        return (base[0], confident[0]) if single else (base, confident)

    linear = inverse.matrix
    q = base.copy()
    active = np.arange(len(array))
    for _ in range(max_iter):
        if active.size == 0:
            break
        stepped = base[active] - grid_interpolate(transform.deform, q[active]) @ linear.T
        step = np.linalg.norm(stepped - q[active], axis=1)
        q[active] = stepped
        active = active[step >= tol]

    if active.size:
        _log.warning("Fixed-point inversion did not converge for %d point(s); using dense search", active.size)
        q[active] = _dense_search(transform, array[active], search_shape)
        confident[active] = False
    return (q[0], confident[0]) if single else (q, confident)


def invert_point(
    transform: CompositeTransform, point, tol: float = INVERT_TOL, max_iter: int = INVERT_MAX_ITER
) -> tuple[np.ndarray, bool]:
    q, confident = invert_points(transform, np.asarray(point, dtype=np.float64).reshape(2), tol, max_iter)
    return q, bool(confident)


def _dense_search(
    transform: CompositeTransform, targets: np.ndarray, search_shape: tuple[int, int] | None
) -> np.ndarray:
    """Reference pixel center whose image under `transform` lies closest to each target."""
    if search_shape is None:
        grid = transform.deform
        assert grid is not None
        corner = np.array(grid.origin) + grid.h * np.array([grid.gw - 1, grid.gh - 1])
        margin = grid.max_abs() + 1.0
        reach = invert_affine(transform.affine).apply(targets)
        upper = np.maximum(corner, reach.max(axis=0)) + margin
        lower = np.minimum(np.array(grid.origin), reach.min(axis=0)) - margin
    else:
        lower = np.zeros(2)
        upper = np.array(search_shape, dtype=np.float64) - 1
    xs = np.arange(math.floor(lower[0]), math.ceil(upper[0]) + 1, dtype=np.float64)
    ys = np.arange(math.floor(lower[1]), math.ceil(upper[1]) + 1, dtype=np.float64)
    candidates = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    images = transform.apply(candidates)

    found = np.empty_like(targets)
    for k, target in enumerate(targets):
        found[k] = candidates[np.argmin(np.sum((images - target) ** 2, axis=1))]
    return found


def map_landmarks(transform: CompositeTransform, points_moving) -> tuple[np.ndarray, np.ndarray]:
    """Moving-frame landmarks carried into the reference frame, with confidence flags."""
    array, _ = _as_points(points_moving)
    return invert_points(transform, array)


# --- Frame Changes ---


@dataclass(frozen=True)
class Frame:
    """Coordinate change x_new = scale * x_old + offset (same scale on both axes)."""

    scale: float = 1.0
    offset: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def pyramid(cls, scale: float) -> "Frame":
        """Level pixel x to full resolution: pixel centers sit at s x + (s - 1) / 2."""
        return cls(scale, ((scale - 1) / 2.0, (scale - 1) / 2.0))

    def inverse(self) -> "Frame":
        return Frame(1.0 / self.scale, (-self.offset[0] / self.scale, -self.offset[1] / self.scale))


def change_frames(transform: CompositeTransform, reference: Frame, moving: Frame) -> CompositeTransform:
    """
    Re-expresses `transform` after both coordinate frames change:
    y'(x') = s_m y((x' - o_r) / s_r) + o_m.
    """
    ratio = moving.scale / reference.scale
    matrix = ratio * transform.affine.matrix
    origin_r = np.array(reference.offset)
    translation = moving.scale * transform.affine.translation + np.array(moving.offset) - matrix @ origin_r
    affine = AffineTransform.from_matrix(matrix, translation)

    deform = None
    if transform.deform is not None:
        grid = transform.deform
        origin = reference.scale * np.array(grid.origin) + origin_r
        deform = DisplacementGrid(
            moving.scale * grid.u1, moving.scale * grid.u2, reference.scale * grid.h, (origin[0], origin[1])
        )
    return CompositeTransform(affine, deform)


def rescale_transform(transform: CompositeTransform, scale_from: float, scale_to: float) -> CompositeTransform:
    """Converts a transform between pyramid levels whose pixels are `scale_from` / `scale_to` full-res pixels."""
    full = change_frames(transform, Frame.pyramid(scale_from), Frame.pyramid(scale_from))
    target = Frame.pyramid(scale_to).inverse()
    return change_frames(full, target, target)


def shift_frames(
    transform: CompositeTransform, ref_offset: tuple[float, float], mov_offset: tuple[float, float]
) -> CompositeTransform:
    """Transform estimated on cropped images, expressed in the uncropped frames."""
    return change_frames(transform, Frame(1.0, ref_offset), Frame(1.0, mov_offset))
