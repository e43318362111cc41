# src/stainreg/similarity/ngf.py
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse

from stainreg.errors import ArgumentError, NumericError, OverlapError
from stainreg.raster.image import Image
from stainreg.similarity.measures import SimilarityConfig
from stainreg.transform.geometry import (
    AffineTransform,
    CompositeTransform,
    DisplacementGrid,
    interpolation_matrix,
    pixel_centers,
)

_log = logging.getLogger(__name__)

# Floor on sqrt(term) when forming Gauss-Newton residual Jacobians.
RESIDUAL_FLOOR = 1e-6
_OFFSETS = np.arange(-1, 3)


# --- Sampling ---


def _keys_weights(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cubic convolution (a = -0.5) weights for taps -1..2 and their derivatives, shape (N, 4)."""
    f2 = f * f
    f3 = f2 * f
    weights = np.stack(
        [
            -0.5 * f3 + f2 - 0.5 * f,
            1.5 * f3 - 2.5 * f2 + 1.0,
            -1.5 * f3 + 2.0 * f2 + 0.5 * f,
            0.5 * f3 - 0.5 * f2,
        ],
        axis=1,
    )
    derivatives = np.stack(
        [
            -1.5 * f2 + 2.0 * f - 0.5,
            4.5 * f2 - 5.0 * f,
            -4.5 * f2 + 4.0 * f + 0.5,
            1.5 * f2 - f,
        ],
        axis=1,
    )
    return weights, derivatives


@dataclass(frozen=True, eq=False)
class Sample:
    values: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    inside: np.ndarray


def cubic_sample(data: np.ndarray, points: np.ndarray) -> Sample:
    """
    Samples a 2-D array at (x, y) points with clamped cubic convolution.

    Coordinates outside [0, n - 1] are clamped, so the derivative along that
    axis is zero there; `inside` marks points within the domain on both axes.
    """
    rows_n, cols_n = data.shape
    x, y = points[:, 0], points[:, 1]
    inside_x = (x >= 0) & (x <= cols_n - 1)
    inside_y = (y >= 0) & (y <= rows_n - 1)

    xc = np.clip(x, 0, cols_n - 1)
    yc = np.clip(y, 0, rows_n - 1)
    ix = np.floor(xc).astype(np.int64)
    iy = np.floor(yc).astype(np.int64)
    wx, dwx = _keys_weights(xc - ix)
    wy, dwy = _keys_weights(yc - iy)

    cols = np.clip(ix[:, None] + _OFFSETS, 0, cols_n - 1)
    rows = np.clip(iy[:, None] + _OFFSETS, 0, rows_n - 1)
    patch = data[rows[:, :, None], cols[:, None, :]]

    values = np.einsum("na,nab,nb->n", wy, patch, wx)
    dx = np.einsum("na,nab,nb->n", wy, patch, dwx) * inside_x
    dy = np.einsum("na,nab,nb->n", dwy, patch, wx) * inside_y
    return Sample(values, dx, dy, inside_x & inside_y)


def _difference_1d(n: int) -> sparse.csr_matrix:
    """Central differences, one-sided at both ends."""
    if n < 2:
        return sparse.csr_matrix((n, n))
    rows = [0, 0, n - 1, n - 1]
    cols = [0, 1, n - 2, n - 1]
    vals = [-1.0, 1.0, -1.0, 1.0]
    interior = np.arange(1, n - 1)
    rows += list(interior) * 2
    cols += list(interior - 1) + list(interior + 1)
    vals += [-0.5] * len(interior) + [0.5] * len(interior)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def gradient_operators(width: int, height: int) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Sparse d/dx and d/dy acting on row-major flattened height x width images."""
    dx = sparse.kron(sparse.identity(height), _difference_1d(width), format="csr")
    dy = sparse.kron(_difference_1d(height), sparse.identity(width), format="csr")
    return dx, dy


# --- Objective ---


@dataclass(frozen=True, eq=False)
class NGFState:
    """One evaluation of the NGF distance plus what its derivatives need."""

    value: float
    terms: np.ndarray
    overlap: float
    points: np.ndarray
    d_gx: np.ndarray
    d_gy: np.ndarray
    sample: Sample


class NGFObjective:
    """
    NGF distance between a fixed reference and a moving image pulled back through a transform.

    value = h^2/2 * sum_i 1 - (<gW, gR>_eps / (|gW|_eps |gR|_eps))^2 over reference
    pixels whose pull-back lands inside the moving image, where W is the moving
    image sampled at y(x_i). Reference gradients and the pixel grid are cached,
    so one instance serves a whole optimization run.
    """

    def __init__(self, reference: Image, moving: Image, cfg: SimilarityConfig):
        reference.require_gray("NGF")
        moving.require_gray("NGF")
        self.reference = reference
        self.moving = moving
        self.cfg = cfg
        self.weight = cfg.weight
        self._eps2 = cfg.epsilon**2
        self._moving = moving.unit()
        self._centers = pixel_centers(reference.width, reference.height)
        self._dx, self._dy = gradient_operators(reference.width, reference.height)
        r = reference.unit().ravel()
        self._grx = self._dx @ r
        self._gry = self._dy @ r
        self._grid_weights: dict[tuple, sparse.csr_matrix] = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.reference.shape

    @property
    def pixel_count(self) -> int:
        return len(self._centers)

    def _weights_for(self, grid: DisplacementGrid) -> sparse.csr_matrix:
        key = (grid.gw, grid.gh, grid.h, grid.origin)
        weights = self._grid_weights.get(key)
        if weights is None:
            weights = interpolation_matrix(grid, self._centers)
            self._grid_weights[key] = weights
        return weights

    def map_points(self, transform: CompositeTransform | AffineTransform) -> np.ndarray:
        if isinstance(transform, AffineTransform):
            transform = CompositeTransform(transform)
        points = transform.affine.apply(self._centers)
        grid = transform.deform
        if grid is not None:
            weights = self._weights_for(grid)
            points = points + np.stack([weights @ grid.u1.ravel(), weights @ grid.u2.ravel()], axis=1)
        return points

    def evaluate(self, transform: CompositeTransform | AffineTransform) -> NGFState:
        points = self.map_points(transform)
        sample = cubic_sample(self._moving, points)
        if not sample.inside.any():
            raise OverlapError()

        gwx = self._dx @ sample.values
        gwy = self._dy @ sample.values
        grx, gry = self._grx, self._gry
        eps2 = self._eps2

        p = gwx * grx + gwy * gry + eps2
        a = gwx * gwx + gwy * gwy + eps2
        b = grx * grx + gry * gry + eps2
        s = np.sqrt(a * b)
        r = p / s
        inside = sample.inside
        terms = np.clip(1.0 - r * r, 0.0, 1.0) * inside

        value = self.weight * float(np.sum(terms))
        if not np.isfinite(value):
            raise NumericError("NGF distance")

        d_gx = np.where(inside, -2.0 * r * (grx / s - r * gwx / a), 0.0)
        d_gy = np.where(inside, -2.0 * r * (gry / s - r * gwy / a), 0.0)
        return NGFState(
            value=value,
            terms=terms.reshape(self.shape),
            overlap=float(inside.mean()),
            points=points,
            d_gx=d_gx,
            d_gy=d_gy,
            sample=sample,
        )

    def _point_gradient(self, state: NGFState) -> tuple[np.ndarray, np.ndarray]:
        """d value / d y at every pixel, as (gx, gy)."""
        d_w = self.weight * (self._dx.T @ state.d_gx + self._dy.T @ state.d_gy)
        return d_w * state.sample.dx, d_w * state.sample.dy

    def affine_gradient(self, state: NGFState) -> np.ndarray:
        """Gradient w.r.t. (a11, a12, a21, a22, tx, ty)."""
        gx, gy = self._point_gradient(state)
        x, y = self._centers[:, 0], self._centers[:, 1]
        return np.array([gx @ x, gx @ y, gy @ x, gy @ y, gx.sum(), gy.sum()])

    def grid_gradient(self, state: NGFState, grid: DisplacementGrid) -> np.ndarray:
        """Gradient w.r.t. the grid displacements in `DisplacementGrid.flat` order."""
        gx, gy = self._point_gradient(state)
        weights = self._weights_for(grid)
        return np.concatenate([weights.T @ gx, weights.T @ gy])

    def affine_residuals(self, state: NGFState) -> tuple[np.ndarray, np.ndarray]:
        """
        Residuals rho with value = 1/2 * sum rho^2 and their (N, 6) Jacobian
        w.r.t. the affine parameters.
        """
        tx, ty = state.sample.dx, state.sample.dy
        x, y = self._centers[:, 0], self._centers[:, 1]
        columns = [tx * x, tx * y, ty * x, ty * y, tx, ty]
        j_terms = np.stack(
            [state.d_gx * (self._dx @ q) + state.d_gy * (self._dy @ q) for q in columns], axis=1
        )
        terms = state.terms.ravel()
        scale = np.sqrt(2.0 * self.weight)
        rho = np.sqrt(terms)
        jacobian = j_terms / (2.0 * np.maximum(rho, RESIDUAL_FLOOR))[:, None]
        return scale * rho, scale * jacobian

    def gauss_newton_system(self, state: NGFState) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Newton matrix J^T J and the exact gradient for the affine parameters."""
        _, jacobian = self.affine_residuals(state)
        return jacobian.T @ jacobian, self.affine_gradient(state)


# --- Functional API ---


def ngf_distance(
    reference: Image, moving: Image, transform: CompositeTransform | AffineTransform, cfg: SimilarityConfig
) -> tuple[float, np.ndarray]:
    """NGF value and the (height, width) per-pixel terms; out-of-domain pixels have term 0."""
    state = NGFObjective(reference, moving, cfg).evaluate(transform)
    return state.value, state.terms


def ngf_gradient(
    reference: Image,
    moving: Image,
    transform: CompositeTransform | AffineTransform,
    cfg: SimilarityConfig,
    parameterization: Literal["affine", "grid"] = "affine",
) -> np.ndarray:
    objective = NGFObjective(reference, moving, cfg)
    state = objective.evaluate(transform)
    match parameterization:
        case "affine":
            return objective.affine_gradient(state)
        case "grid":
            if not isinstance(transform, CompositeTransform) or transform.deform is None:
                raise ArgumentError("Grid gradient needs a transform with a displacement grid")
            return objective.grid_gradient(state, transform.deform)
        case _:
            raise ArgumentError(f"Unknown parameterization '{parameterization}'")


def ngf_residuals(
    reference: Image, moving: Image, transform: CompositeTransform | AffineTransform, cfg: SimilarityConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton residuals and their Jacobian w.r.t. the affine parameters."""
    objective = NGFObjective(reference, moving, cfg)
    return objective.affine_residuals(objective.evaluate(transform))
