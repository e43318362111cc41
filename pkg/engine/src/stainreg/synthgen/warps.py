# src/stainreg/synthgen/warps.py
import logging
import math
from dataclasses import dataclass

import numpy as np

from stainreg.synthgen.prng import prng_stream
from stainreg.synthgen.settings import WARP_STREAM, SynthSpec
from stainreg.transform.geometry import AffineTransform, CompositeTransform, DisplacementGrid, rotation_matrix

_log = logging.getLogger(__name__)

GRID_H = 16.0
SCALE_RANGE = (0.9, 1.1)
MAX_SHEAR = 0.1
# Largest slope allowed for the sinusoidal field, keeping the warp invertible by fixed-point iteration.
MAX_SLOPE = 0.5
BULGE_WIDTH_FRAC = 0.1


@dataclass(frozen=True)
class WarpParams:
    """One draw of every warp parameter; unused parts keep their neutral values."""

    phi: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    sx: float = 1.0
    sy: float = 1.0
    shear: float = 0.0
    wavelength_x: float = math.inf
    wavelength_y: float = math.inf
    phase_x: float = 0.0
    phase_y: float = 0.0
    bulge_x: float = 0.0
    bulge_y: float = 0.0
    bulge_angle: float = 0.0


def wavelength_range(size: int, magnitude: float) -> tuple[float, float]:
    """Admissible sinusoid wavelengths for a dimension: at least size/4 and never steeper than MAX_SLOPE."""
    low = max(size / 4.0, 2.0 * math.pi * magnitude / MAX_SLOPE)
    return low, max(size / 2.0, low)


def draw_warp_params(spec: SynthSpec) -> WarpParams:
    """Draws in a fixed order from the warp stream; every kind consumes the draws it needs, nothing else."""
    stream = prng_stream(spec.seed, WARP_STREAM)
    max_phi = math.radians(spec.max_rotation_deg)
    params: dict[str, float] = {"phi": stream.uniform_range(-max_phi, max_phi)}
    for axis, size in (("tx", spec.width), ("ty", spec.height)):
        reach = min(spec.warp_magnitude, spec.max_translation_frac * size)
        params[axis] = stream.uniform_range(-reach, reach)

    if spec.warp_kind in ("affine", "deformable"):
        params["sx"] = stream.uniform_range(*SCALE_RANGE)
        params["sy"] = stream.uniform_range(*SCALE_RANGE)
        params["shear"] = stream.uniform_range(-MAX_SHEAR, MAX_SHEAR)
    if spec.warp_kind == "deformable":
        params["wavelength_x"] = stream.uniform_range(*wavelength_range(spec.width, spec.warp_magnitude))
        params["wavelength_y"] = stream.uniform_range(*wavelength_range(spec.height, spec.warp_magnitude))
        params["phase_x"] = stream.uniform_range(0.0, 2.0 * math.pi)
        params["phase_y"] = stream.uniform_range(0.0, 2.0 * math.pi)
    if spec.warp_kind == "local_bulge":
        params["bulge_x"] = stream.uniform_range(0.3, 0.7) * (spec.width - 1)
        params["bulge_y"] = stream.uniform_range(0.3, 0.7) * (spec.height - 1)
        params["bulge_angle"] = stream.uniform_range(0.0, 2.0 * math.pi)
    return WarpParams(**params)


def _affine_part(spec: SynthSpec, params: WarpParams) -> AffineTransform:
    """R diag(s) [[1, shear], [0, 1]] about the image center, then the translation."""
    linear = rotation_matrix(params.phi) @ np.diag([params.sx, params.sy]) @ np.array([[1.0, params.shear], [0.0, 1.0]])
    center = np.array(spec.center())
    return AffineTransform.from_matrix(linear, center - linear @ center + np.array([params.tx, params.ty]))


def _sinusoid_grid(spec: SynthSpec, params: WarpParams) -> DisplacementGrid:
    """u1 = m sin(2 pi y / wy + py), u2 = m sin(2 pi x / wx + px), sampled at the nodes."""
    grid = DisplacementGrid.covering(spec.width, spec.height, GRID_H)
    xs, ys = grid.node_positions()
    m = spec.warp_magnitude
    u1 = m * np.sin(2.0 * math.pi * ys / params.wavelength_y + params.phase_y)
    u2 = m * np.sin(2.0 * math.pi * xs / params.wavelength_x + params.phase_x)
    return DisplacementGrid(np.repeat(u1[:, None], grid.gw, axis=1), np.repeat(u2[None, :], grid.gh, axis=0), GRID_H)


def _bulge_grid(spec: SynthSpec, params: WarpParams) -> DisplacementGrid:
    """A Gaussian bump of peak magnitude m pushing along one direction."""
    grid = DisplacementGrid.covering(spec.width, spec.height, GRID_H)
    xs, ys = grid.node_positions()
    width = BULGE_WIDTH_FRAC * min(spec.width, spec.height)
    gx, gy = np.meshgrid(xs, ys)
    bump = spec.warp_magnitude * np.exp(-((gx - params.bulge_x) ** 2 + (gy - params.bulge_y) ** 2) / (2 * width**2))
    return DisplacementGrid(bump * math.cos(params.bulge_angle), bump * math.sin(params.bulge_angle), GRID_H)


def build_warp(spec: SynthSpec, params: WarpParams) -> CompositeTransform:
    affine = _affine_part(spec, params)
    match spec.warp_kind:
        case "deformable" if spec.warp_magnitude > 0:
            return CompositeTransform(affine, _sinusoid_grid(spec, params))
        case "local_bulge" if spec.warp_magnitude > 0:
            return CompositeTransform(affine, _bulge_grid(spec, params))
        case _:
            return CompositeTransform(affine)


def gen_warp(spec: SynthSpec) -> CompositeTransform:
    """The true reference -> moving transform of a case."""
    params = draw_warp_params(spec)
    _log.debug(
        "Case %s: %s warp, rotation %.2f deg, translation (%.2f, %.2f)",
        spec.pair_id,
        spec.warp_kind,
        math.degrees(params.phi),
        params.tx,
        params.ty,
    )
    return build_warp(spec, params)


def max_slope(grid: DisplacementGrid) -> float:
    """Largest finite-difference slope of either displacement component between neighboring nodes."""
    slopes = [np.abs(np.diff(u, axis=axis)).max(initial=0.0) / grid.h for u in (grid.u1, grid.u2) for axis in (0, 1)]
    return float(max(slopes))
