# tests/synthgen/test_warps.py
import math

import numpy as np
import pytest
from stainreg.similarity.regularizers import grid_laplacian
from stainreg.synthgen.settings import SynthSpec
from stainreg.synthgen.warps import (
    GRID_H,
    build_warp,
    draw_warp_params,
    gen_warp,
    max_slope,
    wavelength_range,
)
from stainreg.transform.geometry import invert_points
from stainreg.transform.io import format_transform


def test_zero_rigid_warp_is_identity():
    transform = gen_warp(SynthSpec(seed=5, warp_magnitude=0.0, max_rotation_deg=0.0))

    assert transform.affine.is_identity()
    assert transform.deform is None


def test_same_seed_gives_identical_transform_file():
    spec = SynthSpec(seed=12, warp_kind="deformable")

    assert format_transform(gen_warp(spec)) == format_transform(gen_warp(spec))


def test_rigid_warp_is_a_rotation_within_bounds():
    for seed in range(20):
        spec = SynthSpec(seed=seed, warp_magnitude=100.0)
        params = draw_warp_params(spec)
        matrix = gen_warp(spec).affine.matrix

        assert abs(params.phi) <= math.radians(45.0)
        assert abs(params.tx) <= 0.1 * spec.width
        assert abs(params.ty) <= 0.1 * spec.height
        np.testing.assert_allclose(matrix @ matrix.T, np.eye(2), atol=1e-12)


def test_translation_is_capped_by_magnitude():
    params = [draw_warp_params(SynthSpec(seed=s, warp_magnitude=3.0)) for s in range(20)]

    assert max(max(abs(p.tx), abs(p.ty)) for p in params) <= 3.0


def test_affine_warp_draws_scale_and_shear():
    params = draw_warp_params(SynthSpec(seed=4, warp_kind="affine"))

    assert 0.9 <= params.sx <= 1.1
    assert 0.9 <= params.sy <= 1.1
    assert abs(params.shear) <= 0.1


def test_affine_warp_keeps_the_center_up_to_translation():
    spec = SynthSpec(seed=6, warp_kind="affine")
    params = draw_warp_params(spec)

    moved = build_warp(spec, params).apply(spec.center())

    np.testing.assert_allclose(moved, np.array(spec.center()) + [params.tx, params.ty], atol=1e-9)


def test_deformable_field_is_a_sinusoid_of_the_drawn_wavelength():
    spec = SynthSpec(seed=9, warp_kind="deformable", warp_magnitude=8.0)
    params = draw_warp_params(spec)
    grid = gen_warp(spec).deform
    xs, ys = grid.node_positions()

    low, high = wavelength_range(spec.height, spec.warp_magnitude)
    assert low <= params.wavelength_y <= high
    assert low >= spec.height / 4
    np.testing.assert_allclose(grid.u1[:, 0], 8.0 * np.sin(2 * math.pi * ys / params.wavelength_y + params.phase_y))
    np.testing.assert_allclose(grid.u2[0, :], 8.0 * np.sin(2 * math.pi * xs / params.wavelength_x + params.phase_x))


def test_grid_laplacian_matches_analytic_curvature():
    spec = SynthSpec(seed=2, warp_kind="deformable", warp_magnitude=8.0)
    params = draw_warp_params(spec)
    grid = gen_warp(spec).deform
    laplacian, _ = grid_laplacian(grid)

    interior = slice(1, -1)
    u = grid.u1[interior, 1]
    big = np.abs(u) > 2.0
    ratio = laplacian[interior, 1][big] / u[big]
    k = 2 * math.pi / params.wavelength_y

    # Discrete second difference of a sinusoid: -(2 - 2 cos(k h)) / h^2, within O((k h)^2) of -k^2.
    np.testing.assert_allclose(ratio, -(2 - 2 * math.cos(k * GRID_H)) / GRID_H**2, rtol=1e-9)
    assert ratio.mean() == pytest.approx(-(k**2), rel=(k * GRID_H) ** 2 / 6)


def test_deformable_slope_stays_in_the_contraction_regime():
    for seed in range(10):
        for size in (64, 128, 512):
            grid = gen_warp(SynthSpec(seed=seed, width=size, height=size, warp_kind="deformable")).deform

            assert max_slope(grid) < 1.0


def test_local_bulge_peaks_at_magnitude():
    spec = SynthSpec(seed=1, warp_kind="local_bulge", warp_magnitude=6.0)
    grid = gen_warp(spec).deform

    peak = np.hypot(grid.u1, grid.u2).max()

    assert 0.5 * 6.0 < peak <= 6.0 + 1e-12
    assert gen_warp(spec).affine.matrix[0, 0] == pytest.approx(math.cos(draw_warp_params(spec).phi))


@pytest.mark.parametrize("kind", ["deformable", "local_bulge"])
def test_generated_warps_invert_confidently(kind):
    spec = SynthSpec(seed=3, width=128, height=128, warp_kind=kind)
    transform = gen_warp(spec)
    points = np.array([[10.0, 20.0], [64.0, 64.0], [100.0, 31.0]])

    recovered, confident = invert_points(transform, transform.apply(points))

    assert confident.all()
    np.testing.assert_allclose(recovered, points, atol=1e-2)
