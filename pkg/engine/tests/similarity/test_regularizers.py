# tests/similarity/test_regularizers.py
import numpy as np
import pytest
from stainreg.similarity.regularizers import curv, diffusive, grid_laplacian
from stainreg.transform.geometry import DisplacementGrid


def _curv_oracle(grid: DisplacementGrid) -> float:
    total = 0.0
    for u in (grid.u1, grid.u2):
        gh, gw = u.shape
        for j in range(gh):
            for i in range(gw):
                lap = 0.0
                for dj, di in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    nj = min(max(j + dj, 0), gh - 1)
                    ni = min(max(i + di, 0), gw - 1)
                    lap += u[nj, ni] - u[j, i]
                total += (lap / grid.h**2) ** 2
    return grid.h**2 / 2 * total


def _diffusive_oracle(grid: DisplacementGrid) -> float:
    total = 0.0
    for u in (grid.u1, grid.u2):
        gh, gw = u.shape
        for j in range(gh):
            for i in range(gw):
                i0, i1 = (i, i + 1) if i < gw - 1 else (i - 1, i)
                j0, j1 = (j, j + 1) if j < gh - 1 else (j - 1, j)
                dx = (u[j, i1] - u[j, i0]) / grid.h
                dy = (u[j1, i] - u[j0, i]) / grid.h
                total += dx * dx + dy * dy
    return grid.h**2 / 2 * total


@pytest.fixture
def random_grid(rng):
    return DisplacementGrid(rng.normal(size=(6, 7)), rng.normal(size=(6, 7)), 4.0)


def _finite_difference(func, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(x)
    for k in range(len(x)):
        up, down = x.copy(), x.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (func(up) - func(down)) / (2 * step)
    return grad


# --- Curvature ---


def test_curv_zero_and_constant_fields():
    assert curv(DisplacementGrid.zeros(5, 4, 3.0)).value == 0.0
    constant = DisplacementGrid(np.full((4, 5), 2.5), np.full((4, 5), -1.25), 3.0)

    result = curv(constant)

    assert result.value == 0.0
    assert not result.gradient.any()


def test_curv_matches_direct_summation(random_grid):
    assert curv(random_grid).value == pytest.approx(_curv_oracle(random_grid), rel=1e-10)


def test_curv_quadratic_interior_laplacian():
    h = 2.0
    xs = h * np.arange(6)
    grid = DisplacementGrid(np.tile(xs**2, (5, 1)), np.zeros((5, 6)), h)

    l1, l2 = grid_laplacian(grid)

    np.testing.assert_allclose(l1[:, 1:-1], 2.0)
    assert not l2.any()
    assert curv(grid).value == pytest.approx(_curv_oracle(grid), rel=1e-10)


def test_curv_translation_invariance(rng):
    u1 = rng.integers(-16, 16, size=(5, 5)) / 4.0
    u2 = rng.integers(-16, 16, size=(5, 5)) / 4.0

    base = curv(DisplacementGrid(u1, u2, 2.0))
    shifted = curv(DisplacementGrid(u1 + 0.5, u2 - 3.0, 2.0))

    assert shifted.value == base.value


def test_curv_gradient_matches_finite_differences(random_grid):
    numeric = _finite_difference(lambda u: curv(random_grid.with_flat(u)).value, random_grid.flat())

    np.testing.assert_allclose(curv(random_grid).gradient, numeric, rtol=1e-6, atol=1e-8)


# --- Diffusive ---


def test_diffusive_constant_field_is_zero():
    assert diffusive(DisplacementGrid(np.full((3, 4), 7.0), np.full((3, 4), 1.0), 1.0)).value == 0.0


def test_diffusive_unit_ramp():
    h = 3.0
    ramp = np.tile(h * np.arange(5), (4, 1))

    result = diffusive(DisplacementGrid(ramp, np.zeros((4, 5)), h))

    assert result.value == pytest.approx(h**2 / 2 * 20)


def test_diffusive_matches_direct_summation(random_grid):
    assert diffusive(random_grid).value == pytest.approx(_diffusive_oracle(random_grid), rel=1e-12)


def test_diffusive_gradient_matches_finite_differences(random_grid):
    numeric = _finite_difference(lambda u: diffusive(random_grid.with_flat(u)).value, random_grid.flat())

    np.testing.assert_allclose(diffusive(random_grid).gradient, numeric, rtol=1e-6, atol=1e-8)
