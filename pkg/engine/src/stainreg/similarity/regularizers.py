# src/stainreg/similarity/regularizers.py
from typing import NamedTuple

import numpy as np
from scipy import sparse

from stainreg.transform.geometry import DisplacementGrid


class Regularization(NamedTuple):
    value: float
    gradient: np.ndarray  # in DisplacementGrid.flat order


def _laplacian(u: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian; ghost nodes replicate the nearest boundary node."""
    p = np.pad(u, 1, mode="edge")
    center = p[1:-1, 1:-1]
    total = (p[:-2, 1:-1] - center) + (p[2:, 1:-1] - center) + (p[1:-1, :-2] - center) + (p[1:-1, 2:] - center)
    return total / (h * h)


def grid_laplacian(grid: DisplacementGrid) -> tuple[np.ndarray, np.ndarray]:
    return _laplacian(grid.u1, grid.h), _laplacian(grid.u2, grid.h)


def curv(grid: DisplacementGrid) -> Regularization:
    """
    Curvature energy h^2/2 * sum |L u1|^2 + |L u2|^2 over all nodes, with the
    Neumann Laplacian L of `grid_laplacian`. L is symmetric, so the gradient
    is h^2 * L(L u) per component.
    """
    h = grid.h
    l1, l2 = grid_laplacian(grid)
    value = 0.5 * h * h * float(np.sum(l1 * l1) + np.sum(l2 * l2))
    gradient = h * h * np.concatenate([_laplacian(l1, h).ravel(), _laplacian(l2, h).ravel()])
    return Regularization(value, gradient)


def _forward_difference(n: int, h: float) -> sparse.csr_matrix:
    """Forward differences, backward at the last node."""
    if n < 2:
        return sparse.csr_matrix((n, n))
    rows = np.concatenate([np.arange(n - 1), np.arange(n - 1), [n - 1, n - 1]])
    cols = np.concatenate([np.arange(n - 1), np.arange(1, n), [n - 2, n - 1]])
    vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1), [-1.0, 1.0]]) / h
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diffusive(grid: DisplacementGrid) -> Regularization:
    """Diffusive energy h^2/2 * sum |grad u1|^2 + |grad u2|^2 and its gradient h^2 * D^T D u."""
    h = grid.h
    dx = sparse.kron(sparse.identity(grid.gh), _forward_difference(grid.gw, h), format="csr")
    dy = sparse.kron(_forward_difference(grid.gh, h), sparse.identity(grid.gw), format="csr")
    value = 0.0
    parts = []
    for u in (grid.u1.ravel(), grid.u2.ravel()):
        ux, uy = dx @ u, dy @ u
        value += float(ux @ ux + uy @ uy)
        parts.append(dx.T @ ux + dy.T @ uy)
    return Regularization(0.5 * h * h * value, h * h * np.concatenate(parts))
