# src/stainreg/transform/io.py
import logging
import os

import numpy as np

from stainreg.data.atomic import atomic_write_text
from stainreg.errors import ArgumentError, UnreadableInputError, ValidationError
from stainreg.transform.geometry import AffineTransform, CompositeTransform, DisplacementGrid
from stainreg.util import format_float

_log = logging.getLogger(__name__)


def format_transform(transform: CompositeTransform) -> str:
    """
    Text form, one record per line:
    `affine a11 a12 a21 a22 tx ty`, then optionally `grid gw gh h ox oy`
    followed by gw * gh lines `u1 u2` in row-major node order.
    """
    a = transform.affine
    lines = ["affine " + " ".join(format_float(v) for v in (a.a11, a.a12, a.a21, a.a22, a.tx, a.ty))]
    grid = transform.deform
    if grid is not None:
        lines.append(
            f"grid {grid.gw} {grid.gh} {format_float(grid.h)} "
            f"{format_float(grid.origin[0])} {format_float(grid.origin[1])}"
        )
        lines.extend(f"{format_float(u1)} {format_float(u2)}" for u1, u2 in zip(grid.u1.ravel(), grid.u2.ravel()))
    return "\n".join(lines) + "\n"


def _floats(fields: list[str], expected: int, row: int, what: str) -> list[float]:
    if len(fields) != expected:
        raise ValidationError(f"{what} record needs {expected} values, found {len(fields)}", row)
    try:
        return [float(v) for v in fields]
    except ValueError:
        raise ValidationError(f"{what} record has a non-numeric value", row) from None


def parse_transform(text: str) -> CompositeTransform:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ValidationError("Transform file is empty", 1)

    head = lines[0].split()
    if not head or head[0] != "affine":
        raise ValidationError("First record must start with 'affine'", 1)
    try:
        affine = AffineTransform(*_floats(head[1:], 6, 1, "affine"))
    except ArgumentError as e:
        raise ValidationError(str(e), 1) from e
    if len(lines) == 1:
        return CompositeTransform(affine)

    header = lines[1].split()
    if not header or header[0] != "grid":
        raise ValidationError("Second record must start with 'grid'", 2)
    gw_f, gh_f, h, ox, oy = _floats(header[1:], 5, 2, "grid")
    if gw_f != int(gw_f) or gh_f != int(gh_f) or gw_f < 1 or gh_f < 1:
        raise ValidationError("Grid node counts must be positive integers", 2)
    gw, gh = int(gw_f), int(gh_f)

    nodes = lines[2:]
    if len(nodes) != gw * gh:
        raise ValidationError(f"Expected {gw * gh} node records, found {len(nodes)}", 3 + min(len(nodes), gw * gh))
    values = np.array([_floats(line.split(), 2, row, "node") for row, line in enumerate(nodes, start=3)])
    try:
        grid = DisplacementGrid(values[:, 0].reshape(gh, gw), values[:, 1].reshape(gh, gw), h, (ox, oy))
    except ArgumentError as e:
        raise ValidationError(str(e), 2) from e
    return CompositeTransform(affine, grid)


def write_transform(transform: CompositeTransform, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_transform(transform))


def read_transform(path: str | os.PathLike) -> CompositeTransform:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as file:
            text = file.read()
    except OSError as e:
        raise UnreadableInputError(path, e) from e
    try:
        transform = parse_transform(text)
    except ValidationError as e:
        _log.warning("Invalid transform file %s: %s", path, e)
        raise
    _log.debug("Read transform from %s (deformable: %s)", path, transform.deform is not None)
    return transform
