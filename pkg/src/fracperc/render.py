"""Binary PPM rendering of planar survival trees."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UnsupportedDimension
from .grid import SurvivalTree

FILLED = 0
BLANK = 255


def raster(tree: SurvivalTree, pixels: int, level: int | None = None) -> np.ndarray:
    """Boolean ``(pixels, pixels)`` mask, row 0 at the top (largest y).

    A pixel is filled iff its center lies in a retained cube of ``level``
    (default: deepest).  The test is done in integers: pixel ``i`` maps to
    cell ``floor((2i + 1) C / (2P))`` with ``C`` cells and ``P`` pixels.
    """
    if tree.d != 2:
        raise UnsupportedDimension(f"raster output needs d=2, got d={tree.d}")
    if pixels < 1:
        raise ValueError("pixels must be >= 1")
    level = tree.depth if level is None else level
    C = tree.scales.cells(level)
    cell = (2 * np.arange(pixels, dtype=object) + 1) * C // (2 * pixels)
    cell = cell.astype(np.int64)
    occupied = tree.coords[level]
    keys = occupied[:, 0] * C + occupied[:, 1]
    grid_x, grid_y = np.meshgrid(cell, cell[::-1])
    return np.isin(grid_x * C + grid_y, keys)


def render_ppm(tree: SurvivalTree, pixels: int, level: int | None = None) -> bytes:
    mask = raster(tree, pixels, level)
    img = np.where(mask, FILLED, BLANK).astype(np.uint8)
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    return f"P6\n{pixels} {pixels}\n255\n".encode() + rgb.tobytes()


def render_image(tree: SurvivalTree, pixels: int, path) -> Path:
    path = Path(path)
    path.write_bytes(render_ppm(tree, pixels))
    return path


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a binary PPM written by :func:`render_ppm` into ``(h, w, 3)`` uint8."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], np.uint8).reshape(h, w, 3)
