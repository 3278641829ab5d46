"""Small shared grid utilities: disk inflation and connectivity queries."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def disk_structure(radius_cells: float) -> np.ndarray:
    """Boolean disk footprint: offsets with Euclidean norm <= radius_cells."""
    r = int(np.floor(radius_cells))
    if r < 1:
        return np.ones((1, 1), dtype=bool)
    axis = np.arange(-r, r + 1)
    dv, du = np.meshgrid(axis, axis, indexing="ij")
    return du * du + dv * dv <= radius_cells * radius_cells


def inflate(occupied: np.ndarray, radius_cells: float) -> np.ndarray:
    """Dilate an occupied mask by a disk of the given radius (in cells)."""
    occupied = np.asarray(occupied, dtype=bool)
    if radius_cells <= 0:
        return occupied.copy()
    return ndimage.binary_dilation(occupied, structure=disk_structure(radius_cells))


def connected_region(mask: np.ndarray, seed_uv: tuple[int, int], connectivity: int = 8) -> np.ndarray:
    """Cells of `mask` connected to seed (u, v); all-false if seed is off-mask."""
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    lab, _ = ndimage.label(mask, structure=structure)
    u, v = seed_uv
    seed_lab = lab[v, u]
    if seed_lab == 0:
        return np.zeros_like(mask, dtype=bool)
    return lab == seed_lab


def count_components(mask: np.ndarray, connectivity: int = 4) -> int:
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    _, n = ndimage.label(mask, structure=structure)
    return int(n)
