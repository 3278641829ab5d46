"""Bit-exact map rendering: PPM (P6), one pixel per cell.

Legend: white = free, dark gray = unchanged obstacle (and out-of-building
space), light gray = undiscovered difference, red = difference the agent
correctly recovered.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .som import FREE, OCCUPIED, UNKNOWN

WHITE = (255, 255, 255)
DARK_GRAY = (64, 64, 64)
LIGHT_GRAY = (192, 192, 192)
RED = (255, 0, 0)


def write_ppm(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def render_occupancy(state: np.ndarray) -> np.ndarray:
    """Free white, occupied dark gray, unknown (belief grids) light gray."""
    img = np.empty(state.shape + (3,), dtype=np.uint8)
    img[:] = WHITE
    img[state == OCCUPIED] = DARK_GRAY
    img[state == UNKNOWN] = LIGHT_GRAY
    return img


def render_diff(prior_state: np.ndarray, truth_state: np.ndarray,
                belief_state: np.ndarray | None = None) -> np.ndarray:
    """Difference view: red where the belief recovered a real change,
    light gray for changes still undiscovered, dark gray for unchanged
    obstacles, white for unchanged free space."""
    star = prior_state != truth_state
    img = np.empty(prior_state.shape + (3,), dtype=np.uint8)
    img[:] = WHITE
    img[(truth_state == OCCUPIED) & ~star] = DARK_GRAY
    img[star] = LIGHT_GRAY
    if belief_state is not None:
        hat = belief_state != prior_state
        img[star & hat] = RED
    return img
