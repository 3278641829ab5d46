"""Connected-component labeling of per-channel binary masks.

Components are the unit the layout manipulator works on: one component =
one object instance. Labeling is deterministic: ids follow first-encounter
raster order and cell lists are raster-ordered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .som import ClassAction, ClassTaxonomy, SemanticOccupancyMap

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ObjectComponent:
    channel: int
    component_id: int
    cells: tuple[tuple[int, int], ...]  # (u, v), raster order
    bbox: tuple[int, int, int, int]  # u_min, v_min, u_max, v_max (inclusive)
    area_cells: int
    movable: bool = True

    def cell_array(self) -> np.ndarray:
        """Cells as an (n, 2) int array of (u, v) pairs."""
        return np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)


def label_components(mask: np.ndarray, connectivity: int = 8, *, channel: int = 0,
                     movable: bool = True) -> list[ObjectComponent]:
    """Partition the true cells of `mask` into connected components.

    connectivity 8 joins diagonal neighbors, 4 does not. Empty mask gives [].
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or min(mask.shape) < 1:
        raise ValueError(f"mask must be a non-empty 2-d array, got shape {mask.shape}")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    lab, n = ndimage.label(mask, structure=structure)
    if n == 0:
        return []

    vs, us = np.nonzero(mask)  # raster order
    labs = lab[vs, us]
    sort_idx = np.argsort(labs, kind="stable")  # stable: raster order kept inside groups
    boundaries = np.flatnonzero(np.diff(labs[sort_idx])) + 1
    groups = np.split(sort_idx, boundaries)
    groups.sort(key=lambda g: g[0])  # first-encounter raster order

    comps = []
    for cid, g in enumerate(groups):
        cu = us[g]
        cv = vs[g]
        cells = tuple(zip(cu.tolist(), cv.tolist()))
        bbox = (int(cu.min()), int(cv.min()), int(cu.max()), int(cv.max()))
        comps.append(ObjectComponent(channel, cid, cells, bbox, len(cells), movable))
    return comps


def extract_objects(som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
                    threshold: float = 0.5) -> dict[int, list[ObjectComponent]]:
    """Label every semantic channel of `som` (connectivity 8).

    NoOperation channels are labeled too (overlap queries need them) but
    their components carry movable=False.
    """
    taxonomy.check_matches(som)
    out: dict[int, list[ObjectComponent]] = {}
    for entry in taxonomy.entries:
        mask = som.channel_mask(entry.index, threshold)
        out[entry.index] = label_components(
            mask, 8, channel=entry.index, movable=entry.action is not ClassAction.NO_OP
        )
    return out
