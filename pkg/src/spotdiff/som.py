"""Core map data model: semantic occupancy maps, occupancy grids, taxonomies,
coordinate transforms and difference maps.

Conventions used throughout the package:
  * grids are numpy arrays indexed [v, u] (row, column); rows grow southward
  * world coordinates are meters, x east-positive, y north-positive, with the
    origin at the map center
  * cell (u, v) covers world x in [(u - W//2)*s, (u - W//2 + 1)*s) and
    y in ((H//2 - v - 1)*s, (H//2 - v)*s], so cell centers sit at half-cell
    offsets from the origin
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

# Occupancy states (int8 grids).
FREE = 0
OCCUPIED = 1
UNKNOWN = 2

# Difference labels (int8 grids).
UNCHANGED = 0
ADDED = 1
REMOVED = 2
NOT_EXPLORABLE = 3


class OutOfBounds(Exception):
    """World point or cell index falls outside the map."""


class DimensionMismatch(Exception):
    """Two grids that must share dimensions do not."""


class TaxonomyMismatch(Exception):
    """Taxonomy channel count disagrees with the map's channel count."""


class ClassAction(Enum):
    """Manipulation rule attached to a semantic class."""

    NO_OP = "no_op"
    REMOVAL = "removal"
    DISPLACEMENT = "displacement"
    OVERLAP_REMOVAL = "overlap_removal"


MOVABLE_ACTIONS = (ClassAction.REMOVAL, ClassAction.DISPLACEMENT, ClassAction.OVERLAP_REMOVAL)


@dataclass(frozen=True)
class Pose2D:
    """Agent pose: position in meters, heading in degrees (0 = east, CCW positive)."""

    x_m: float
    y_m: float
    theta_deg: float

    def __post_init__(self):
        object.__setattr__(self, "theta_deg", float(self.theta_deg) % 360.0)

    @property
    def theta_rad(self) -> float:
        return np.deg2rad(self.theta_deg)


@dataclass(frozen=True)
class TaxonomyEntry:
    index: int
    name: str
    action: ClassAction
    obstacle: bool


@dataclass(frozen=True)
class ClassTaxonomy:
    """Per-channel semantic classes with their manipulation action and obstacle flag.

    Entries must cover channel indices 0..C-2 exactly; channel C-1 of the
    governing map is the explorable-space mask and carries no entry.
    """

    entries: tuple[TaxonomyEntry, ...]

    def __post_init__(self):
        idx = sorted(e.index for e in self.entries)
        if idx != list(range(len(self.entries))):
            raise ValueError(f"taxonomy indices must cover 0..{len(self.entries) - 1} exactly, got {idx}")
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: e.index)))

    @property
    def num_channels(self) -> int:
        """Channel count of a matching map, explorable channel included."""
        return len(self.entries) + 1

    def channels_with_action(self, *actions: ClassAction) -> tuple[int, ...]:
        return tuple(e.index for e in self.entries if e.action in actions)

    @property
    def obstacle_channels(self) -> tuple[int, ...]:
        return tuple(e.index for e in self.entries if e.obstacle)

    @property
    def movable_channels(self) -> tuple[int, ...]:
        return self.channels_with_action(*MOVABLE_ACTIONS)

    def entry(self, channel: int) -> TaxonomyEntry:
        return self.entries[channel]

    def check_matches(self, som: "SemanticOccupancyMap") -> None:
        if som.channels != self.num_channels:
            raise TaxonomyMismatch(
                f"taxonomy describes {self.num_channels} channels, map has {som.channels}"
            )


def quantize(p: np.ndarray) -> np.ndarray:
    """Probabilities in [0,1] -> uint8 via round(p*255)."""
    return np.round(np.asarray(p, dtype=np.float64) * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class SemanticOccupancyMap:
    """W x H x C grid of per-class occupancy, 8-bit quantized (value/255).

    Channel C-1 is the explorable-space mask (1 = explorable). Instances are
    immutable; derive modified maps through copy-and-update.
    """

    values: np.ndarray  # uint8, shape (C, H, W), channel-major
    cell_size_m: float = 0.05
    taxonomy_ref: str = "default"

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.uint8)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"values must be a non-empty (C, H, W) array, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "cell_size_m", float(self.cell_size_m))

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, cell_size_m: float = 0.05,
                           taxonomy_ref: str = "default") -> "SemanticOccupancyMap":
        return cls(quantize(probs), cell_size_m, taxonomy_ref)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height_cells(self) -> int:
        return self.values.shape[1]

    @property
    def width_cells(self) -> int:
        return self.values.shape[2]

    def channel_probs(self, channel: int) -> np.ndarray:
        return self.values[channel].astype(np.float64) / 255.0

    def explorable_mask(self) -> np.ndarray:
        """Boolean (H, W) mask of explorable cells (last channel >= 0.5)."""
        return self.values[-1] >= 128

    def channel_mask(self, channel: int, threshold: float = 0.5) -> np.ndarray:
        return self.values[channel].astype(np.float64) >= threshold * 255.0

    def with_values(self, values: np.ndarray) -> "SemanticOccupancyMap":
        return SemanticOccupancyMap(values, self.cell_size_m, self.taxonomy_ref)


@dataclass(frozen=True)
class OccupancyGrid:
    """Single-channel occupancy. Ground truth uses {FREE, OCCUPIED}; belief
    snapshots may additionally carry UNKNOWN."""

    state: np.ndarray  # int8, shape (H, W)
    cell_size_m: float = 0.05

    def __post_init__(self):
        s = np.ascontiguousarray(self.state, dtype=np.int8)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ValueError(f"state must be a non-empty (H, W) array, got shape {s.shape}")
        s.flags.writeable = False
        object.__setattr__(self, "state", s)

    @property
    def height_cells(self) -> int:
        return self.state.shape[0]

    @property
    def width_cells(self) -> int:
        return self.state.shape[1]

    def occupied_mask(self) -> np.ndarray:
        return self.state == OCCUPIED

    def free_mask(self) -> np.ndarray:
        return self.state == FREE


@dataclass(frozen=True)
class DifferenceMap:
    """Per-cell change labels between a prior and a truth occupancy grid."""

    labels: np.ndarray  # int8, shape (H, W), values in {UNCHANGED, ADDED, REMOVED, NOT_EXPLORABLE}

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.int8)
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))

    @property
    def changed_mask(self) -> np.ndarray:
        return (self.labels == ADDED) | (self.labels == REMOVED)


# ---------------------------------------------------------------------------
# coordinate transforms


def world_to_cell(point, grid) -> tuple[int, int]:
    """World point (meters) -> (u, v) cell indices; origin at the map center.

    `point` is a Pose2D or an (x_m, y_m) pair; `grid` anything exposing
    width_cells/height_cells/cell_size_m. Raises OutOfBounds outside the map.
    """
    if isinstance(point, Pose2D):
        x, y = point.x_m, point.y_m
    else:
        x, y = float(point[0]), float(point[1])
    s = grid.cell_size_m
    w, h = grid.width_cells, grid.height_cells
    u = int(np.floor(w // 2 + x / s))
    v = int(np.floor(h // 2 - y / s))
    if not (0 <= u < w and 0 <= v < h):
        raise OutOfBounds(f"world point ({x}, {y}) maps to cell ({u}, {v}) outside {w}x{h} grid")
    return u, v


def cell_to_world(u: int, v: int, grid) -> tuple[float, float]:
    """(u, v) cell indices -> world coordinates of the cell center."""
    s = grid.cell_size_m
    w, h = grid.width_cells, grid.height_cells
    if not (0 <= u < w and 0 <= v < h):
        raise OutOfBounds(f"cell ({u}, {v}) outside {w}x{h} grid")
    x = (u - w // 2 + 0.5) * s
    y = (h // 2 - v - 0.5) * s
    return x, y


def world_to_cell_float(x, y, width_cells: int, height_cells: int, cell_size_m: float):
    """Vectorized transform to continuous grid coordinates (no bounds check).

    floor() of the result gives cell indices; used by registration and raycasts.
    """
    uf = width_cells // 2 + np.asarray(x) / cell_size_m
    vf = height_cells // 2 - np.asarray(y) / cell_size_m
    return uf, vf


def cell_centers_world(us: np.ndarray, vs: np.ndarray, width_cells: int, height_cells: int,
                       cell_size_m: float):
    xs = (us - width_cells // 2 + 0.5) * cell_size_m
    ys = (height_cells // 2 - vs - 0.5) * cell_size_m
    return xs, ys


# ---------------------------------------------------------------------------
# occupancy collapse and difference maps


def collapse_to_occupancy(som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
                          threshold: float = 0.5) -> OccupancyGrid:
    """Collapse semantic channels to a single {FREE, OCCUPIED} grid.

    A cell is OCCUPIED iff any obstacle-flagged channel reaches `threshold`
    there (ties count as occupied), or the cell is not explorable
    (out-of-building space is non-traversable).
    """
    taxonomy.check_matches(som)
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    occ = np.zeros((som.height_cells, som.width_cells), dtype=bool)
    for ch in taxonomy.obstacle_channels:
        occ |= som.values[ch] >= threshold * 255.0
    occ |= ~som.explorable_mask()
    return OccupancyGrid(np.where(occ, OCCUPIED, FREE).astype(np.int8), som.cell_size_m)


def diff_maps(prior: OccupancyGrid, truth: OccupancyGrid, explorable: np.ndarray) -> DifferenceMap:
    """Label each cell Added / Removed / Unchanged, NotExplorable off-mask."""
    if prior.state.shape != truth.state.shape or prior.state.shape != explorable.shape:
        raise DimensionMismatch(
            f"prior {prior.state.shape}, truth {truth.state.shape}, explorable {explorable.shape}"
        )
    labels = np.full(prior.state.shape, UNCHANGED, dtype=np.int8)
    added = (prior.state == FREE) & (truth.state == OCCUPIED)
    removed = (prior.state == OCCUPIED) & (truth.state == FREE)
    labels[added] = ADDED
    labels[removed] = REMOVED
    labels[~explorable] = NOT_EXPLORABLE
    return DifferenceMap(labels)
