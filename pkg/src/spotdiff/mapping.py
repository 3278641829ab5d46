"""Egocentric local maps, registration into the global belief, and pose
tracking (oracle or dead-reckoned)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .som import (FREE, OCCUPIED, OccupancyGrid, Pose2D, SemanticOccupancyMap,
                  world_to_cell_float)
from .world import DepthScan

ORACLE = "oracle"
DEAD_RECKONING = "dead_reckoning"


@dataclass(frozen=True)
class LocalMapConfig:
    side_cells: int = 101  # V
    cell_size_m: float = 0.05


@dataclass(frozen=True)
class LocalMap:
    """Agent-centric occupancy wedge: heading points up, agent at the
    bottom-center cell. occupied is meaningful only where explored."""

    occupied: np.ndarray  # uint8 (V, V)
    explored: np.ndarray  # uint8 (V, V)
    cell_size_m: float

    @property
    def side_cells(self) -> int:
        return self.occupied.shape[0]


def build_local_map(scan: DepthScan, cfg: LocalMapConfig = LocalMapConfig()) -> LocalMap:
    """Rasterize a scan: free cells strictly before each hit, the hit cell
    occupied, NoHit rays free out to max range; everything else unknown."""
    v_side = cfg.side_cells
    s = cfg.cell_size_m
    occ = np.zeros((v_side, v_side), dtype=np.uint8)
    explored = np.zeros((v_side, v_side), dtype=np.uint8)
    # anchor: center of the bottom-center cell
    uf0 = v_side // 2 + 0.5
    vf0 = (v_side - 1) + 0.5
    rel = np.deg2rad(scan.relative_angles_deg())
    dufs = -np.sin(rel) / s  # positive bearing = left = decreasing u
    dvfs = -np.cos(rel) / s  # forward = decreasing v
    _kernels.rasterize_scan(occ, explored, uf0, vf0, dufs, dvfs,
                            scan.depths_m, scan.max_range_m)
    return LocalMap(occ, explored, s)


class BeliefMap:
    """The agent's evolving occupancy belief plus the episode seen-mask.

    Initialized from the outdated prior; unseen cells always hold exactly the
    prior's value because registration only writes observed cells. Mutable,
    episode-local; snapshot() hands out frozen copies.
    """

    def __init__(self, occupancy: np.ndarray, cell_size_m: float,
                 seen: np.ndarray | None = None):
        self.occupancy = np.ascontiguousarray(occupancy, dtype=np.int8)
        self.cell_size_m = float(cell_size_m)
        if seen is None:
            seen = np.zeros(self.occupancy.shape, dtype=np.uint8)
        self.seen = np.ascontiguousarray(seen, dtype=np.uint8)
        if self.seen.shape != self.occupancy.shape:
            raise ValueError("seen mask shape must match occupancy")

    @classmethod
    def from_prior(cls, prior: OccupancyGrid) -> "BeliefMap":
        return cls(prior.state.copy(), prior.cell_size_m)

    @property
    def height_cells(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width_cells(self) -> int:
        return self.occupancy.shape[1]

    def snapshot(self) -> OccupancyGrid:
        return OccupancyGrid(self.occupancy.copy(), self.cell_size_m)

    def seen_mask(self) -> np.ndarray:
        return self.seen.astype(bool)

    def to_som(self) -> SemanticOccupancyMap:
        """Two-channel export (occupancy, seen) for SOM1 serialization."""
        values = np.stack([
            np.where(self.occupancy == OCCUPIED, 255, 0).astype(np.uint8),
            np.where(self.seen > 0, 255, 0).astype(np.uint8),
        ])
        return SemanticOccupancyMap(values, self.cell_size_m, taxonomy_ref="belief")


@dataclass(frozen=True)
class RegistrationDelta:
    """Unique belief cells touched by one registration, with before/after
    values; lets the episode loop account rewards incrementally."""

    cells: np.ndarray  # (n, 2) of (u, v)
    old_occupancy: np.ndarray  # (n,) int8
    new_occupancy: np.ndarray  # (n,) int8
    newly_seen: np.ndarray  # (n,) bool

    @classmethod
    def empty(cls) -> "RegistrationDelta":
        return cls(np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int8),
                   np.empty(0, dtype=np.int8), np.empty(0, dtype=bool))


def register(belief: BeliefMap, local: LocalMap, est_pose: Pose2D) -> RegistrationDelta:
    """Write a local map into the belief at the estimated pose.

    Observed cells overwrite the belief and extend the seen mask;
    projections landing outside the map are dropped. When several local
    cells project onto one global cell the last write (raster order over the
    local map) wins, deterministically.
    """
    vs, us = np.nonzero(local.explored)
    if vs.size == 0:
        return RegistrationDelta.empty()
    v_side = local.side_cells
    s = local.cell_size_m
    right = (us - v_side // 2) * s
    forward = ((v_side - 1) - vs) * s
    c, si = math.cos(est_pose.theta_rad), math.sin(est_pose.theta_rad)
    wx = est_pose.x_m + forward * c + right * si
    wy = est_pose.y_m + forward * si - right * c
    uf, vf = world_to_cell_float(wx, wy, belief.width_cells, belief.height_cells, s)
    gu = np.floor(uf).astype(np.int64)
    gv = np.floor(vf).astype(np.int64)
    ok = (gu >= 0) & (gu < belief.width_cells) & (gv >= 0) & (gv < belief.height_cells)
    gu, gv = gu[ok], gv[ok]
    if gu.size == 0:
        return RegistrationDelta.empty()
    values = np.where(local.occupied[vs[ok], us[ok]] > 0, OCCUPIED, FREE).astype(np.int8)

    flat = gv * belief.width_cells + gu
    uniq, first = np.unique(flat, return_index=True)
    old = belief.occupancy.ravel()[uniq].copy()
    was_seen = belief.seen.ravel()[uniq] > 0

    belief.occupancy[gv, gu] = values
    belief.seen[gv, gu] = 1

    new = belief.occupancy.ravel()[uniq]
    cells = np.stack([uniq % belief.width_cells, uniq // belief.width_cells], axis=1)
    return RegistrationDelta(cells, old, new.copy(), ~was_seen)


@dataclass(frozen=True)
class PoseBelief:
    """Tracked pose: oracle copies the true pose, dead reckoning composes
    odometry in the current estimate's frame."""

    mode: str
    estimate: Pose2D
    steps: int = 0

    def __post_init__(self):
        if self.mode not in (ORACLE, DEAD_RECKONING):
            raise ValueError(f"unknown localization mode {self.mode!r}")


def update_pose(pb: PoseBelief, odometry: tuple[float, float, float],
                true_pose: Pose2D) -> PoseBelief:
    if pb.mode == ORACLE:
        return replace(pb, estimate=true_pose, steps=pb.steps + 1)
    dx, dy, dtheta = odometry
    c, s = math.cos(pb.estimate.theta_rad), math.sin(pb.estimate.theta_rad)
    est = Pose2D(pb.estimate.x_m + dx * c - dy * s,
                 pb.estimate.y_m + dx * s + dy * c,
                 pb.estimate.theta_deg + dtheta)
    return replace(pb, estimate=est, steps=pb.steps + 1)
