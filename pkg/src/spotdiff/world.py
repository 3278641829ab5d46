"""The embodied world: ground-truth occupancy, noisy kinematics with
collision truncation, and a raycast depth+semantic sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .gridops import inflate
from .som import (ClassTaxonomy, OccupancyGrid, Pose2D, SemanticOccupancyMap,
                  collapse_to_occupancy, world_to_cell, world_to_cell_float)

FORWARD_STEP_M = 0.25
TURN_DEG = 10.0
AGENT_RADIUS_M = 0.1
# How far short of the inflated boundary a truncated forward motion stops.
CONTACT_STANDOFF_M = 1e-3


class PoseInObstacle(Exception):
    """Sensing was requested from a pose inside an occupied cell."""


class Action:
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    ALL = (FORWARD, TURN_LEFT, TURN_RIGHT)


@dataclass(frozen=True)
class NoiseModel:
    """Truncated-Gaussian actuation/odometry noise.

    sigma_trans_m applies to translation components per Forward action,
    sigma_rot_deg to the heading change of every action. Draws are clipped
    at +/- truncation * sigma.
    """

    sigma_trans_m: float = 0.01
    sigma_rot_deg: float = 1.0
    truncation: float = 3.0
    seed: int | None = None

    def __post_init__(self):
        if self.sigma_trans_m < 0 or self.sigma_rot_deg < 0:
            raise ValueError("noise sigmas must be >= 0")

    def draw(self, rng: np.random.Generator, sigma: float) -> float:
        if sigma == 0.0:
            return 0.0
        return float(np.clip(rng.standard_normal() * sigma,
                             -self.truncation * sigma, self.truncation * sigma))


ZERO_NOISE = NoiseModel(0.0, 0.0)


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 128
    fov_deg: float = 90.0
    max_range_m: float = 5.0


@dataclass(frozen=True)
class DepthScan:
    """One sweep of the range sensor; rays ordered left-to-right across the fov.

    depths_m is np.inf where a ray reached max range without a hit;
    hit_channels is -1 there (and where the hit cell has no dominant
    obstacle class, e.g. out-of-building space).
    """

    n_rays: int
    fov_deg: float
    max_range_m: float
    depths_m: np.ndarray
    hit_channels: np.ndarray

    def relative_angles_deg(self) -> np.ndarray:
        return _relative_angles(self.n_rays, self.fov_deg)


def _relative_angles(n_rays: int, fov_deg: float) -> np.ndarray:
    """Ray bearings relative to heading, leftmost (+fov/2) first."""
    if n_rays == 1:
        return np.zeros(1)
    return np.linspace(fov_deg / 2.0, -fov_deg / 2.0, n_rays)


class WorldState:
    """Per-episode mutable world: truth maps, true pose, rng stream.

    The truth maps are immutable; only the pose and rng advance. One
    WorldState must not be shared across episodes.
    """

    def __init__(self, truth_som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
                 start: Pose2D, noise: NoiseModel = ZERO_NOISE,
                 rng: np.random.Generator | None = None,
                 agent_radius_m: float = AGENT_RADIUS_M, threshold: float = 0.5):
        self.truth_som = truth_som
        self.taxonomy = taxonomy
        self.noise = noise
        self.truth_occ: OccupancyGrid = collapse_to_occupancy(truth_som, taxonomy, threshold)
        self._occ_u8 = np.ascontiguousarray(self.truth_occ.occupied_mask(), dtype=np.uint8)
        radius_cells = agent_radius_m / truth_som.cell_size_m
        self._inflated_u8 = np.ascontiguousarray(
            inflate(self._occ_u8.astype(bool), radius_cells), dtype=np.uint8)
        self._dominant = _dominant_obstacle_channel(truth_som, taxonomy)
        self.rng = rng if rng is not None else np.random.default_rng(noise.seed)
        u, v = world_to_cell(start, self.truth_occ)
        if self._inflated_u8[v, u]:
            raise ValueError(f"start pose {start} is inside the inflated obstacle region")
        self.true_pose = start

    @property
    def cell_size_m(self) -> float:
        return self.truth_som.cell_size_m


def _dominant_obstacle_channel(som: SemanticOccupancyMap, taxonomy: ClassTaxonomy) -> np.ndarray:
    """Per-cell argmax obstacle channel, -1 where every obstacle channel is 0."""
    obstacle = taxonomy.obstacle_channels
    if not obstacle:
        return np.full((som.height_cells, som.width_cells), -1, dtype=np.int16)
    stack = som.values[list(obstacle)]
    best = np.argmax(stack, axis=0)
    dom = np.asarray(obstacle, dtype=np.int16)[best]
    dom[stack.max(axis=0) == 0] = -1
    return dom


def step(world: WorldState, action: int, noise: NoiseModel | None = None):
    """Execute one action; returns (new true pose, odometry).

    Forward motion is swept along the (noise-perturbed) heading and truncated
    just short of the first agent-radius-inflated obstacle, so bumping is a
    legal outcome and the pose always stays on free space. Odometry reports
    the actual displacement in the pre-action body frame, corrupted by an
    independent noise draw per component.
    """
    if noise is None:
        noise = world.noise
    rng = world.rng
    prev = world.true_pose

    if action == Action.FORWARD:
        eps_rot = noise.draw(rng, noise.sigma_rot_deg)
        eps_trans = noise.draw(rng, noise.sigma_trans_m)
        theta = prev.theta_deg + eps_rot
        intent = max(0.0, FORWARD_STEP_M + eps_trans)
        dist = _swept_distance(world, prev.x_m, prev.y_m, theta, intent)
        rad = math.radians(theta)
        new = Pose2D(prev.x_m + dist * math.cos(rad), prev.y_m + dist * math.sin(rad), theta)
    elif action == Action.TURN_LEFT:
        eps_rot = noise.draw(rng, noise.sigma_rot_deg)
        new = Pose2D(prev.x_m, prev.y_m, prev.theta_deg + TURN_DEG + eps_rot)
    elif action == Action.TURN_RIGHT:
        eps_rot = noise.draw(rng, noise.sigma_rot_deg)
        new = Pose2D(prev.x_m, prev.y_m, prev.theta_deg - TURN_DEG + eps_rot)
    else:
        raise ValueError(f"unknown action {action}")

    world.true_pose = new

    dx_w = new.x_m - prev.x_m
    dy_w = new.y_m - prev.y_m
    dtheta = _wrap_deg(new.theta_deg - prev.theta_deg)
    # body frame of the pre-action pose
    c, s = math.cos(prev.theta_rad), math.sin(prev.theta_rad)
    dx_b = c * dx_w + s * dy_w
    dy_b = -s * dx_w + c * dy_w

    if action == Action.FORWARD:
        odo = (dx_b + noise.draw(rng, noise.sigma_trans_m),
               dy_b + noise.draw(rng, noise.sigma_trans_m),
               dtheta + noise.draw(rng, noise.sigma_rot_deg))
    else:
        odo = (dx_b, dy_b, dtheta + noise.draw(rng, noise.sigma_rot_deg))
    return new, odo


def _swept_distance(world: WorldState, x: float, y: float, theta_deg: float,
                    intent_m: float) -> float:
    """Distance the agent may travel before contacting the inflated obstacle set."""
    if intent_m <= 0.0:
        return 0.0
    s = world.cell_size_m
    som = world.truth_som
    uf0, vf0 = world_to_cell_float(x, y, som.width_cells, som.height_cells, s)
    rad = math.radians(theta_deg)
    t_hit, _, _ = _kernels.first_hit(world._inflated_u8, float(uf0), float(vf0),
                                     math.cos(rad) / s, -math.sin(rad) / s, intent_m)
    if t_hit == np.inf:
        return intent_m
    return max(0.0, t_hit - CONTACT_STANDOFF_M)


def sense(world: WorldState, pose: Pose2D, cfg: SensorConfig = SensorConfig()) -> DepthScan:
    """Raycast a depth+semantic scan from `pose` over the truth map.

    Each ray reports the distance to the boundary of the first occupied cell
    it enters (DDA traversal), plus that cell's dominant obstacle channel.
    """
    som = world.truth_som
    s = som.cell_size_m
    u, v = world_to_cell(pose, som)
    if world._occ_u8[v, u]:
        raise PoseInObstacle(f"pose {pose} lies in an occupied cell ({u}, {v})")
    angles = np.deg2rad(pose.theta_deg + _relative_angles(cfg.n_rays, cfg.fov_deg))
    dufs = np.cos(angles) / s
    dvfs = -np.sin(angles) / s
    uf0, vf0 = world_to_cell_float(pose.x_m, pose.y_m, som.width_cells, som.height_cells, s)
    depths, hit_us, hit_vs = _kernels.raycast_scan(
        world._occ_u8, float(uf0), float(vf0), dufs, dvfs, cfg.max_range_m)
    hit_channels = np.full(cfg.n_rays, -1, dtype=np.int16)
    hits = hit_us >= 0
    hit_channels[hits] = world._dominant[hit_vs[hits], hit_us[hits]]
    return DepthScan(cfg.n_rays, cfg.fov_deg, cfg.max_range_m, depths, hit_channels)


def _wrap_deg(angle: float) -> float:
    """Wrap to (-180, 180]."""
    a = angle % 360.0
    if a > 180.0:
        a -= 360.0
    return a
