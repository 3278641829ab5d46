"""Hierarchical navigation: global goal selection, A* planning, local goal
extraction along the path, and a reactive rotate-then-drive controller.

Global strategies score a coarse candidate grid by expected one-step gains:
  coverage_gain(g) = number of unseen explorable cells visible from g
  diff_gain(g)     = the same cells weighted by changeability
Visibility from a candidate is the union of cells traversed by evenly spaced
rays (default 180) of the sensing radius, stopping at believed-occupied
cells; unseen free space is transparent, not opaque. Scores are discounted
by straight-line distance and maximized via branch-and-bound with box-sum
upper bounds (beam-capped by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .gridops import connected_region, inflate
from .mapping import BeliefMap
from .som import (OCCUPIED, ClassTaxonomy, OutOfBounds, Pose2D,
                  SemanticOccupancyMap, world_to_cell)

NEW_GLOBAL = "new_global"
NEW_LOCAL = "new_local"
CONTINUE = "continue"

RANDOM = "random"
FRONTIER_NEAREST = "frontier"
COVERAGE_GREEDY = "coverage"
DIFF_GREEDY = "diff"
COMBINED_GREEDY = "combined"


class NoReachableGoal(Exception):
    """No traversable candidate is reachable from the agent."""


class NoPath(Exception):
    """A* found no route between the requested cells."""


@dataclass(frozen=True)
class GlobalStrategy:
    kind: str
    beta1: float = 1.0
    beta2: float = 0.01

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("strategy coefficients must be >= 0")

    @classmethod
    def random(cls):
        return cls(RANDOM, 1.0, 0.0)

    @classmethod
    def frontier_nearest(cls):
        return cls(FRONTIER_NEAREST, 1.0, 0.0)

    @classmethod
    def coverage(cls):
        return cls(COVERAGE_GREEDY, 1.0, 0.0)

    @classmethod
    def diff(cls):
        return cls(DIFF_GREEDY, 0.0, 1.0)

    @classmethod
    def combined(cls, beta1: float = 1.0, beta2: float = 0.01):
        return cls(COMBINED_GREEDY, beta1, beta2)

    def scoring_betas(self) -> tuple[float, float]:
        if self.kind == COVERAGE_GREEDY:
            return self.beta1, 0.0
        if self.kind == DIFF_GREEDY:
            return 0.0, self.beta2
        return self.beta1, self.beta2


@dataclass(frozen=True)
class PlannerConfig:
    # one cell beyond the agent radius: absorbs the one-cell registration band
    inflation_radius_cells: float = 3.0
    unknown_cost_mult: float = 1.5

    def __post_init__(self):
        if self.unknown_cost_mult < 1.0:
            raise ValueError("unknown_cost_mult must be >= 1")


@dataclass(frozen=True)
class PolicySchedule:
    global_period_steps: int = 25  # N
    local_goal_radius_m: float = 0.25
    reached_threshold_m: float = 0.15

    def __post_init__(self):
        if self.global_period_steps < 1:
            raise ValueError("global period must be >= 1")


@dataclass(frozen=True)
class GoalScoringConfig:
    candidate_grid: int = 240  # G: candidate stride is ceil(W / G)
    sensing_radius_m: float = 5.0  # R
    vis_directions: int = 180
    path_discount_per_cell: float = 0.02  # lambda
    changeable_weight: float = 1.0  # cells under movable-class prior objects
    # open prior-free space away from walls; None = same as changeable_weight
    open_space_weight: float | None = None
    base_weight: float = 0.1
    open_space_wall_distance_m: float = 0.5
    # Beam cap on exact visibility evaluations per selection. Candidates are
    # visited in decreasing upper-bound order, so the cap returns the best of
    # the top-bounded beam; None recovers the exact exhaustive argmax.
    max_exact_evals: int | None = 512


def changeability_weights(prior_som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
                          cfg: GoalScoringConfig = GoalScoringConfig(),
                          threshold: float = 0.5) -> np.ndarray:
    """Per-cell weight for diff_gain, derived from the outdated prior.

    Changeable weight where the prior shows a movable-class object,
    open-space weight on prior-free space farther than the wall-distance
    cutoff from any prior obstacle, base weight elsewhere.
    """
    taxonomy.check_matches(prior_som)
    movable = np.zeros((prior_som.height_cells, prior_som.width_cells), dtype=bool)
    for ch in taxonomy.movable_channels:
        movable |= prior_som.channel_mask(ch, threshold)
    occupied = np.zeros_like(movable)
    for ch in taxonomy.obstacle_channels:
        occupied |= prior_som.channel_mask(ch, threshold)
    occupied |= ~prior_som.explorable_mask()
    dist_m = ndimage.distance_transform_edt(~occupied) * prior_som.cell_size_m
    open_space = ~occupied & (dist_m > cfg.open_space_wall_distance_m)
    open_weight = (cfg.changeable_weight if cfg.open_space_weight is None
                   else cfg.open_space_weight)
    w = np.full(movable.shape, cfg.base_weight, dtype=np.float32)
    w[open_space] = open_weight
    w[movable] = cfg.changeable_weight
    return w


def _rim_directions(n: int) -> tuple[np.ndarray, np.ndarray]:
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.cos(ang), np.sin(ang)


def _exempt_start(traversable: np.ndarray, occupancy: np.ndarray, au: int, av: int,
                  radius_cells: float) -> None:
    """Mark the agent cell and the raw-free cells under its footprint
    traversable, so a pose inside the inflated band can still route out."""
    h, w = traversable.shape
    r = max(1, int(math.ceil(radius_cells)))
    v0, v1 = max(0, av - r), min(h, av + r + 1)
    u0, u1 = max(0, au - r), min(w, au + r + 1)
    traversable[v0:v1, u0:u1] |= occupancy[v0:v1, u0:u1] != OCCUPIED
    traversable[av, au] = True


def _box_sums(sat: np.ndarray, us: np.ndarray, vs: np.ndarray, r: int) -> np.ndarray:
    """Sum of the SAT'd grid over clipped (2r+1) boxes centered at (us, vs)."""
    h = sat.shape[0] - 1
    w = sat.shape[1] - 1
    v0 = np.clip(vs - r, 0, h)
    v1 = np.clip(vs + r + 1, 0, h)
    u0 = np.clip(us - r, 0, w)
    u1 = np.clip(us + r + 1, 0, w)
    return sat[v1, u1] - sat[v0, u1] - sat[v1, u0] + sat[v0, u0]


class GoalSelector:
    """Per-episode goal selection with cached prior-derived statics."""

    def __init__(self, prior_som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
                 scoring: GoalScoringConfig = GoalScoringConfig(),
                 planner: PlannerConfig = PlannerConfig()):
        self.scoring = scoring
        self.planner = planner
        w = prior_som.width_cells
        h = prior_som.height_cells
        self.stride = max(1, math.ceil(w / scoring.candidate_grid))
        cu = np.arange(0, w, self.stride)
        cv = np.arange(0, h, self.stride)
        grid_v, grid_u = np.meshgrid(cv, cu, indexing="ij")
        self.cand_us = grid_u.ravel()  # raster order: v-major
        self.cand_vs = grid_v.ravel()
        self.explorable = prior_som.explorable_mask()
        self.weights = changeability_weights(prior_som, taxonomy, scoring)
        self.radius_cells = scoring.sensing_radius_m / prior_som.cell_size_m
        self.rim_du, self.rim_dv = _rim_directions(scoring.vis_directions)
        self._stamp = np.zeros((h, w), dtype=np.int32)
        self._stamp_val = 0
        # Evaluated gains shrink over an episode (the unseen mass only
        # decays), so past exact evaluations act as upper bounds on later
        # calls. The small slack absorbs the rare visibility growth when a
        # believed wall is sensed away.
        self._cov_cache = np.full(self.cand_us.size, np.inf)
        self._diff_cache = np.full(self.cand_us.size, np.inf)
        self._cache_slack = 1.1
        self._cache_pad = 8.0

    def select(self, belief: BeliefMap, pose: Pose2D, strategy: GlobalStrategy,
               rng: np.random.Generator) -> tuple[int, int]:
        """Pick a global goal cell (u, v). Raises NoReachableGoal when no
        traversable candidate is connected to the agent."""
        try:
            au, av = world_to_cell(pose, belief)
        except OutOfBounds:
            # a badly drifted estimate still needs a goal; clamp to the map
            au = int(np.clip(belief.width_cells // 2 + pose.x_m / belief.cell_size_m,
                             0, belief.width_cells - 1))
            av = int(np.clip(belief.height_cells // 2 - pose.y_m / belief.cell_size_m,
                             0, belief.height_cells - 1))
        traversable = ~inflate(belief.occupancy == OCCUPIED,
                               self.planner.inflation_radius_cells)
        # the agent fits where it stands: its own cell and the raw-free cells
        # under its footprint stay escapable even inside the inflated band
        _exempt_start(traversable, belief.occupancy, au, av,
                      self.planner.inflation_radius_cells)
        reachable = connected_region(traversable, (au, av), connectivity=8)
        ok = reachable[self.cand_vs, self.cand_us]
        if not ok.any():
            raise NoReachableGoal("no reachable candidate cell")
        us = self.cand_us[ok]
        vs = self.cand_vs[ok]
        cand_idx = np.flatnonzero(ok)

        if strategy.kind == RANDOM:
            i = int(rng.integers(us.size))
            return int(us[i]), int(vs[i])
        if strategy.kind == FRONTIER_NEAREST:
            return self._frontier_nearest(belief, traversable, us, vs, au, av)
        return self._greedy(belief, strategy, us, vs, cand_idx, au, av)

    def _frontier_nearest(self, belief, traversable, us, vs, au, av):
        seen = belief.seen > 0
        free = belief.occupancy != OCCUPIED
        has_unseen_nb = ndimage.binary_dilation(~seen, structure=np.ones((3, 3), bool))
        frontier = seen & free & has_unseen_nb
        if frontier.any():
            # candidates whose stride-sized neighborhood touches the frontier
            size = 2 * self.stride + 1
            near = ndimage.maximum_filter(frontier.astype(np.uint8), size=size) > 0
            qual = near[vs, us]
            if qual.any():
                qu, qv = us[qual], vs[qual]
                d2 = (qu - au) ** 2 + (qv - av) ** 2
                order = np.lexsort((qu, qv, d2))
                return int(qu[order[0]]), int(qv[order[0]])
        # exhausted map (or frontier out of candidate reach): deterministic fallback
        order = np.lexsort((us, vs))
        return int(us[order[0]]), int(vs[order[0]])

    def _greedy(self, belief, strategy, us, vs, cand_idx, au, av):
        b1, b2 = strategy.scoring_betas()
        unseen_expl = (~belief.seen_mask()) & self.explorable
        cov_w = unseen_expl.astype(np.float32)
        diff_w = cov_w * self.weights
        # sight lines follow the current belief: believed obstacles occlude
        # (prior walls included until re-observed); unseen free space is
        # transparent rather than opaque
        blocked = (belief.occupancy == OCCUPIED).astype(np.uint8)

        r = int(math.ceil(self.radius_cells))
        cov_bound = np.zeros(us.size, dtype=np.float64)
        diff_bound = np.zeros(us.size, dtype=np.float64)
        if b1 > 0.0:
            sat = np.zeros((belief.height_cells + 1, belief.width_cells + 1), dtype=np.float64)
            np.cumsum(np.cumsum(cov_w, axis=0), axis=1, out=sat[1:, 1:])
            cov_bound = np.minimum(_box_sums(sat, us, vs, r),
                                   self._cov_cache[cand_idx])
        if b2 > 0.0:
            sat = np.zeros((belief.height_cells + 1, belief.width_cells + 1), dtype=np.float64)
            np.cumsum(np.cumsum(diff_w, axis=0), axis=1, out=sat[1:, 1:])
            diff_bound = np.minimum(_box_sums(sat, us, vs, r),
                                    self._diff_cache[cand_idx])
        bound = b1 * cov_bound + b2 * diff_bound
        pathlen = np.hypot(us.astype(np.float64) - au, vs.astype(np.float64) - av)
        discount = 1.0 + self.scoring.path_discount_per_cell * pathlen
        bound /= discount

        # branch and bound: candidates in decreasing-bound order, (v, u) inside
        # ties; stop once no remaining bound can beat or tie the best exact score
        order = np.lexsort((us, vs, -bound))
        best_score = -1.0
        best_uv = (int(us[order[0]]), int(vs[order[0]]))
        evals = 0
        cap = self.scoring.max_exact_evals
        for idx in order:
            uv = (int(us[idx]), int(vs[idx]))
            if bound[idx] < best_score:
                break
            if bound[idx] == 0.0:
                # every remaining candidate scores exactly 0; the first
                # zero-bound candidate in order has the lowest (v, u) of them
                if best_score < 0.0 or (best_score == 0.0 and
                                        (uv[1], uv[0]) < (best_uv[1], best_uv[0])):
                    best_score, best_uv = 0.0, uv
                break
            if cap is not None and evals >= cap:
                break
            evals += 1
            self._stamp_val += 1
            cov, diff = _kernels.visibility_gains(
                blocked, cov_w, diff_w, uv[0], uv[1],
                self.rim_du, self.rim_dv, self.radius_cells,
                self._stamp, self._stamp_val)
            ci = cand_idx[idx]
            self._cov_cache[ci] = cov * self._cache_slack + self._cache_pad
            self._diff_cache[ci] = diff * self._cache_slack + self._cache_pad
            score = (b1 * cov + b2 * diff) / discount[idx]
            if score > best_score or (score == best_score and
                                      (uv[1], uv[0]) < (best_uv[1], best_uv[0])):
                best_score = score
                best_uv = uv
        return best_uv


def select_global_goal(belief: BeliefMap, prior_som: SemanticOccupancyMap,
                       taxonomy: ClassTaxonomy, pose: Pose2D, strategy: GlobalStrategy,
                       rng: np.random.Generator,
                       scoring: GoalScoringConfig = GoalScoringConfig(),
                       planner: PlannerConfig = PlannerConfig()) -> tuple[int, int]:
    """One-shot convenience wrapper over GoalSelector."""
    return GoalSelector(prior_som, taxonomy, scoring, planner).select(
        belief, pose, strategy, rng)


def plan(belief: BeliefMap, start: tuple[int, int], goal: tuple[int, int],
         cfg: PlannerConfig = PlannerConfig(), extra_blocked: np.ndarray | None = None):
    """A* over the belief; returns (path as [(u, v), ...], cost).

    Free cells cost 1 (sqrt(2) diagonal), unseen cells 1.5x, believed
    obstacles inflated by the agent radius are impassable (as is anything in
    extra_blocked, e.g. bump-discovered contacts). The start cell is always
    treated as traversable. Raises NoPath.
    """
    blocked = inflate(belief.occupancy == OCCUPIED, cfg.inflation_radius_cells)
    if extra_blocked is not None:
        blocked |= extra_blocked
    traversable = ~blocked
    _exempt_start(traversable, belief.occupancy, start[0], start[1],
                  cfg.inflation_radius_cells)
    blocked = ~traversable
    unknown = (belief.seen == 0).astype(np.uint8)
    path_arr, cost = _kernels.astar_path(
        np.ascontiguousarray(blocked, dtype=np.uint8), unknown,
        int(start[0]), int(start[1]), int(goal[0]), int(goal[1]),
        float(cfg.unknown_cost_mult))
    if path_arr.shape[0] == 0:
        raise NoPath(f"no route from {start} to {goal}")
    return [(int(u), int(v)) for u, v in path_arr], float(cost)


def next_local_goal(path, pose: Pose2D, grid,
                    radius_m: float = 0.25) -> tuple[tuple[float, float], int]:
    """Waypoint along the path: the farthest cell of the contiguous path
    prefix whose centers all lie within radius_m of the pose (the first path
    cell when even that is out of range). Returns ((x, y), path index).

    The prefix rule keeps the waypoint on the near side of walls the path
    bends around; a plain nearest-within-radius pick could sit across a thin
    obstacle the path detours.
    """
    if not path:
        raise ValueError("empty path")
    idx = 0
    for i, (u, v) in enumerate(path):
        x = (u - grid.width_cells // 2 + 0.5) * grid.cell_size_m
        y = (grid.height_cells // 2 - v - 0.5) * grid.cell_size_m
        if math.hypot(x - pose.x_m, y - pose.y_m) <= radius_m:
            idx = i
        else:
            break
    u, v = path[idx]
    x = (u - grid.width_cells // 2 + 0.5) * grid.cell_size_m
    y = (grid.height_cells // 2 - v - 0.5) * grid.cell_size_m
    return (x, y), idx


def local_control(pose: Pose2D, waypoint: tuple[float, float],
                  bearing_tol_deg: float = 5.0) -> int:
    """Rotate toward the waypoint until roughly aligned, then drive.

    Ties at exactly 180 degrees bearing error turn left (counterclockwise).
    """
    from .world import Action  # local import to avoid a cycle at module load

    dx = waypoint[0] - pose.x_m
    dy = waypoint[1] - pose.y_m
    if dx == 0.0 and dy == 0.0:
        return Action.FORWARD
    bearing = math.degrees(math.atan2(dy, dx))
    err = (bearing - pose.theta_deg) % 360.0
    if err > 180.0:
        err -= 360.0
    if abs(err) > bearing_tol_deg:
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.FORWARD


def should_resample(t: int, schedule: PolicySchedule, pose: Pose2D,
                    local_goal: tuple[float, float] | None, belief: BeliefMap) -> str:
    """Resampling decision at the start of step t (t counted from 0)."""
    if t % schedule.global_period_steps == 0:
        return NEW_GLOBAL
    if local_goal is None:
        return NEW_LOCAL
    if math.hypot(local_goal[0] - pose.x_m, local_goal[1] - pose.y_m) \
            <= schedule.reached_threshold_m:
        return NEW_LOCAL
    try:
        gu, gv = world_to_cell(local_goal, belief)
    except OutOfBounds:
        return NEW_LOCAL
    if belief.occupancy[gv, gu] == OCCUPIED:
        return NEW_LOCAL
    return CONTINUE
