"""Episode execution: wires world, mapper, pose tracking and policy together
and produces the per-episode report."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mapping import (DEAD_RECKONING, ORACLE, BeliefMap, LocalMapConfig, PoseBelief,
                      build_local_map, register, update_pose)
from .metrics import (MetricsReport, RewardTrace, change_scores, combined_reward,
                      compute_metrics)
from .policy import (CONTINUE, NEW_GLOBAL, NEW_LOCAL, GlobalStrategy, GoalScoringConfig,
                     GoalSelector, NoPath, NoReachableGoal, PlannerConfig,
                     PolicySchedule, local_control, next_local_goal, plan,
                     should_resample)
from .som import (OCCUPIED, ClassTaxonomy, OutOfBounds, Pose2D, SemanticOccupancyMap,
                  collapse_to_occupancy, world_to_cell)
from .world import Action, NoiseModel, SensorConfig, WorldState, sense, step

log = logging.getLogger(__name__)

ORACLE_LOC = "oracle"
NOISY_LOC = "noisy"


@dataclass(frozen=True)
class EpisodeConfig:
    strategy: GlobalStrategy = field(default_factory=GlobalStrategy.combined)
    localization: str = NOISY_LOC
    budget_T: int = 1000
    seed: int = 0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    schedule: PolicySchedule = field(default_factory=PolicySchedule)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    scoring: GoalScoringConfig = field(default_factory=GoalScoringConfig)
    local_map_side: int = 101
    curve_stride: int = 50
    threshold: float = 0.5

    def __post_init__(self):
        if self.budget_T < 1:
            raise ValueError("budget_T must be >= 1")
        if self.localization not in (ORACLE_LOC, NOISY_LOC):
            raise ValueError(f"localization must be oracle or noisy, got {self.localization!r}")


@dataclass
class EpisodeResult:
    episode_id: str
    strategy: str
    localization: str
    seed: int
    metrics: MetricsReport
    reward_totals: dict
    steps_executed: int
    pose_error_max_m: float
    pose_error_mean_m: float
    trace: RewardTrace | None = None
    final_belief: BeliefMap | None = None

    def to_report(self) -> dict:
        m = self.metrics.to_dict()
        m["pose_error_max_m"] = self.pose_error_max_m
        m["pose_error_mean_m"] = self.pose_error_mean_m
        return {
            "episode_id": self.episode_id,
            "strategy": self.strategy,
            "localization": self.localization,
            "metrics": m,
            "reward_totals": self.reward_totals,
            "curves": [[t, a, i] for t, a, i in self.metrics.curves],
            "steps_executed": self.steps_executed,
            "seed": self.seed,
        }


def run_episode(prior_som: SemanticOccupancyMap, truth_som: SemanticOccupancyMap,
                taxonomy: ClassTaxonomy, start: Pose2D, cfg: EpisodeConfig,
                episode_id: str = "", keep_belief: bool = False,
                keep_trace: bool = False, frame_hook=None) -> EpisodeResult:
    """Run one exploration episode for cfg.budget_T steps (or until no
    reachable goal remains) and score the final belief."""
    ss = np.random.SeedSequence(cfg.seed)
    world_ss, policy_ss = ss.spawn(2)
    world = WorldState(truth_som, taxonomy, start, cfg.noise,
                       rng=np.random.default_rng(world_ss), threshold=cfg.threshold)
    policy_rng = np.random.default_rng(policy_ss)

    prior_occ = collapse_to_occupancy(prior_som, taxonomy, cfg.threshold)
    belief = BeliefMap.from_prior(prior_occ)
    explorable = truth_som.explorable_mask()
    truth_state = world.truth_occ.state
    selector = GoalSelector(prior_som, taxonomy, cfg.scoring, cfg.planner)
    local_cfg = LocalMapConfig(cfg.local_map_side, truth_som.cell_size_m)

    mode = ORACLE if cfg.localization == ORACLE_LOC else DEAD_RECKONING
    pb = PoseBelief(mode, start)

    trace = RewardTrace()
    curves: list[tuple[int, float, float]] = []
    pose_err_sum = 0.0
    pose_err_max = 0.0
    path: list[tuple[int, int]] | None = None
    waypoint: tuple[float, float] | None = None
    goal: tuple[int, int] | None = None
    # cells learned blocked from bump contacts; used for planning only, never
    # written into the scored belief (bumps are not occupancy observations)
    bump_blocked = np.zeros_like(belief.occupancy, dtype=bool)
    # believed-occupied + bump cells, for straight-line waypoint checks
    nav_blocked = np.ascontiguousarray(belief.occupancy == OCCUPIED, dtype=np.uint8)
    bumped = False
    steps = 0

    for t in range(cfg.budget_T):
        decision = should_resample(t, cfg.schedule, pb.estimate, waypoint, belief)
        if decision == CONTINUE and bumped:
            decision = NEW_LOCAL
        if decision == NEW_GLOBAL:
            try:
                goal = selector.select(belief, pb.estimate, cfg.strategy, policy_rng)
                path = _plan_from(belief, pb.estimate, goal, cfg.planner, bump_blocked)
            except NoReachableGoal:
                log.info("episode %s: no reachable goal at step %d", episode_id, t)
                break
            except NoPath:
                log.warning("episode %s: selected goal %s unplannable at step %d",
                            episode_id, goal, t)
                break
            waypoint, path = _choose_waypoint(path, pb.estimate, belief, nav_blocked,
                                              cfg.schedule.local_goal_radius_m)
        elif decision == NEW_LOCAL:
            # replan when the cached path runs through newly believed obstacles
            # or the agent is physically blocked; otherwise advance along it
            blocked = bumped or (waypoint is not None and _cell_occupied(belief, waypoint))
            if blocked and goal is not None:
                try:
                    path = _plan_from(belief, pb.estimate, goal, cfg.planner, bump_blocked)
                except NoPath:
                    path = None
                    waypoint = None
            if path:
                waypoint, path = _choose_waypoint(path, pb.estimate, belief, nav_blocked,
                                                  cfg.schedule.local_goal_radius_m)
        bumped = False

        if waypoint is None:
            waypoint = (pb.estimate.x_m, pb.estimate.y_m)
        d_prev = math.hypot(waypoint[0] - pb.estimate.x_m, waypoint[1] - pb.estimate.y_m)
        action = local_control(pb.estimate, waypoint)
        prev_true = world.true_pose
        _, odometry = step(world, action)
        if action == Action.FORWARD and \
                math.hypot(world.true_pose.x_m - prev_true.x_m,
                           world.true_pose.y_m - prev_true.y_m) < 0.01:
            bumped = True
            _mark_bump(bump_blocked, pb.estimate, belief.cell_size_m)
            _mark_bump(nav_blocked, pb.estimate, belief.cell_size_m)
        pb = update_pose(pb, odometry, world.true_pose)
        scan = sense(world, world.true_pose, cfg.sensor)
        local = build_local_map(scan, local_cfg)
        delta = register(belief, local, pb.estimate)
        nav_blocked[delta.cells[:, 1], delta.cells[:, 0]] = (
            (delta.new_occupancy == OCCUPIED)
            | bump_blocked[delta.cells[:, 1], delta.cells[:, 0]]).astype(np.uint8)

        expl_at = explorable[delta.cells[:, 1], delta.cells[:, 0]]
        truth_at = truth_state[delta.cells[:, 1], delta.cells[:, 0]]
        r_diff = int(np.count_nonzero((delta.new_occupancy == truth_at) & expl_at)
                     - np.count_nonzero((delta.old_occupancy == truth_at) & expl_at))
        r_exp = int(np.count_nonzero(delta.newly_seen & expl_at))
        r_glob = combined_reward(r_exp, r_diff, cfg.strategy.beta1, cfg.strategy.beta2)
        d_curr = math.hypot(waypoint[0] - pb.estimate.x_m, waypoint[1] - pb.estimate.y_m)
        trace.append(t, r_diff, r_exp, r_glob, d_prev - d_curr)

        err = math.hypot(pb.estimate.x_m - world.true_pose.x_m,
                         pb.estimate.y_m - world.true_pose.y_m)
        pose_err_sum += err
        pose_err_max = max(pose_err_max, err)
        steps = t + 1

        if steps % cfg.curve_stride == 0 or steps == cfg.budget_T:
            a, i = change_scores(prior_occ.state, truth_state, belief.occupancy, explorable)
            curves.append((steps, a, i))
            if frame_hook is not None:
                frame_hook(steps, belief)

    metrics = compute_metrics(prior_occ.state, truth_state, belief.occupancy,
                              belief.seen_mask(), explorable)
    metrics.curves = curves
    return EpisodeResult(
        episode_id=episode_id,
        strategy=cfg.strategy.kind,
        localization=cfg.localization,
        seed=cfg.seed,
        metrics=metrics,
        reward_totals=trace.totals(),
        steps_executed=steps,
        pose_error_max_m=pose_err_max,
        pose_error_mean_m=pose_err_sum / steps if steps else 0.0,
        trace=trace if keep_trace else None,
        final_belief=belief if keep_belief else None,
    )


def _plan_from(belief: BeliefMap, pose: Pose2D, goal: tuple[int, int],
               planner: PlannerConfig,
               extra_blocked: np.ndarray | None = None) -> list[tuple[int, int]]:
    au, av = _clamped_cell(belief, pose)
    path, _ = plan(belief, (au, av), goal, planner, extra_blocked=extra_blocked)
    return path


def _choose_waypoint(path, pose: Pose2D, belief: BeliefMap, nav_blocked: np.ndarray,
                     radius_m: float):
    """Waypoint for the local controller, plus the path trimmed to progress.

    Pure-pursuit flavored: trim the path to the cell nearest the pose (only
    within a short leading window, so loops far along the path don't match),
    take the farthest in-radius prefix cell from there, then back off along
    the path until the straight line from the pose is free of believed
    obstacles and bump contacts; the controller drives blind, so a waypoint
    across a believed wall corner would wedge the agent there. The path is
    not trimmed past the nearest cell: while the agent is stalled the
    waypoint stays put instead of creeping along the path.
    """
    s = belief.cell_size_m
    window = min(len(path), 12)
    best_i, best_d = 0, math.inf
    for i in range(window):
        x, y = _cell_center(path[i], belief)
        d = math.hypot(x - pose.x_m, y - pose.y_m)
        if d < best_d:
            best_i, best_d = i, d
    path = path[best_i:]

    (wx, wy), idx = next_local_goal(path, pose, belief, radius_m)
    uf0 = belief.width_cells // 2 + pose.x_m / s
    vf0 = belief.height_cells // 2 - pose.y_m / s
    for i in range(idx, 0, -1):
        x, y = _cell_center(path[i], belief)
        dist = math.hypot(x - pose.x_m, y - pose.y_m)
        if dist < 1e-9:
            return (x, y), path
        t_hit, hu, hv = _kernels.first_hit(
            nav_blocked, uf0, vf0, (x - pose.x_m) / (dist * s),
            (pose.y_m - y) / (dist * s), dist)
        if t_hit == np.inf or (int(hu), int(hv)) == tuple(path[i]):
            return (x, y), path
    if len(path) > 1:
        return _cell_center(path[1], belief), path
    return (wx, wy), path


def _mark_bump(blocked: np.ndarray, pose: Pose2D, cell_size_m: float) -> None:
    """Record the cells just ahead of a zero-displacement Forward as
    untraversable for the planner."""
    h, w = blocked.shape
    for dist in (cell_size_m, 2 * cell_size_m):
        x = pose.x_m + dist * math.cos(pose.theta_rad)
        y = pose.y_m + dist * math.sin(pose.theta_rad)
        u = int(math.floor(w // 2 + x / cell_size_m))
        v = int(math.floor(h // 2 - y / cell_size_m))
        if 0 <= u < w and 0 <= v < h:
            blocked[v, u] = True


def _cell_center(cell: tuple[int, int], grid) -> tuple[float, float]:
    return ((cell[0] - grid.width_cells // 2 + 0.5) * grid.cell_size_m,
            (grid.height_cells // 2 - cell[1] - 0.5) * grid.cell_size_m)


def _clamped_cell(belief: BeliefMap, pose: Pose2D) -> tuple[int, int]:
    u = int(np.clip(np.floor(belief.width_cells // 2 + pose.x_m / belief.cell_size_m),
                    0, belief.width_cells - 1))
    v = int(np.clip(np.floor(belief.height_cells // 2 - pose.y_m / belief.cell_size_m),
                    0, belief.height_cells - 1))
    return u, v


def _cell_occupied(belief: BeliefMap, waypoint: tuple[float, float]) -> bool:
    try:
        gu, gv = world_to_cell(waypoint, belief)
    except OutOfBounds:
        return True
    return bool(belief.occupancy[gv, gu] == OCCUPIED)
