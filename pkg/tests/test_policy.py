import heapq
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spotdiff.gridops import inflate
from spotdiff.layout import DEFAULT_TAXONOMY, FloorplanSpec, synthesize_floorplan
from spotdiff.mapping import BeliefMap
from spotdiff.policy import (CONTINUE, NEW_GLOBAL, NEW_LOCAL, GlobalStrategy,
                             GoalScoringConfig, GoalSelector, NoPath, PlannerConfig,
                             PolicySchedule, changeability_weights, local_control,
                             next_local_goal, plan, should_resample)
from spotdiff.som import FREE, OCCUPIED, Pose2D, collapse_to_occupancy
from spotdiff.world import Action

SQRT2 = math.sqrt(2.0)


def belief_of(state, seen=None, cell=0.05):
    state = np.asarray(state, dtype=np.int8)
    b = BeliefMap(state, cell)
    if seen is not None:
        b.seen = np.asarray(seen, dtype=np.uint8)
    else:
        b.seen = np.ones_like(b.seen)
    return b


def dijkstra_cost(blocked, unknown, start, goal, mult):
    """Independent oracle: heapq Dijkstra over the planner's cost model."""
    h, w = blocked.shape
    dist = {start: 0.0}
    pq = [(0.0, start)]
    done = set()
    while pq:
        d, node = heapq.heappop(pq)
        if node in done:
            continue
        done.add(node)
        if node == goal:
            return d
        u, v = node
        for du in (-1, 0, 1):
            for dv in (-1, 0, 1):
                if du == 0 and dv == 0:
                    continue
                nu, nv = u + du, v + dv
                if not (0 <= nu < w and 0 <= nv < h) or blocked[nv, nu]:
                    continue
                base = SQRT2 if du and dv else 1.0
                cost = base * (mult if unknown[nv, nu] else 1.0)
                nd = d + cost
                if nd < dist.get((nu, nv), math.inf):
                    dist[(nu, nv)] = nd
                    heapq.heappush(pq, (nd, (nu, nv)))
    return math.inf


class TestPlan:
    def test_straight_corridor(self):
        state = np.full((3, 11), OCCUPIED, dtype=np.int8)
        state[1, :] = FREE
        b = belief_of(state)
        path, cost = plan(b, (0, 1), (10, 1), PlannerConfig(inflation_radius_cells=0))
        assert len(path) == 11
        assert cost == pytest.approx(10.0)
        assert path[0] == (0, 1) and path[-1] == (10, 1)

    def test_enclosed_goal_has_no_path(self):
        state = np.zeros((9, 9), dtype=np.int8)
        state[3:6, 3:6] = OCCUPIED
        state[4, 4] = FREE
        b = belief_of(state)
        with pytest.raises(NoPath):
            plan(b, (0, 0), (4, 4), PlannerConfig(inflation_radius_cells=0))

    def test_occupied_goal_has_no_path(self):
        state = np.zeros((5, 5), dtype=np.int8)
        state[2, 2] = OCCUPIED
        with pytest.raises(NoPath):
            plan(belief_of(state), (0, 0), (2, 2), PlannerConfig(inflation_radius_cells=0))

    def test_cost_matches_dijkstra_oracle(self):
        # acceptance: A* == Dijkstra on 500 random 20x20 belief grids
        rng = np.random.default_rng(4242)
        cfg = PlannerConfig(inflation_radius_cells=0, unknown_cost_mult=1.5)
        checked = 0
        for _ in range(500):
            state = (rng.random((20, 20)) < 0.25).astype(np.int8) * OCCUPIED
            seen = rng.random((20, 20)) < 0.7
            b = belief_of(state, seen)
            free = np.argwhere(state == FREE)
            s = tuple(free[rng.integers(len(free))][::-1])
            g = tuple(free[rng.integers(len(free))][::-1])
            blocked = state == OCCUPIED
            blocked[s[1], s[0]] = False
            want = dijkstra_cost(blocked, ~seen, s, g, 1.5)
            try:
                _, got = plan(b, s, g, cfg)
            except NoPath:
                got = math.inf
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-9)
                checked += 1
        assert checked > 300

    def test_cost_never_below_euclidean(self):
        rng = np.random.default_rng(7)
        cfg = PlannerConfig(inflation_radius_cells=0)
        for _ in range(50):
            state = (rng.random((15, 15)) < 0.2).astype(np.int8) * OCCUPIED
            free = np.argwhere(state == FREE)
            s = tuple(free[rng.integers(len(free))][::-1])
            g = tuple(free[rng.integers(len(free))][::-1])
            try:
                _, cost = plan(belief_of(state), s, g, cfg)
            except NoPath:
                continue
            assert cost >= math.hypot(g[0] - s[0], g[1] - s[1]) - 1e-9

    def test_path_avoids_inflated_cells(self):
        state = np.zeros((15, 15), dtype=np.int8)
        state[7, 7] = OCCUPIED
        cfg = PlannerConfig(inflation_radius_cells=2.0)
        path, _ = plan(belief_of(state), (0, 7), (14, 7), cfg)
        blocked = inflate(state == OCCUPIED, 2.0)
        assert not any(blocked[v, u] for u, v in path[1:])

    def test_start_equals_goal(self):
        b = belief_of(np.zeros((5, 5), dtype=np.int8))
        path, cost = plan(b, (2, 2), (2, 2), PlannerConfig(inflation_radius_cells=0))
        assert path == [(2, 2)] and cost == 0.0


class TestNextLocalGoal:
    def grid(self):
        return belief_of(np.zeros((41, 41), dtype=np.int8))

    def test_prefix_rule(self):
        g = self.grid()
        pose = Pose2D(0.025, 0.025, 0.0)  # near cell (20, 19)
        path = [(20, 19), (21, 19), (24, 19), (26, 19)]
        (x, y), idx = next_local_goal(path, pose, g, 0.25)
        assert idx == 2  # (24,19) at 0.2 m; (26,19) at 0.3 m is out
        assert (x, y) == pytest.approx((0.225, 0.025))

    def test_first_cell_when_none_in_radius(self):
        g = self.grid()
        pose = Pose2D(-0.9, 0.0, 0.0)
        path = [(20, 20), (21, 20)]
        (_, _), idx = next_local_goal(path, pose, g, 0.25)
        assert idx == 0

    def test_standing_on_goal(self):
        g = self.grid()
        path = [(20, 20)]
        (x, y), idx = next_local_goal(path, Pose2D(0.025, -0.025, 0), g, 0.25)
        assert idx == 0
        assert (x, y) == pytest.approx((0.025, -0.025))

    def test_waypoints_stay_within_radius_along_path(self):
        g = self.grid()
        path, _ = plan(g, (2, 2), (38, 30), PlannerConfig(inflation_radius_cells=0))
        pose = Pose2D(*__import__("spotdiff.som", fromlist=["cell_to_world"])
                      .cell_to_world(2, 2, g), 0.0)
        remaining = path
        for _ in range(60):
            (x, y), idx = next_local_goal(remaining, pose, g, 0.25)
            assert math.hypot(x - pose.x_m, y - pose.y_m) <= 0.25 + 1e-9
            if idx == len(remaining) - 1:
                break
            remaining = remaining[idx:]
            pose = Pose2D(x, y, 0.0)


class TestLocalControl:
    def test_waypoint_dead_ahead(self):
        assert local_control(Pose2D(0, 0, 0), (1.0, 0.0)) == Action.FORWARD

    def test_waypoint_directly_behind_turns_left(self):
        assert local_control(Pose2D(0, 0, 0), (-1.0, 0.0)) == Action.TURN_LEFT

    def test_waypoint_to_the_right(self):
        assert local_control(Pose2D(0, 0, 90.0), (1.0, 0.0)) == Action.TURN_RIGHT

    def test_small_bearing_error_drives(self):
        assert local_control(Pose2D(0, 0, 4.0), (1.0, 0.0)) == Action.FORWARD

    def test_closed_loop_reaches_random_waypoints(self):
        # open space: every waypoint within 0.5 m reached in <= 60 actions
        rng = np.random.default_rng(11)
        for _ in range(100):
            pose = Pose2D(0.0, 0.0, float(rng.uniform(0, 360)))
            wx = float(rng.uniform(-0.5, 0.5))
            wy = float(rng.uniform(-0.5, 0.5))
            for _step in range(60):
                if math.hypot(wx - pose.x_m, wy - pose.y_m) <= 0.15:
                    break
                a = local_control(pose, (wx, wy))
                if a == Action.FORWARD:
                    r = pose.theta_rad
                    pose = Pose2D(pose.x_m + 0.25 * math.cos(r),
                                  pose.y_m + 0.25 * math.sin(r), pose.theta_deg)
                elif a == Action.TURN_LEFT:
                    pose = Pose2D(pose.x_m, pose.y_m, pose.theta_deg + 10)
                else:
                    pose = Pose2D(pose.x_m, pose.y_m, pose.theta_deg - 10)
            assert math.hypot(wx - pose.x_m, wy - pose.y_m) <= 0.15


class TestShouldResample:
    SCHED = PolicySchedule(global_period_steps=25)

    def test_new_global_every_period(self):
        b = belief_of(np.zeros((5, 5), dtype=np.int8))
        assert should_resample(25, self.SCHED, Pose2D(0, 0, 0), (1.0, 1.0), b) == NEW_GLOBAL
        assert should_resample(0, self.SCHED, Pose2D(0, 0, 0), (1.0, 1.0), b) == NEW_GLOBAL

    def test_goal_cell_turned_occupied(self):
        state = np.zeros((41, 41), dtype=np.int8)
        state[10, 30] = OCCUPIED
        b = belief_of(state)
        wp = ((30 - 20 + 0.5) * 0.05, (20 - 10 - 0.5) * 0.05)
        assert should_resample(7, self.SCHED, Pose2D(0, 0, 0), wp, b) == NEW_LOCAL

    def test_reached_goal(self):
        b = belief_of(np.zeros((41, 41), dtype=np.int8))
        assert should_resample(7, self.SCHED, Pose2D(0, 0, 0), (0.1, 0.0), b) == NEW_LOCAL

    def test_mid_period_continue(self):
        b = belief_of(np.zeros((41, 41), dtype=np.int8))
        assert should_resample(7, self.SCHED, Pose2D(0, 0, 0), (0.9, 0.0), b) == CONTINUE


def exhaustive_goal_oracle(selector, belief, pose, strategy):
    """Independent reimplementation of the greedy scoring: exhaustive, per
    candidate, per ray, in plain Python."""
    from spotdiff.gridops import connected_region
    au, av = int(belief.width_cells // 2 + pose.x_m / belief.cell_size_m), \
             int(belief.height_cells // 2 - pose.y_m / belief.cell_size_m)
    traversable = ~inflate(belief.occupancy == OCCUPIED,
                           selector.planner.inflation_radius_cells)
    traversable[av, au] = True
    reachable = connected_region(traversable, (au, av), 8)

    seen = belief.seen_mask()
    unseen_expl = (~seen) & selector.explorable
    blocked = belief.occupancy == OCCUPIED
    b1, b2 = strategy.scoring_betas()
    r = selector.radius_cells
    n = selector.scoring.vis_directions
    best = None
    for vi in range(0, belief.height_cells, selector.stride):
        for ui in range(0, belief.width_cells, selector.stride):
            if not reachable[vi, ui]:
                continue
            visible = {(ui, vi)}
            for k in range(n):
                ang = 2 * math.pi * k / n
                du, dv = math.cos(ang), math.sin(ang)
                uf, vf = ui + 0.5, vi + 0.5
                # replicate the kernel's boundary-stepping traversal
                u, v = ui, vi
                su = 1 if du > 0 else -1
                sv = 1 if dv > 0 else -1
                tdu = abs(1.0 / du) if du else math.inf
                tdv = abs(1.0 / dv) if dv else math.inf
                tmu = ((u + (su > 0)) - uf) / du if du else math.inf
                tmv = ((v + (sv > 0)) - vf) / dv if dv else math.inf
                while True:
                    if tmu <= tmv:
                        t, u, tmu = tmu, u + su, tmu + tdu
                    else:
                        t, v, tmv = tmv, v + sv, tmv + tdv
                    if t > r or not (0 <= u < belief.width_cells
                                     and 0 <= v < belief.height_cells):
                        break
                    if blocked[v, u]:
                        break
                    visible.add((u, v))
            cov = sum(1.0 for (u, v) in visible if unseen_expl[v, u])
            diff = sum(float(selector.weights[v, u]) for (u, v) in visible
                       if unseen_expl[v, u])
            score = (b1 * cov + b2 * diff) / (
                1.0 + selector.scoring.path_discount_per_cell
                * math.hypot(ui - au, vi - av))
            key = (-score, vi, ui)
            if best is None or key < best[0]:
                best = (key, (ui, vi))
    return best[1]


class TestSelectGlobalGoal:
    def unexplored_room_setup(self):
        som = synthesize_floorplan(FloorplanSpec(seed=31, extent_m=6.0, rooms_min=2,
                                                 rooms_max=2, min_room_m=2.0))
        occ = collapse_to_occupancy(som, DEFAULT_TAXONOMY)
        belief = BeliefMap.from_prior(occ)
        return som, occ, belief

    def scoring(self, **kw):
        kw.setdefault("sensing_radius_m", 1.5)
        kw.setdefault("vis_directions", 90)
        kw.setdefault("max_exact_evals", None)
        return GoalScoringConfig(**kw)

    def test_matches_exhaustive_oracle(self):
        som, occ, belief = self.unexplored_room_setup()
        # mark one half of the floor seen: the unexplored room should attract
        belief.seen[:, :som.width_cells // 2] = 1
        sel = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring())
        pose = Pose2D(-1.0, 0.0, 0.0)
        for strategy in (GlobalStrategy.coverage(), GlobalStrategy.diff(),
                         GlobalStrategy.combined(1.0, 0.01)):
            got = sel_fresh = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()) \
                .select(belief, pose, strategy, np.random.default_rng(0))
            want = exhaustive_goal_oracle(sel, belief, pose, strategy)
            assert got == want

    def test_goal_lands_near_unseen_cells(self):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[:, :som.width_cells // 2] = 1
        sel = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring())
        gu, gv = sel.select(belief, Pose2D(-1.0, 0.0, 0.0),
                            GlobalStrategy.coverage(), np.random.default_rng(0))
        unseen = (~belief.seen_mask()) & som.explorable_mask()
        vs, us = np.nonzero(unseen)
        d = np.hypot(us - gu, vs - gv).min()
        assert d <= sel.radius_cells

    def test_fully_seen_degenerates_to_lowest_vu(self):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[:, :] = 1
        sel = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring())
        got = sel.select(belief, Pose2D(0.0, 0.0, 0.0), GlobalStrategy.coverage(),
                         np.random.default_rng(0))
        # lowest (v, u) among reachable candidates (same reachability notion:
        # inflated obstacles, the agent footprint exempted)
        from spotdiff.gridops import connected_region
        au = av = som.width_cells // 2
        traversable = ~inflate(belief.occupancy == OCCUPIED, 2.0)
        free = belief.occupancy != OCCUPIED
        traversable[av - 2:av + 3, au - 2:au + 3] |= free[av - 2:av + 3, au - 2:au + 3]
        traversable[av, au] = True
        reachable = connected_region(traversable, (au, av), 8)
        cands = [(v, u) for v in range(0, som.height_cells, sel.stride)
                 for u in range(0, som.width_cells, sel.stride) if reachable[v, u]]
        want_v, want_u = min(cands)
        assert got == (want_u, want_v)

    def test_combined_beta2_zero_equals_coverage(self):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[::3, ::2] = 1
        pose = Pose2D(0.5, -0.5, 0.0)
        for b1 in (0.5, 1.0, 7.0):
            a = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
                belief, pose, GlobalStrategy.combined(b1, 0.0), np.random.default_rng(0))
            b = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
                belief, pose, GlobalStrategy.coverage(), np.random.default_rng(0))
            assert a == b

    def test_combined_beta1_zero_equals_diff(self):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[::2, ::5] = 1
        pose = Pose2D(0.5, -0.5, 0.0)
        a = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
            belief, pose, GlobalStrategy.combined(0.0, 3.0), np.random.default_rng(0))
        b = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
            belief, pose, GlobalStrategy.diff(), np.random.default_rng(0))
        assert a == b

    @settings(max_examples=12, deadline=None)
    @given(st.integers(-6, 6))
    def test_scale_invariance_powers_of_two(self, k):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[:som.height_cells // 3, :] = 1
        pose = Pose2D(0.0, 1.0, 0.0)
        scale = 2.0 ** k
        a = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
            belief, pose, GlobalStrategy.combined(1.0, 0.01), np.random.default_rng(0))
        b = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
            belief, pose, GlobalStrategy.combined(scale, 0.01 * scale),
            np.random.default_rng(0))
        assert a == b

    def test_random_uniform_over_reachable_and_deterministic(self):
        som, occ, belief = self.unexplored_room_setup()
        sel = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring())
        a = sel.select(belief, Pose2D(0, 0, 0), GlobalStrategy.random(),
                       np.random.default_rng(123))
        b = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring()).select(
            belief, Pose2D(0, 0, 0), GlobalStrategy.random(),
            np.random.default_rng(123))
        assert a == b

    def test_frontier_nearest_targets_boundary(self):
        som, occ, belief = self.unexplored_room_setup()
        belief.seen[:, :som.width_cells // 2] = 1
        sel = GoalSelector(som, DEFAULT_TAXONOMY, self.scoring())
        gu, gv = sel.select(belief, Pose2D(-1.5, 0.0, 0.0),
                            GlobalStrategy.frontier_nearest(), np.random.default_rng(0))
        # the seen/unseen boundary is the vertical mid line; the goal hugs it
        assert abs(gu - som.width_cells // 2) <= 4 * sel.stride


def test_changeability_weights_structure(small_pair, taxonomy):
    prior, truth, _ = small_pair
    w = changeability_weights(prior, taxonomy)
    movable = np.zeros(w.shape, dtype=bool)
    for ch in taxonomy.movable_channels:
        movable |= prior.channel_mask(ch)
    assert (w[movable] == 1.0).all()
    occupied = collapse_to_occupancy(prior, taxonomy).occupied_mask()
    near_wall = occupied | ~prior.explorable_mask()
    from scipy import ndimage
    close = ndimage.binary_dilation(near_wall, iterations=3) & ~near_wall & ~movable
    assert np.allclose(w[close], 0.1)
