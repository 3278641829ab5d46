import numpy as np
import pytest

from spotdiff.dataset import sample_start
from spotdiff.layout import (DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec,
                             manipulate, synthesize_floorplan)
from spotdiff.metrics import difference_reward
from spotdiff.policy import GlobalStrategy
from spotdiff.runner import EpisodeConfig, run_episode
from spotdiff.som import collapse_to_occupancy
from spotdiff.world import NoiseModel, SensorConfig


@pytest.fixture(scope="module")
def scene():
    truth = synthesize_floorplan(FloorplanSpec(seed=17, extent_m=7.0, rooms_min=2,
                                               rooms_max=3, min_room_m=1.8))
    prior, _ = manipulate(truth, DEFAULT_TAXONOMY, ManipulationSpec(seed=23))
    start = sample_start(truth, DEFAULT_TAXONOMY, np.random.default_rng(4))
    return prior, truth, start


def quick_cfg(**kw):
    kw.setdefault("strategy", GlobalStrategy.combined())
    kw.setdefault("budget_T", 150)
    kw.setdefault("seed", 21)
    kw.setdefault("sensor", SensorConfig(n_rays=64, max_range_m=2.0))
    kw.setdefault("noise", NoiseModel(0.005, 0.2))
    return EpisodeConfig(**kw)


def test_executes_exact_budget(scene):
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start, quick_cfg())
    assert res.steps_executed == 150
    assert len(res.trace.t if res.trace else []) == 0  # trace not kept by default


def test_reward_telescoping(scene):
    # sum of per-step difference rewards == final match - initial match;
    # sum of coverage rewards == final seen count (explorable)
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(budget_T=200), keep_belief=True, keep_trace=True)
    expl = truth.explorable_mask()
    prior_occ = collapse_to_occupancy(prior, DEFAULT_TAXONOMY)
    truth_occ = collapse_to_occupancy(truth, DEFAULT_TAXONOMY)
    belief = res.final_belief
    want_diff = difference_reward(prior_occ.state, belief.occupancy,
                                  truth_occ.state, expl)
    assert res.reward_totals["r_diff"] == want_diff
    assert res.reward_totals["r_exp"] == int((belief.seen_mask() & expl).sum())


def test_oracle_localization_zero_pose_error(scene):
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(localization="oracle"))
    assert res.pose_error_max_m == 0.0


def test_noisy_localization_accumulates_error(scene):
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(localization="noisy", budget_T=300))
    assert res.pose_error_max_m > 0.0


def test_deterministic_reports(scene):
    prior, truth, start = scene
    a = run_episode(prior, truth, DEFAULT_TAXONOMY, start, quick_cfg())
    b = run_episode(prior, truth, DEFAULT_TAXONOMY, start, quick_cfg())
    assert a.to_report() == b.to_report()


def test_curves_sampled_on_stride(scene):
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(budget_T=120, curve_stride=50))
    assert [t for t, _, _ in res.metrics.curves] == [50, 100, 120]


def test_seen_pct_monotone_across_curve_samples(scene):
    prior, truth, start = scene
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(budget_T=300), keep_trace=True)
    # coverage rewards are >= 0, so cumulative seen counts are monotone
    assert all(r >= 0 for r in res.trace.r_exp)


def test_report_schema(scene):
    prior, truth, start = scene
    rep = run_episode(prior, truth, DEFAULT_TAXONOMY, start,
                      quick_cfg(budget_T=60)).to_report()
    assert set(rep) == {"episode_id", "strategy", "localization", "metrics",
                        "reward_totals", "curves", "steps_executed", "seed"}
    assert set(rep["reward_totals"]) == {"r_diff", "r_exp", "r_global", "r_local"}
    for key in ("seen_pct", "acc", "iou", "pose_error_max_m"):
        assert key in rep["metrics"]
