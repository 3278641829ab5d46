#!/usr/bin/env python3
"""Trend study: how strategy and localization choices move the benchmark
metrics on a freshly generated dataset.

Runs a configurable matrix of (strategy x localization) over synthesized
episodes, in parallel, and prints per-configuration means. Useful both for
eyeballing benchmark behavior and for tuning dataset parameters.

    python3 scripts/trend_study.py --floors 6 --episodes 60 --budget 1000
"""

import argparse
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from spotdiff.dataset import generate_dataset, read_manifest
from spotdiff.layout import DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec
from spotdiff.policy import GlobalStrategy, GoalScoringConfig
from spotdiff.runner import EpisodeConfig, run_episode
from spotdiff.somio import read_som
from spotdiff.world import NoiseModel, SensorConfig

STRATEGIES = {
    "coverage": GlobalStrategy.coverage,
    "diff": GlobalStrategy.diff,
    "combined": GlobalStrategy.combined,
    "random": GlobalStrategy.random,
    "frontier": GlobalStrategy.frontier_nearest,
}


def acceptance_floorplan(seed: int, extent_m: float = 24.0) -> FloorplanSpec:
    return FloorplanSpec(
        seed=seed, extent_m=extent_m, rooms_min=9, rooms_max=13,
        corridor_width_m=1.0, min_room_m=3.0,
        furniture_density={"table": 1.2, "chair": 2.5, "sofa": 1.0,
                           "cabinet": 1.2, "plant": 1.0, "cushion": 1.2},
        object_size_range_m=(0.4, 1.1),
    )


def acceptance_episode_config(strategy: GlobalStrategy, localization: str,
                              budget: int, seed: int) -> EpisodeConfig:
    return EpisodeConfig(
        strategy=strategy, localization=localization, budget_T=budget, seed=seed,
        sensor=SensorConfig(n_rays=128, fov_deg=90, max_range_m=3.0),
        noise=NoiseModel(sigma_trans_m=0.005, sigma_rot_deg=0.1),
        scoring=GoalScoringConfig(sensing_radius_m=3.0),
    )


def _job(payload):
    episode, kind, beta1, beta2, localization, budget, seed = payload
    strategy = STRATEGIES[kind]() if kind != "combined" \
        else GlobalStrategy.combined(beta1, beta2)
    cfg = acceptance_episode_config(strategy, localization, budget, seed)
    prior = read_som(episode.prior_map)
    truth = read_som(episode.truth_map)
    res = run_episode(prior, truth, DEFAULT_TAXONOMY, episode.start, cfg,
                      episode_id=episode.id)
    m = res.metrics
    return (kind, localization, episode.id,
            (m.seen_pct, m.acc, m.iou_plus, m.iou_minus, m.iou,
             m.m_acc, m.m_iou_plus, m.m_iou_minus, m.m_iou))


def build_dataset(out: Path, floors: int, variants: int, seed: int, budget: int):
    specs = [acceptance_floorplan(seed + i) for i in range(floors)]
    generate_dataset(specs, out, variants_per_map=variants, episodes_per_variant=1,
                     manipulation=ManipulationSpec(seed=seed, p_remove=0.3,
                                                   p_displace=0.5),
                     budget_T=budget, base_seed=seed)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="/tmp/spotdiff_trend")
    ap.add_argument("--floors", type=int, default=6)
    ap.add_argument("--variants", type=int, default=10)
    ap.add_argument("--episodes", type=int, default=60)
    ap.add_argument("--budget", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--strategies", default="coverage,combined")
    ap.add_argument("--localizations", default="noisy")
    ap.add_argument("--beta1", type=float, default=1.0)
    ap.add_argument("--beta2", type=float, default=1e-2)
    args = ap.parse_args()

    out = Path(args.out)
    manifest = out / "manifest.json"
    if not manifest.exists():
        print("generating dataset ...")
        build_dataset(out, args.floors, args.variants, args.seed, args.budget)
    episodes = read_manifest(manifest)[:args.episodes]
    print(f"{len(episodes)} episodes")

    payloads = []
    for kind in args.strategies.split(","):
        for loc in args.localizations.split(","):
            for i, ep in enumerate(episodes):
                payloads.append((ep, kind, args.beta1, args.beta2, loc,
                                 args.budget, args.seed * 100003 + i))
    t0 = time.time()
    results = []
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        for r in pool.map(_job, payloads):
            results.append(r)
            if len(results) % 20 == 0:
                print(f"  {len(results)}/{len(payloads)} "
                      f"({time.time() - t0:.0f}s)")
    print(f"total {time.time() - t0:.0f}s")

    cols = ["seen", "acc", "iou+", "iou-", "iou", "macc", "miou+", "miou-", "miou"]
    for kind in args.strategies.split(","):
        for loc in args.localizations.split(","):
            rows = np.array([r[3] for r in results if r[0] == kind and r[1] == loc])
            if not len(rows):
                continue
            mean = rows.mean(axis=0)
            sem = rows.std(axis=0, ddof=1) / np.sqrt(len(rows))
            body = "  ".join(f"{c}={m:6.2f}+-{s:4.2f}"
                             for c, m, s in zip(cols, mean, sem))
            print(f"{kind:9s} {loc:6s} n={len(rows):3d}  {body}")


if __name__ == "__main__":
    main()
