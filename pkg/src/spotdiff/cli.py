"""Command-line harness: dataset generation, episode execution, benchmark
matrices and map rendering.

Exit codes: 0 success, 2 configuration error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import Episode, NoFreeCell, generate_dataset, read_manifest
from .layout import DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec, SynthesisFailed
from .mapping import BeliefMap
from .metrics import MetricsReport
from .policy import (COMBINED_GREEDY, COVERAGE_GREEDY, DIFF_GREEDY, FRONTIER_NEAREST,
                     RANDOM, GlobalStrategy, GoalScoringConfig, PlannerConfig,
                     PolicySchedule)
from .render import render_diff, render_occupancy, write_ppm
from .runner import NOISY_LOC, ORACLE_LOC, EpisodeConfig, run_episode
from .som import FREE, OCCUPIED, ClassTaxonomy, collapse_to_occupancy
from .somio import read_som, read_taxonomy, write_som
from .world import NoiseModel, SensorConfig

log = logging.getLogger("spotdiff")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

SIZE_PRESETS = {"desk": 24.0, "small": 48.0, "large": 100.0}
POLICIES = (RANDOM, FRONTIER_NEAREST, COVERAGE_GREEDY, DIFF_GREEDY, COMBINED_GREEDY)
LOCALIZATIONS = (ORACLE_LOC, NOISY_LOC)

# Table column order for benchmark summaries.
SUMMARY_COLUMNS = MetricsReport.COLUMNS
SUMMARY_HEADERS = ("Seen [%]", "Acc.", "IoU+", "IoU-", "IoU",
                   "mAcc.", "mIoU+", "mIoU-", "mIoU")


class ConfigError(Exception):
    pass


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return cfg


def _setting(args, config: dict, key: str, default):
    """Flag > config file > default."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    return config.get(key, default)


def _strategy(name: str, beta1: float, beta2: float) -> GlobalStrategy:
    if name == RANDOM:
        return GlobalStrategy.random()
    if name == FRONTIER_NEAREST:
        return GlobalStrategy.frontier_nearest()
    if name == COVERAGE_GREEDY:
        return GlobalStrategy.coverage()
    if name == DIFF_GREEDY:
        return GlobalStrategy.diff()
    if name == COMBINED_GREEDY:
        return GlobalStrategy.combined(beta1, beta2)
    raise ConfigError(f"unknown policy {name!r}; choose from {POLICIES}")


def _dataclass_from(config: dict, key: str, cls):
    try:
        return cls(**config.get(key, {}))
    except TypeError as e:
        raise ConfigError(f"bad {key!r} section in config: {e}")


def _episode_config(args, config: dict, strategy: GlobalStrategy, localization: str,
                    budget: int, seed: int) -> EpisodeConfig:
    return EpisodeConfig(
        strategy=strategy,
        localization=localization,
        budget_T=budget,
        seed=seed,
        sensor=_dataclass_from(config, "sensor", SensorConfig),
        noise=_dataclass_from(config, "noise", NoiseModel),
        schedule=_dataclass_from(config, "schedule", PolicySchedule),
        planner=_dataclass_from(config, "planner", PlannerConfig),
        scoring=_dataclass_from(config, "scoring", GoalScoringConfig),
        local_map_side=int(config.get("local_map_side", 101)),
        curve_stride=int(config.get("curve_stride", 50)),
    )


# ---------------------------------------------------------------------------
# episode workers

_SOM_CACHE: dict[str, object] = {}


def _cached_som(path: str):
    som = _SOM_CACHE.get(path)
    if som is None:
        som = read_som(path)
        if len(_SOM_CACHE) > 8:
            _SOM_CACHE.clear()
        _SOM_CACHE[path] = som
    return som


def _run_job(payload: dict) -> dict:
    """Execute one episode (worker-side); returns the report dict."""
    episode: Episode = payload["episode"]
    cfg: EpisodeConfig = payload["cfg"]
    taxonomy: ClassTaxonomy = payload["taxonomy"]
    render_dir = payload.get("render_dir")

    prior = _cached_som(episode.prior_map)
    truth = _cached_som(episode.truth_map)

    frame_hook = None
    if render_dir:
        prior_state = collapse_to_occupancy(prior, taxonomy).state
        truth_state = collapse_to_occupancy(truth, taxonomy).state
        frames = Path(render_dir) / episode.id
        frames.mkdir(parents=True, exist_ok=True)

        def frame_hook(t: int, belief: BeliefMap):
            img = render_diff(prior_state, truth_state, belief.occupancy)
            write_ppm(img, frames / f"step{t:05d}.ppm")

    result = run_episode(prior, truth, taxonomy, episode.start, cfg,
                         episode_id=episode.id, keep_belief=bool(render_dir),
                         frame_hook=frame_hook)
    if render_dir and result.final_belief is not None:
        write_som(result.final_belief.to_som(),
                  Path(render_dir) / episode.id / "final_belief.som")
    return result.to_report()


def _execute_jobs(payloads: list[dict], workers: int) -> list[dict]:
    """Run jobs across a worker pool; failures are recorded, not fatal."""
    results: list[dict] = []
    if workers <= 1:
        for p in payloads:
            results.append(_safe_job(p))
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for report in pool.map(_safe_job, payloads):
            results.append(report)
    return results


def _safe_job(payload: dict) -> dict:
    try:
        return _run_job(payload)
    except Exception as e:  # crash isolation: one episode never kills a run
        log.exception("episode %s failed", payload["episode"].id)
        return {
            "episode_id": payload["episode"].id,
            "strategy": payload["cfg"].strategy.kind,
            "localization": payload["cfg"].localization,
            "error": f"{type(e).__name__}: {e}",
        }


def _load_taxonomy_near(manifest_path: str) -> ClassTaxonomy:
    sidecar = Path(manifest_path).parent / "taxonomy.json"
    if sidecar.exists():
        return read_taxonomy(sidecar)
    return DEFAULT_TAXONOMY


def _write_report(report: dict, out_dir: Path) -> None:
    reports = out_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    name = f"{report['episode_id']}_{report['strategy']}_{report['localization']}.json"
    (reports / name).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    config = _load_config_file(args.config)
    seed = int(_setting(args, config, "seed", 0))
    size = _setting(args, config, "size", "desk")
    if size not in SIZE_PRESETS:
        raise ConfigError(f"unknown size preset {size!r}; choose from {sorted(SIZE_PRESETS)}")
    fp_overrides = dict(config.get("floorplan", {}))
    fp_overrides.setdefault("extent_m", SIZE_PRESETS[size])
    try:
        base = FloorplanSpec(**fp_overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad floorplan settings: {e}")
    floors = int(_setting(args, config, "floors", 6))
    floorplans = [replace(base, seed=seed + i) for i in range(floors)]
    try:
        manipulation = ManipulationSpec(seed=seed, **config.get("manipulation", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad manipulation settings: {e}")

    out = Path(args.out)
    episodes = generate_dataset(
        floorplans, out,
        variants_per_map=int(_setting(args, config, "variants", 10)),
        episodes_per_variant=int(_setting(args, config, "episodes_per_variant", 1)),
        manipulation=manipulation,
        budget_T=int(_setting(args, config, "budget", 1000)),
        base_seed=seed,
    )
    print(f"wrote {len(episodes)} episodes under {out}")
    return EXIT_OK


def _select_episodes(args, config) -> list[Episode]:
    manifest = _setting(args, config, "manifest", None)
    if not manifest:
        raise ConfigError("a manifest is required (--manifest)")
    if not Path(manifest).exists():
        raise ConfigError(f"manifest not found: {manifest}")
    episodes = read_manifest(manifest)
    limit = _setting(args, config, "episodes", None)
    if limit is not None:
        episodes = episodes[:int(limit)]
    if not episodes:
        raise ConfigError("manifest selects no episodes")
    return episodes


def cmd_run(args) -> int:
    config = _load_config_file(args.config)
    episodes = _select_episodes(args, config)
    taxonomy = _load_taxonomy_near(_setting(args, config, "manifest", None))
    seed = int(_setting(args, config, "seed", 0))
    policy = _setting(args, config, "policy", COMBINED_GREEDY)
    localization = _setting(args, config, "localization", NOISY_LOC)
    if localization not in LOCALIZATIONS:
        raise ConfigError(f"localization must be one of {LOCALIZATIONS}")
    strategy = _strategy(policy, float(_setting(args, config, "beta1", 1.0)),
                         float(_setting(args, config, "beta2", 1e-2)))
    out = Path(_setting(args, config, "out", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    render_dir = str(out / "render") if args.render else None

    payloads = []
    for idx, ep in enumerate(episodes):
        budget = int(_setting(args, config, "budget", ep.budget_T))
        cfg = _episode_config(args, config, strategy, localization, budget,
                              seed * 100003 + idx)
        payloads.append({"episode": ep, "cfg": cfg, "taxonomy": taxonomy,
                         "render_dir": render_dir})
    reports = _execute_jobs(payloads, int(_setting(args, config, "workers", 1)))
    reports.sort(key=lambda r: r["episode_id"])
    failures = 0
    for r in reports:
        _write_report(r, out)
        if "error" in r:
            failures += 1
    print(f"{len(reports) - failures}/{len(reports)} episodes succeeded; reports in {out / 'reports'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config_file(args.config)
    episodes = _select_episodes(args, config)
    taxonomy = _load_taxonomy_near(_setting(args, config, "manifest", None))
    seed = int(_setting(args, config, "seed", 0))
    policies = [p.strip() for p in _setting(args, config, "policies",
                                            ",".join(POLICIES)).split(",") if p.strip()]
    for p in policies:
        if p not in POLICIES:
            raise ConfigError(f"unknown policy {p!r}")
    locs = [l.strip() for l in _setting(args, config, "localizations",
                                        "noisy,oracle").split(",") if l.strip()]
    for l in locs:
        if l not in LOCALIZATIONS:
            raise ConfigError(f"unknown localization {l!r}")
    beta1 = float(_setting(args, config, "beta1", 1.0))
    beta2 = float(_setting(args, config, "beta2", 1e-2))
    out = Path(_setting(args, config, "out", "bench"))
    out.mkdir(parents=True, exist_ok=True)

    payloads = []
    for policy in policies:
        for loc in locs:
            strategy = _strategy(policy, beta1, beta2)
            for idx, ep in enumerate(episodes):
                budget = int(_setting(args, config, "budget", ep.budget_T))
                cfg = _episode_config(args, config, strategy, loc, budget,
                                      seed * 100003 + idx)
                payloads.append({"episode": ep, "cfg": cfg, "taxonomy": taxonomy,
                                 "render_dir": None})
    reports = _execute_jobs(payloads, int(_setting(args, config, "workers", 1)))
    order = {(p, l): i for i, (p, l) in
             enumerate((p, l) for p in policies for l in locs)}
    reports.sort(key=lambda r: (order[(r["strategy"], r["localization"])],
                                r["episode_id"]))
    for r in reports:
        _write_report(r, out)

    ok_reports = [r for r in reports if "error" not in r]
    _write_episode_csv(ok_reports, out / "episodes.csv")
    summary = _summarize(ok_reports, policies, locs)
    _write_summary_csv(summary, out / "summary.csv")
    table = _format_summary(summary)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    if len(ok_reports) < len(reports):
        print(f"warning: {len(reports) - len(ok_reports)} episodes failed")
    return EXIT_OK


def _metric_row(report: dict) -> list:
    m = report["metrics"]
    return [m[c] for c in SUMMARY_COLUMNS]


def _write_episode_csv(reports: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["episode_id", "strategy", "localization", "seed", "steps_executed",
                    *SUMMARY_COLUMNS, "r_diff_total", "r_exp_total"])
        for r in reports:
            w.writerow([r["episode_id"], r["strategy"], r["localization"], r["seed"],
                        r["steps_executed"],
                        *[f"{x:.6f}" for x in _metric_row(r)],
                        r["reward_totals"]["r_diff"], r["reward_totals"]["r_exp"]])


def _summarize(reports: list[dict], policies, locs) -> list[dict]:
    rows = []
    for policy in policies:
        for loc in locs:
            sel = [r for r in reports
                   if r["strategy"] == policy and r["localization"] == loc]
            if not sel:
                continue
            data = np.array([_metric_row(r) for r in sel], dtype=np.float64)
            mean = data.mean(axis=0)
            sem = (data.std(axis=0, ddof=1) / math.sqrt(len(sel))
                   if len(sel) > 1 else np.zeros(data.shape[1]))
            rows.append({"strategy": policy, "localization": loc, "n": len(sel),
                         "mean": mean, "sem": sem})
    return rows


def _write_summary_csv(summary: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["strategy", "localization", "episodes"]
        for c in SUMMARY_COLUMNS:
            header += [f"{c}_mean", f"{c}_sem"]
        w.writerow(header)
        for row in summary:
            cells = [row["strategy"], row["localization"], row["n"]]
            for m, s in zip(row["mean"], row["sem"]):
                cells += [f"{m:.6f}", f"{s:.6f}"]
            w.writerow(cells)


def _format_summary(summary: list[dict]) -> str:
    width = 14
    head = f"{'strategy':<10} {'loc':<7} {'n':>4} " + " ".join(
        f"{h:>{width}}" for h in SUMMARY_HEADERS)
    lines = [head, "-" * len(head)]
    for row in summary:
        cells = " ".join(
            f"{m:>7.2f}+-{s:<5.2f}" for m, s in zip(row["mean"], row["sem"]))
        lines.append(f"{row['strategy']:<10} {row['localization']:<7} {row['n']:>4} {cells}")
    return "\n".join(lines)


def cmd_render(args) -> int:
    out = Path(args.out)
    if args.mode == "occupancy":
        if not args.map:
            raise ConfigError("--map is required for occupancy mode")
        som = read_som(args.map)
        taxonomy = _render_taxonomy(args, som)
        state = _grid_state(som, taxonomy)
        write_ppm(render_occupancy(state), out)
    else:
        if not (args.prior and args.truth):
            raise ConfigError("--prior and --truth are required for diff mode")
        prior_som = read_som(args.prior)
        truth_som = read_som(args.truth)
        taxonomy = _render_taxonomy(args, prior_som)
        prior_state = _grid_state(prior_som, taxonomy)
        truth_state = _grid_state(truth_som, taxonomy)
        belief_state = None
        if args.belief:
            belief_state = _grid_state(read_som(args.belief), taxonomy)
        write_ppm(render_diff(prior_state, truth_state, belief_state), out)
    print(f"wrote {out}")
    return EXIT_OK


def _render_taxonomy(args, som) -> ClassTaxonomy | None:
    if som.channels == 2:
        return None  # belief export: channel 0 already is occupancy
    if args.taxonomy:
        return read_taxonomy(args.taxonomy)
    for candidate in (Path(args.map or args.prior).parent / "taxonomy.json",
                      Path(args.map or args.prior).parent.parent / "taxonomy.json"):
        if candidate.exists():
            return read_taxonomy(candidate)
    return DEFAULT_TAXONOMY


def _grid_state(som, taxonomy) -> np.ndarray:
    if som.channels == 2:
        return np.where(som.values[0] >= 128, OCCUPIED, FREE).astype(np.int8)
    return collapse_to_occupancy(som, taxonomy).state


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spotdiff",
                                description="map-change discovery benchmark harness")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset of episodes")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--floors", type=int)
    g.add_argument("--variants", type=int)
    g.add_argument("--episodes-per-variant", dest="episodes_per_variant", type=int)
    g.add_argument("--budget", type=int)
    g.add_argument("--size", choices=sorted(SIZE_PRESETS))
    g.add_argument("--config")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run episodes from a manifest")
    r.add_argument("--manifest")
    r.add_argument("--policy", choices=POLICIES)
    r.add_argument("--localization", choices=LOCALIZATIONS)
    r.add_argument("--budget", type=int)
    r.add_argument("--beta1", type=float)
    r.add_argument("--beta2", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--episodes", type=int)
    r.add_argument("--render", action="store_true")
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--config")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="benchmark a strategy/localization matrix")
    b.add_argument("--manifest")
    b.add_argument("--policies")
    b.add_argument("--localizations")
    b.add_argument("--budget", type=int)
    b.add_argument("--beta1", type=float)
    b.add_argument("--beta2", type=float)
    b.add_argument("--seed", type=int)
    b.add_argument("--episodes", type=int)
    b.add_argument("--out")
    b.add_argument("--workers", type=int)
    b.add_argument("--config")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("render", help="render maps to PPM images")
    d.add_argument("--mode", choices=("occupancy", "diff"), default="occupancy")
    d.add_argument("--map")
    d.add_argument("--prior")
    d.add_argument("--truth")
    d.add_argument("--belief")
    d.add_argument("--taxonomy")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoFreeCell, SynthesisFailed, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
