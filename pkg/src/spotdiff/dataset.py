"""Episode and dataset generation: synthesized floors, manipulated variants,
and the JSON manifest tying them together.

Role assignment: the manipulated layout is the agent's outdated prior map;
the originally synthesized layout is the ground truth the world simulates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .gridops import inflate
from .layout import (DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec,
                     manipulate, synthesize_floorplan)
from .som import ClassTaxonomy, Pose2D, collapse_to_occupancy
from .somio import write_som, write_taxonomy

AGENT_RADIUS_M = 0.1


class NoFreeCell(Exception):
    """A generated map offers no valid start cell."""


@dataclass(frozen=True)
class Episode:
    id: str
    prior_map: str
    truth_map: str
    start: Pose2D
    budget_T: int

    def __post_init__(self):
        if self.budget_T < 1:
            raise ValueError("budget_T must be >= 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prior_map": self.prior_map,
            "truth_map": self.truth_map,
            "start": {"x_m": self.start.x_m, "y_m": self.start.y_m,
                      "theta_deg": self.start.theta_deg},
            "budget_T": self.budget_T,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        s = d["start"]
        return cls(d["id"], d["prior_map"], d["truth_map"],
                   Pose2D(s["x_m"], s["y_m"], s["theta_deg"]), int(d["budget_T"]))


def write_manifest(episodes: list[Episode], path) -> None:
    rows = [e.to_dict() for e in episodes]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> list[Episode]:
    """Load a manifest; map paths are resolved relative to the manifest file."""
    path = Path(path)
    episodes = [Episode.from_dict(d) for d in json.loads(path.read_text())]
    base = path.parent
    return [replace(e, prior_map=str((base / e.prior_map)),
                    truth_map=str((base / e.truth_map))) for e in episodes]


def sample_start(truth_som, taxonomy: ClassTaxonomy, rng: np.random.Generator,
                 agent_radius_m: float = AGENT_RADIUS_M,
                 threshold: float = 0.5) -> Pose2D:
    """Uniform start over truth cells where the agent body fits, heading a
    uniform multiple of the turn angle; cell-center position."""
    occ = collapse_to_occupancy(truth_som, taxonomy, threshold)
    blocked = inflate(occ.occupied_mask(), agent_radius_m / truth_som.cell_size_m)
    free_vs, free_us = np.nonzero(~blocked)
    if free_vs.size == 0:
        raise NoFreeCell("no start cell clears the agent radius")
    i = int(rng.integers(free_vs.size))
    u, v = int(free_us[i]), int(free_vs[i])
    x = (u - truth_som.width_cells // 2 + 0.5) * truth_som.cell_size_m
    y = (truth_som.height_cells // 2 - v - 0.5) * truth_som.cell_size_m
    theta = 10.0 * int(rng.integers(36))
    return Pose2D(x, y, theta)


def generate_dataset(floorplans: list[FloorplanSpec], out_dir,
                     variants_per_map: int = 10, episodes_per_variant: int = 1,
                     manipulation: ManipulationSpec = ManipulationSpec(),
                     budget_T: int = 1000, base_seed: int = 0,
                     taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY) -> list[Episode]:
    """Synthesize each floorplan, derive manipulated variants (the priors),
    sample start poses, and write maps + taxonomy + manifest under out_dir.

    Fully deterministic in (floorplans, manipulation, base_seed): regenerating
    with the same arguments reproduces identical files.
    """
    if variants_per_map < 1 or episodes_per_variant < 1:
        raise ValueError("variants_per_map and episodes_per_variant must be >= 1")
    out = Path(out_dir)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    write_taxonomy(taxonomy, out / "taxonomy.json")

    episodes: list[Episode] = []
    for i, spec in enumerate(floorplans):
        truth = synthesize_floorplan(spec, taxonomy)
        truth_rel = f"maps/floor{i:02d}_truth.som"
        write_som(truth, out / truth_rel)
        for j in range(variants_per_map):
            mseed = (base_seed * 1009 + i) * 1009 + j
            prior, _ = manipulate(truth, taxonomy, replace(manipulation, seed=mseed))
            prior_rel = f"maps/floor{i:02d}_var{j:02d}_prior.som"
            write_som(prior, out / prior_rel)
            for k in range(episodes_per_variant):
                start_rng = np.random.default_rng(((base_seed * 1009 + i) * 1009 + j) * 1009 + k + 1)
                start = sample_start(truth, taxonomy, start_rng)
                episodes.append(Episode(
                    id=f"f{i:02d}-v{j:02d}-e{k:02d}",
                    prior_map=prior_rel,
                    truth_map=truth_rel,
                    start=start,
                    budget_T=budget_T,
                ))
    write_manifest(episodes, out / "manifest.json")
    return episodes
