"""Procedural floorplan synthesis and layout manipulation.

Floorplans are BSP room splits with door gaps, walls on a NoOperation
channel, furniture rectangles/L-shapes on movable-class channels, and the
interior floor as the explorable mask. Manipulation applies the per-class
actions: Removal-class components may be deleted, Displacement-class
components deleted or relocated onto free floor, and OverlapRemoval-class
components are cascade-deleted when a removed/displaced footprint touches
them (a cushion goes with its sofa).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ccl import ObjectComponent, extract_objects
from .gridops import count_components
from .som import (ClassAction, ClassTaxonomy, DifferenceMap, SemanticOccupancyMap,
                  TaxonomyEntry, collapse_to_occupancy, diff_maps)

log = logging.getLogger(__name__)


class SynthesisFailed(Exception):
    """Floorplan generation could not satisfy its constraints in bounded retries."""


DEFAULT_TAXONOMY = ClassTaxonomy((
    TaxonomyEntry(0, "wall", ClassAction.NO_OP, True),
    TaxonomyEntry(1, "floor", ClassAction.NO_OP, False),
    TaxonomyEntry(2, "door", ClassAction.NO_OP, False),
    TaxonomyEntry(3, "table", ClassAction.DISPLACEMENT, True),
    TaxonomyEntry(4, "chair", ClassAction.DISPLACEMENT, True),
    TaxonomyEntry(5, "sofa", ClassAction.DISPLACEMENT, True),
    TaxonomyEntry(6, "cabinet", ClassAction.REMOVAL, True),
    TaxonomyEntry(7, "plant", ClassAction.REMOVAL, True),
    TaxonomyEntry(8, "cushion", ClassAction.OVERLAP_REMOVAL, True),
))

_DEFAULT_DENSITY = {
    "table": 0.8, "chair": 1.6, "sofa": 0.7, "cabinet": 0.7, "plant": 0.6,
    "cushion": 0.8,
}


@dataclass(frozen=True)
class FloorplanSpec:
    seed: int = 0
    extent_m: float = 24.0
    rooms_min: int = 5
    rooms_max: int = 9
    corridor_width_m: float = 1.0  # door gap width
    wall_thickness_m: float = 0.1
    min_room_m: float = 2.0
    furniture_density: dict = field(default_factory=lambda: dict(_DEFAULT_DENSITY))
    object_size_range_m: tuple[float, float] = (0.35, 1.2)
    # fraction of rooms that receive furniture at all; the rest stay bare,
    # concentrating movable mass (and therefore changes) in fewer rooms
    furnished_fraction: float = 1.0
    cell_size_m: float = 0.05

    def __post_init__(self):
        if self.extent_m <= 2 * self.corridor_width_m:
            raise ValueError("extent_m must exceed twice the corridor width")
        if self.rooms_min > self.rooms_max or self.rooms_min < 1:
            raise ValueError("need 1 <= rooms_min <= rooms_max")
        if any(d < 0 for d in self.furniture_density.values()):
            raise ValueError("furniture densities must be >= 0")
        if not (0.0 <= self.furnished_fraction <= 1.0):
            raise ValueError("furnished_fraction must lie in [0, 1]")

    @property
    def width_cells(self) -> int:
        return int(round(self.extent_m / self.cell_size_m)) + 1


@dataclass(frozen=True)
class ManipulationSpec:
    seed: int = 0
    p_remove: float = 0.3
    p_displace: float = 0.5
    max_place_attempts: int = 50
    threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.p_remove <= 1.0 and 0.0 <= self.p_displace <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.max_place_attempts < 1:
            raise ValueError("max_place_attempts must be >= 1")


@dataclass
class FloorplanInfo:
    rooms: list  # (u0, v0, u1, v1) inclusive floor rects
    placed_per_channel: dict  # channel -> number of planted objects


# ---------------------------------------------------------------------------
# synthesis


def synthesize_floorplan(spec: FloorplanSpec,
                         taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY) -> SemanticOccupancyMap:
    som, _ = synthesize_floorplan_with_info(spec, taxonomy)
    return som


def synthesize_floorplan_with_info(spec: FloorplanSpec,
                                   taxonomy: ClassTaxonomy = DEFAULT_TAXONOMY,
                                   retries: int = 8):
    rng = np.random.default_rng(spec.seed)
    for _ in range(retries):
        result = _try_synthesize(spec, taxonomy, rng)
        if result is not None:
            return result
    raise SynthesisFailed(f"could not synthesize a valid floorplan for seed {spec.seed}")


def _try_synthesize(spec, taxonomy, rng):
    s = spec.cell_size_m
    w = spec.width_cells
    wt = max(1, int(round(spec.wall_thickness_m / s)))
    door_w = max(2, int(round(spec.corridor_width_m / s)))
    min_side = max(door_w + 2, int(round(spec.min_room_m / s)))

    chan = {e.name: e.index for e in taxonomy.entries}
    values = np.zeros((taxonomy.num_channels, w, w), dtype=np.uint8)
    wall = np.zeros((w, w), dtype=bool)
    wall[:wt, :] = wall[-wt:, :] = True
    wall[:, :wt] = wall[:, -wt:] = True
    door = np.zeros((w, w), dtype=bool)

    rooms = [(wt, wt, w - wt - 1, w - wt - 1)]
    target = int(rng.integers(spec.rooms_min, spec.rooms_max + 1))
    while len(rooms) < target:
        idx = _largest_splittable(rooms, min_side, wt)
        if idx is None:
            break
        rooms.extend(_split_room(rooms.pop(idx), wall, door, door_w, wt, min_side, rng))
    if len(rooms) < spec.rooms_min:
        return None  # unlucky split sequence; retry

    floor = ~wall
    floor[:wt, :] = floor[-wt:, :] = False
    floor[:, :wt] = floor[:, -wt:] = False
    if count_components(floor, 4) != 1:
        return None  # door carving failed to connect; retry

    obstacle_count = np.zeros((w, w), dtype=np.int16)
    placed: dict[int, int] = {e.index: 0 for e in taxonomy.entries}
    host_objects: dict[int, list[np.ndarray]] = {}  # room index -> movable cell arrays

    movable_names = [e.name for e in taxonomy.entries
                     if e.action in (ClassAction.REMOVAL, ClassAction.DISPLACEMENT)
                     and e.name in spec.furniture_density]
    # the smallest rooms get the furniture; large halls stay bare
    by_area = sorted(range(len(rooms)),
                     key=lambda i: ((rooms[i][2] - rooms[i][0] + 1)
                                    * (rooms[i][3] - rooms[i][1] + 1), i))
    n_furnished = int(math.ceil(spec.furnished_fraction * len(rooms)))
    furnished = set(by_area[:n_furnished])
    for room_idx, room in enumerate(rooms):
        if room_idx not in furnished:
            continue
        for name in movable_names:
            ch = chan[name]
            count = int(rng.poisson(spec.furniture_density[name]))
            for _ in range(count):
                cells = _place_object(spec, rng, room, floor, obstacle_count, values[ch])
                if cells is None:
                    continue
                values[ch][cells[:, 1], cells[:, 0]] = 255
                obstacle_count[cells[:, 1], cells[:, 0]] += 1
                placed[ch] += 1
                if taxonomy.entry(ch).action is ClassAction.DISPLACEMENT:
                    host_objects.setdefault(room_idx, []).append(cells)

    overlap_names = [e.name for e in taxonomy.entries
                     if e.action is ClassAction.OVERLAP_REMOVAL
                     and e.name in spec.furniture_density]
    for room_idx in range(len(rooms)):
        hosts = host_objects.get(room_idx, [])
        if not hosts:
            continue
        for name in overlap_names:
            ch = chan[name]
            count = int(rng.poisson(spec.furniture_density[name]))
            for _ in range(count):
                host = hosts[int(rng.integers(len(hosts)))]
                cells = _place_on_host(rng, host, values[ch])
                if cells is None:
                    continue
                values[ch][cells[:, 1], cells[:, 0]] = 255
                obstacle_count[cells[:, 1], cells[:, 0]] += 1
                placed[ch] += 1

    values[chan["wall"]][wall] = 255
    values[chan["floor"]][floor] = 255
    values[chan["door"]][door] = 255
    values[-1][floor] = 255  # explorable = interior floor

    free = floor & (obstacle_count == 0)
    if count_components(free, 4) != 1:
        return None
    som = SemanticOccupancyMap(values, s, taxonomy_ref="synthetic")
    return som, FloorplanInfo(rooms, placed)


def _largest_splittable(rooms, min_side, wt):
    best, best_area = None, -1
    for i, (u0, v0, u1, v1) in enumerate(rooms):
        du, dv = u1 - u0 + 1, v1 - v0 + 1
        if max(du, dv) >= 2 * min_side + wt:
            area = du * dv
            if area > best_area:
                best, best_area = i, area
    return best


def _split_room(room, wall, door, door_w, wt, min_side, rng):
    u0, v0, u1, v1 = room
    du, dv = u1 - u0 + 1, v1 - v0 + 1
    split_u = du >= dv  # split the longer axis
    if split_u:
        lo, hi = u0 + min_side, u1 - wt - min_side + 1
        su = int(rng.integers(lo, hi + 1))
        wall[v0:v1 + 1, su:su + wt] = True
        gv = int(rng.integers(v0, v1 - door_w + 2))
        wall[gv:gv + door_w, su:su + wt] = False
        door[gv:gv + door_w, su:su + wt] = True
        return [(u0, v0, su - 1, v1), (su + wt, v0, u1, v1)]
    lo, hi = v0 + min_side, v1 - wt - min_side + 1
    sv = int(rng.integers(lo, hi + 1))
    wall[sv:sv + wt, u0:u1 + 1] = True
    gu = int(rng.integers(u0, u1 - door_w + 2))
    wall[sv:sv + wt, gu:gu + door_w] = False
    door[sv:sv + wt, gu:gu + door_w] = True
    return [(u0, v0, u1, sv - 1), (u0, sv + wt, u1, v1)]


def _object_cells(rng, size_range_m, cell_size_m):
    """Footprint cell offsets for a rectangle or (30% of the time) an L-shape."""
    lo, hi = size_range_m
    bw = max(1, int(round(rng.uniform(lo, hi) / cell_size_m)))
    bh = max(1, int(round(rng.uniform(lo, hi) / cell_size_m)))
    mask = np.ones((bh, bw), dtype=bool)
    if bw >= 4 and bh >= 4 and rng.random() < 0.3:
        cw, chh = bw // 2, bh // 2
        corner = int(rng.integers(4))
        if corner == 0:
            mask[:chh, :cw] = False
        elif corner == 1:
            mask[:chh, bw - cw:] = False
        elif corner == 2:
            mask[bh - chh:, :cw] = False
        else:
            mask[bh - chh:, bw - cw:] = False
    vs, us = np.nonzero(mask)
    return np.stack([us, vs], axis=1), bw, bh


def _place_object(spec, rng, room, floor, obstacle_count, channel_values,
                  attempts: int = 20):
    """Find a collision-free spot in the room; returns (n, 2) cells or None.

    Requires floor under every cell, no obstacle overlap, one cell of
    clearance from same-channel objects (components must stay separate), and
    the free space must remain one 4-connected region.
    """
    u0, v0, u1, v1 = room
    offsets, bw, bh = _object_cells(rng, spec.object_size_range_m, spec.cell_size_m)
    if u0 + 1 > u1 - bw or v0 + 1 > v1 - bh:
        return None
    h, w = floor.shape
    for _ in range(attempts):
        ou = int(rng.integers(u0 + 1, u1 - bw + 1))
        ov = int(rng.integers(v0 + 1, v1 - bh + 1))
        cells = offsets + (ou, ov)
        cu, cv = cells[:, 0], cells[:, 1]
        if not floor[cv, cu].all() or (obstacle_count[cv, cu] > 0).any():
            continue
        gl_u0, gl_v0 = max(0, ou - 1), max(0, ov - 1)
        gl_u1, gl_v1 = min(w, ou + bw + 1), min(h, ov + bh + 1)
        if (channel_values[gl_v0:gl_v1, gl_u0:gl_u1] >= 128).any():
            continue
        obstacle_count[cv, cu] += 1
        if count_components(floor & (obstacle_count == 0), 4) == 1:
            obstacle_count[cv, cu] -= 1
            return cells
        obstacle_count[cv, cu] -= 1
    return None


def _place_on_host(rng, host_cells, channel_values, attempts: int = 10,
                   side_range=(3, 6)):
    """Small footprint fully supported by a host object (cushion on sofa)."""
    hu0, hv0 = host_cells.min(axis=0)
    hu1, hv1 = host_cells.max(axis=0)
    host_set = np.zeros((hv1 - hv0 + 1, hu1 - hu0 + 1), dtype=bool)
    host_set[host_cells[:, 1] - hv0, host_cells[:, 0] - hu0] = True
    for _ in range(attempts):
        cw = int(rng.integers(side_range[0], side_range[1] + 1))
        ch = int(rng.integers(side_range[0], side_range[1] + 1))
        if hu1 - hu0 + 1 < cw or hv1 - hv0 + 1 < ch:
            continue
        ou = int(rng.integers(hu0, hu1 - cw + 2))
        ov = int(rng.integers(hv0, hv1 - ch + 2))
        if not host_set[ov - hv0:ov - hv0 + ch, ou - hu0:ou - hu0 + cw].all():
            continue
        h, w = channel_values.shape
        gl_u0, gl_v0 = max(0, ou - 1), max(0, ov - 1)
        gl_u1, gl_v1 = min(w, ou + cw + 1), min(h, ov + ch + 1)
        if (channel_values[gl_v0:gl_v1, gl_u0:gl_u1] >= 128).any():
            continue
        vs, us = np.mgrid[ov:ov + ch, ou:ou + cw]
        return np.stack([us.ravel(), vs.ravel()], axis=1)
    return None


# ---------------------------------------------------------------------------
# manipulation


def manipulate(som: SemanticOccupancyMap, taxonomy: ClassTaxonomy,
               spec: ManipulationSpec) -> tuple[SemanticOccupancyMap, DifferenceMap]:
    """Produce an alternative layout plus the difference map against the input.

    NoOperation channels and the explorable channel are untouched. Removal
    and Displacement components are independently deleted with p_remove;
    surviving Displacement components relocate with p_displace onto free
    explorable space (staying put after max_place_attempts failures).
    OverlapRemoval components intersecting any removed/displaced original
    footprint are deleted.
    """
    taxonomy.check_matches(som)
    rng = np.random.default_rng(spec.seed)
    comps = extract_objects(som, taxonomy, spec.threshold)
    values = som.values.copy()
    explorable = som.explorable_mask()
    before = collapse_to_occupancy(som, taxonomy, spec.threshold)

    is_obstacle = {e.index: e.obstacle for e in taxonomy.entries}
    obstacle_count = np.zeros(values.shape[1:], dtype=np.int16)
    for ch in taxonomy.obstacle_channels:
        obstacle_count += (values[ch] >= spec.threshold * 255.0).astype(np.int16)

    disturbed = np.zeros(values.shape[1:], dtype=bool)

    def _erase(comp: ObjectComponent):
        cells = comp.cell_array()
        values[comp.channel][cells[:, 1], cells[:, 0]] = 0
        if is_obstacle[comp.channel]:
            obstacle_count[cells[:, 1], cells[:, 0]] -= 1

    to_displace: list[ObjectComponent] = []
    for ch in taxonomy.channels_with_action(ClassAction.REMOVAL, ClassAction.DISPLACEMENT):
        displaceable = taxonomy.entry(ch).action is ClassAction.DISPLACEMENT
        for comp in comps[ch]:
            if rng.random() < spec.p_remove:
                cells = comp.cell_array()
                _erase(comp)
                disturbed[cells[:, 1], cells[:, 0]] = True
            elif displaceable and rng.random() < spec.p_displace:
                to_displace.append(comp)

    for comp in to_displace:
        _displace(comp, values, explorable, obstacle_count, disturbed, rng, spec,
                  is_obstacle[comp.channel])

    for ch in taxonomy.channels_with_action(ClassAction.OVERLAP_REMOVAL):
        for comp in comps[ch]:
            cells = comp.cell_array()
            if disturbed[cells[:, 1], cells[:, 0]].any():
                _erase(comp)

    after_som = som.with_values(values)
    after = collapse_to_occupancy(after_som, taxonomy, spec.threshold)
    return after_som, diff_maps(before, after, explorable)


def _displace(comp: ObjectComponent, values, explorable, obstacle_count, disturbed,
              rng, spec: ManipulationSpec, obstacle: bool):
    h, w = explorable.shape
    cells = comp.cell_array()
    src_u, src_v = cells[:, 0], cells[:, 1]
    values_ch = values[comp.channel]
    src_vals = values_ch[src_v, src_u].copy()
    u0, v0 = cells.min(axis=0)
    u1, v1 = cells.max(axis=0)
    bw, bh = u1 - u0 + 1, v1 - v0 + 1
    offsets = cells - (u0, v0)

    # lift the object out, then search for a landing spot
    values_ch[src_v, src_u] = 0
    if obstacle:
        obstacle_count[src_v, src_u] -= 1

    for _ in range(spec.max_place_attempts):
        ou = int(rng.integers(0, w - bw + 1))
        ov = int(rng.integers(0, h - bh + 1))
        tgt = offsets + (ou, ov)
        tu, tv = tgt[:, 0], tgt[:, 1]
        if not explorable[tv, tu].all() or (obstacle_count[tv, tu] > 0).any():
            continue
        gl_u0, gl_v0 = max(0, ou - 1), max(0, ov - 1)
        gl_u1, gl_v1 = min(w, ou + bw + 1), min(h, ov + bh + 1)
        if (values_ch[gl_v0:gl_v1, gl_u0:gl_u1] >= spec.threshold * 255.0).any():
            continue
        values_ch[tv, tu] = src_vals
        if obstacle:
            obstacle_count[tv, tu] += 1
        disturbed[src_v, src_u] = True
        return
    # no valid spot: the object stays where it was
    values_ch[src_v, src_u] = src_vals
    if obstacle:
        obstacle_count[src_v, src_u] += 1
    log.info("component %d on channel %d stayed in place after %d failed attempts",
             comp.component_id, comp.channel, spec.max_place_attempts)
