from collections import deque

import numpy as np
import pytest

from spotdiff.ccl import extract_objects
from spotdiff.layout import (DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec,
                             manipulate, synthesize_floorplan,
                             synthesize_floorplan_with_info)
from spotdiff.som import (ADDED, REMOVED, ClassAction, ClassTaxonomy,
                          SemanticOccupancyMap, TaxonomyEntry, collapse_to_occupancy,
                          diff_maps)

SPEC = FloorplanSpec(seed=2, extent_m=8.0, rooms_min=2, rooms_max=4, min_room_m=2.0)


def flood_fill_single_component(mask):
    """4-connected flood fill oracle: does mask form exactly one component?"""
    vs, us = np.nonzero(mask)
    if vs.size == 0:
        return False
    seen = np.zeros_like(mask, dtype=bool)
    q = deque([(int(us[0]), int(vs[0]))])
    seen[vs[0], us[0]] = True
    h, w = mask.shape
    while q:
        u, v = q.popleft()
        for du, dv in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            nu, nv = u + du, v + dv
            if 0 <= nu < w and 0 <= nv < h and mask[nv, nu] and not seen[nv, nu]:
                seen[nv, nu] = True
                q.append((nu, nv))
    return bool((seen == mask).all())


class TestSynthesis:
    def test_deterministic_bytes(self):
        a = synthesize_floorplan(SPEC)
        b = synthesize_floorplan(SPEC)
        assert a.values.tobytes() == b.values.tobytes()

    def test_room_count_within_bounds(self):
        _, info = synthesize_floorplan_with_info(SPEC)
        assert SPEC.rooms_min <= len(info.rooms) <= SPEC.rooms_max

    def test_dimension_matches_extent(self):
        som = synthesize_floorplan(SPEC)
        assert som.width_cells == SPEC.width_cells == 161

    @pytest.mark.parametrize("seed", range(50))
    def test_free_region_single_component(self, seed):
        som = synthesize_floorplan(FloorplanSpec(
            seed=seed, extent_m=7.0, rooms_min=2, rooms_max=4, min_room_m=1.8))
        occ = collapse_to_occupancy(som, DEFAULT_TAXONOMY)
        free = occ.free_mask() & som.explorable_mask()
        assert flood_fill_single_component(free)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            FloorplanSpec(extent_m=1.0, corridor_width_m=0.6)
        with pytest.raises(ValueError):
            FloorplanSpec(rooms_min=5, rooms_max=3)
        with pytest.raises(ValueError):
            FloorplanSpec(furniture_density={"chair": -1.0})


class TestManipulation:
    def test_identity_when_probabilities_zero(self, small_floor, taxonomy):
        out, dm = manipulate(small_floor, taxonomy,
                             ManipulationSpec(seed=1, p_remove=0.0, p_displace=0.0))
        assert out.values.tobytes() == small_floor.values.tobytes()
        assert dm.count(ADDED) == 0 and dm.count(REMOVED) == 0

    def test_noop_channels_byte_identical(self, small_pair, small_floor, taxonomy):
        prior, truth, _ = small_pair
        for entry in taxonomy.entries:
            if entry.action is ClassAction.NO_OP:
                assert np.array_equal(prior.values[entry.index],
                                      truth.values[entry.index])

    def test_explorable_channel_untouched(self, small_pair):
        prior, truth, _ = small_pair
        assert np.array_equal(prior.values[-1], truth.values[-1])

    def test_difference_map_matches_diff_maps(self, small_floor, taxonomy):
        spec = ManipulationSpec(seed=77)
        out, dm = manipulate(small_floor, taxonomy, spec)
        want = diff_maps(collapse_to_occupancy(small_floor, taxonomy),
                         collapse_to_occupancy(out, taxonomy),
                         small_floor.explorable_mask())
        assert np.array_equal(dm.labels, want.labels)

    def test_something_changes_with_default_probs(self, small_pair):
        _, _, dm = small_pair
        assert dm.changed_mask.sum() > 0

    def test_displacement_conserves_shape(self, taxonomy):
        # every displaced component keeps its area and its normalized cell set
        som = synthesize_floorplan(FloorplanSpec(seed=8, extent_m=8.0, rooms_min=2,
                                                 rooms_max=3, min_room_m=2.0))
        out, _ = manipulate(som, taxonomy, ManipulationSpec(seed=4, p_remove=0.0,
                                                            p_displace=1.0))
        before = extract_objects(som, taxonomy)
        after = extract_objects(out, taxonomy)
        for ch in taxonomy.channels_with_action(ClassAction.DISPLACEMENT):
            def norm(comps):
                out_set = set()
                for c in comps:
                    arr = c.cell_array()
                    arr = arr - arr.min(axis=0)
                    out_set.add(frozenset(map(tuple, arr.tolist())))
                return out_set
            assert norm(before[ch]) == norm(after[ch])

    def test_removal_only_deletes(self, small_floor, taxonomy):
        out, dm = manipulate(small_floor, taxonomy,
                             ManipulationSpec(seed=6, p_remove=1.0, p_displace=0.0))
        for ch in taxonomy.channels_with_action(ClassAction.REMOVAL,
                                                ClassAction.DISPLACEMENT,
                                                ClassAction.OVERLAP_REMOVAL):
            assert not out.channel_mask(ch).any()
        assert dm.count(ADDED) == 0
        assert dm.count(REMOVED) > 0

    def test_deterministic(self, small_floor, taxonomy):
        spec = ManipulationSpec(seed=42)
        a, _ = manipulate(small_floor, taxonomy, spec)
        b, _ = manipulate(small_floor, taxonomy, spec)
        assert a.values.tobytes() == b.values.tobytes()


def test_overlap_cascade_follows_host():
    # a hand-built sofa with a cushion on top: removing the sofa removes the
    # cushion; an isolated cushion elsewhere survives
    tax = ClassTaxonomy((
        TaxonomyEntry(0, "wall", ClassAction.NO_OP, True),
        TaxonomyEntry(1, "sofa", ClassAction.DISPLACEMENT, True),
        TaxonomyEntry(2, "cushion", ClassAction.OVERLAP_REMOVAL, True),
    ))
    vals = np.zeros((4, 20, 20), dtype=np.uint8)
    vals[1, 5:9, 5:9] = 255     # sofa
    vals[2, 6:8, 6:8] = 255     # cushion on the sofa
    vals[2, 14:16, 14:16] = 255  # cushion on the floor, away from the sofa
    vals[3, :, :] = 255          # everything explorable
    som = SemanticOccupancyMap(vals)

    out, _ = manipulate(som, tax, ManipulationSpec(seed=0, p_remove=1.0, p_displace=0.0))
    assert not out.channel_mask(1).any()                 # sofa removed
    assert not out.channel_mask(2)[6:8, 6:8].any()       # its cushion cascaded away
    assert out.channel_mask(2)[14:16, 14:16].all()       # the loose cushion stayed


def test_overlap_cascade_on_displacement():
    tax = ClassTaxonomy((
        TaxonomyEntry(0, "wall", ClassAction.NO_OP, True),
        TaxonomyEntry(1, "sofa", ClassAction.DISPLACEMENT, True),
        TaxonomyEntry(2, "cushion", ClassAction.OVERLAP_REMOVAL, True),
    ))
    vals = np.zeros((4, 30, 30), dtype=np.uint8)
    vals[1, 5:9, 5:9] = 255
    vals[2, 6:8, 6:8] = 255
    vals[3, :, :] = 255
    som = SemanticOccupancyMap(vals)
    out, _ = manipulate(som, tax, ManipulationSpec(seed=1, p_remove=0.0, p_displace=1.0))
    assert out.channel_mask(1).sum() == 16               # sofa moved, same area
    assert not out.channel_mask(1)[5:9, 5:9].all()       # not where it was
    assert not out.channel_mask(2).any()                 # cushion cascaded away
