import numpy as np
import pytest

from spotdiff.layout import (DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec,
                             manipulate, synthesize_floorplan)


@pytest.fixture(scope="session")
def taxonomy():
    return DEFAULT_TAXONOMY


@pytest.fixture(scope="session")
def small_floor():
    """One 8 m synthesized floor shared across tests (read-only)."""
    return synthesize_floorplan(FloorplanSpec(seed=13, extent_m=8.0, rooms_min=2,
                                              rooms_max=3, min_room_m=2.0))


@pytest.fixture(scope="session")
def small_pair(small_floor):
    prior, diff = manipulate(small_floor, DEFAULT_TAXONOMY, ManipulationSpec(seed=5))
    return prior, small_floor, diff
