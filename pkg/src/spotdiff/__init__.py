"""spotdiff: a desk-scale simulator and benchmark for discovering map changes
with embodied exploration agents."""

from .som import (ADDED, FREE, NOT_EXPLORABLE, OCCUPIED, REMOVED, UNCHANGED, UNKNOWN,
                  ClassAction, ClassTaxonomy, DifferenceMap, DimensionMismatch,
                  OccupancyGrid, OutOfBounds, Pose2D, SemanticOccupancyMap,
                  TaxonomyEntry, TaxonomyMismatch, cell_to_world,
                  collapse_to_occupancy, diff_maps, world_to_cell)
from .somio import BadMagic, TruncatedFile, VersionUnsupported, read_som, write_som
from .ccl import ObjectComponent, extract_objects, label_components
from .layout import (DEFAULT_TAXONOMY, FloorplanSpec, ManipulationSpec, SynthesisFailed,
                     manipulate, synthesize_floorplan)
from .dataset import Episode, NoFreeCell, generate_dataset, read_manifest, write_manifest
from .world import (Action, DepthScan, NoiseModel, PoseInObstacle, SensorConfig,
                    WorldState, sense, step)
from .mapping import (BeliefMap, LocalMap, LocalMapConfig, PoseBelief,
                      build_local_map, register, update_pose)
from .policy import (GlobalStrategy, GoalScoringConfig, GoalSelector, NoPath,
                     NoReachableGoal, PlannerConfig, PolicySchedule, local_control,
                     next_local_goal, plan, select_global_goal, should_resample)
from .metrics import (MetricsReport, RewardTrace, combined_reward, compute_metrics,
                      coverage_reward, difference_reward)
from .runner import EpisodeConfig, EpisodeResult, run_episode

__version__ = "0.1.0"
