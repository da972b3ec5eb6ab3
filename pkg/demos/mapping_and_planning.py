"""
Semantic mapping and shortest paths
===================================

The sampling sweep fills a voxel memory; its 2D projection is the
navigation prior. Floyd-Warshall tables then give every shortest path.
"""

import numpy as np

from manipqa.dataset import sample_scene
from manipqa.navigation import NavResult, floyd_apsp, locate_label, plan_path, spl
from manipqa.semantic_memory import explore, export_map_text

world = sample_scene(seed=8, room_type="LivingRoom")
ex = explore(world)
print(len(ex.memory.cells), "voxels written,", len(ex.seen), "objects seen")
print(export_map_text(ex.map2d).splitlines()[0])

# the projected map agrees with the room's true occupancy
print(np.array_equal(ex.map2d.traversable_mask(), ~world.occupancy()))

tables = floyd_apsp(ex.map2d.traversable_mask())
goal = locate_label(ex.map2d, "TVStand")
plan = plan_path(tables, world.agent.cell, goal)
print("tv stand cells", goal[:4], "... reached in", plan.length, "steps via", plan.cells[-1])

# %%
# SPL credits a success by shortest / taken
print(spl([NavResult(True, plan.length, plan.length, 50)]),
      spl([NavResult(True, 2 * plan.length, plan.length, 50)]),
      spl([NavResult(False, 50, plan.length, 50)]))
