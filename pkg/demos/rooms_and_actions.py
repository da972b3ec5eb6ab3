"""
Rooms, observations and actions
===============================

A procedurally sampled kitchen, what the agent sees from one pose, and how
opening a receptacle changes that view.
"""

import dataclasses

from manipqa.cli import ascii_map
from manipqa.dataset import sample_config, sample_scene
from manipqa.pipeline import facing, shortest_steps, true_goal_cells
from manipqa.world import Action, ActionKind, OutOfReach, Pose, apply_action, observe

base = sample_scene(seed=4, room_type="Kitchen")
world = sample_config(base, seed=4, index=0)
print(world.scene_id, world.config_id, world.grid_shape, len(world.objects), "objects")

# top-down occupancy; A marks the agent
print(ascii_map(world, [], [], world.agent.cell))

# pick a filled receptacle and stand next to it
holder = next(o for o in world.objects.values() if any(c.parent_id == o.id for c in world.objects.values()))
inside = [o.id for o in world.objects.values() if o.parent_id == holder.id]
print("\n", holder.id, "holds", inside)

steps, ends = shortest_steps(world, holder.obj_type)
cell = ends[0]
pose = Pose(cell, facing(cell, true_goal_cells(world, holder.obj_type), world.grid_shape))
here = dataclasses.replace(world, agent=dataclasses.replace(world.agent, cell=pose.cell, heading=pose.heading))

before = {v.id for v in observe(here, pose).visible}
after = {v.id for v in observe(apply_action(here, Action(ActionKind.OPEN, holder.id)), pose).visible}
print("visible before opening:", sorted(before))
print("new after opening:     ", sorted(after - before))

# actions are pure; the original world is untouched
print(world.objects[holder.id].is_open)

# reach is checked from the agent's own cell
try:
    apply_action(world, Action(ActionKind.OPEN, holder.id))
except OutOfReach as exc:
    print("from the start cell:", type(exc).__name__, exc)
