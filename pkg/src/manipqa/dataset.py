"""Procedural rooms, episode generation, ground truth, persistence and splits.

Rooms are built on the 0.25 m lattice. Every room has a run of base units
along the back wall (cabinet below, drawer above, one shared slab on top),
a few pieces of floor furniture and small items on flat surfaces. A base
layout has empty receptacles; each configuration fills some of them
differently, so one question can have different answers across configs.

Episodes are accepted only if the task is solvable from the arrival pose:
the goal is reachable, the target and its anchor are in view and in reach,
the required action succeeds, and the answer is recoverable from the two
frames the agent gets to see.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Box3, lattice_span
from .language import QuestionAST, QuestionType, SpatialTarget, candidate_res, parse, realize
from .navigation import bfs_distances
from .pipeline import MAX_COUNT, answer_question, classify_action, facing, shortest_steps, true_goal_cells
from .scene_graph import Relation, SceneGraph, assign_relation, build_graph
from .semantic_memory import VoxelMemory
from .vocab import default_vocabulary
from .world import (
    CELL_SIZE,
    Action,
    ROOM_TYPES,
    ActionError,
    ActionKind,
    AgentState,
    Heading,
    ObjectInstance,
    Pose,
    SchemaError,
    World,
    apply_action,
    observe,
    reach_distance,
)

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
MIN_OBJECTS, MAX_OBJECTS = 8, 25
MAX_BASE_OBJECTS = 19
CONFIGS_PER_SCENE = 4
TYPE_RATIO = {QuestionType.EXISTENCE: 1977, QuestionType.COUNTING: 790, QuestionType.SPATIAL: 1305}
DEFAULT_TRAIN_FRACTION = 100 / 120
DEFAULT_SCENES = 12
EPISODES_PER_SCENE = 100 / 3
MIN_TOKENS, MAX_TOKENS = 6, 16
MAX_SHORTEST = 50
LAYOUT_RETRIES = 200


class GenerationFailure(RuntimeError):
    pass


class NoValidEpisode(LookupError):
    pass


class TooFewScenes(ValueError):
    pass


# --- room recipes --------------------------------------------------------------

SLAB_BOTTOM, SLAB_TOP = 0.94, 1.00
CABINET_Y = (0.04, 0.42)
DRAWER_Y = (0.50, 0.74)
INSET = 0.02

# floor furniture: (width cells, depth cells, height m)
FLOOR_SIZES = {
    "Table": (4, 3, 0.75),
    "CoffeeTable": (4, 2, 0.45),
    "Desk": (4, 2, 0.75),
    "SideTable": (2, 2, 0.6),
    "Sofa": (6, 3, 0.8),
    "ArmChair": (3, 3, 0.8),
    "Chair": (2, 2, 0.9),
    "Stool": (2, 2, 0.65),
    "GarbageCan": (2, 2, 0.4),
    "FloorLamp": (2, 2, 1.6),
    "Safe": (2, 2, 0.5),
    "Shelf": (4, 2, 1.8),
    "Bed": (6, 8, 0.6),
    "Toilet": (2, 3, 0.75),
    "Bathtub": (7, 3, 0.55),
    "Fridge": (3, 3, 1.8),
}
FLAT_TOPS = ("Table", "CoffeeTable", "Desk", "SideTable")

# things standing on the slab: (x m, z m, height m); the slab top sits on a
# voxel boundary so they never share a voxel with the slab
SLAB_SIZES = {
    "Toaster": (0.30, 0.20, 0.20),
    "CoffeeMachine": (0.25, 0.30, 0.35),
    "Microwave": (0.45, 0.35, 0.30),
    "Sink": (0.40, 0.35, 0.15),
    "Television": (0.45, 0.15, 0.50),
    "Box": (0.30, 0.30, 0.20),
    "AlarmClock": (0.15, 0.10, 0.12),
    "Kettle": (0.20, 0.20, 0.25),
}
ITEM_SIZE = (0.10, 0.08, 0.10)
SLOT = 0.13


@dataclass(frozen=True)
class RoomRecipe:
    slab: str
    columns: tuple[int, int]
    on_slab: tuple[str, ...]
    n_on_slab: tuple[int, int]
    tall: str | None
    floor: tuple[str, ...]
    n_floor: tuple[int, int]
    items: tuple[str, ...]
    contents: tuple[str, ...]


RECIPES = {
    "Kitchen": RoomRecipe(
        slab="CounterTop", columns=(3, 4),
        on_slab=("Toaster", "CoffeeMachine", "Microwave", "Sink"), n_on_slab=(2, 3),
        tall="Fridge",
        floor=("Table", "Chair", "Stool", "GarbageCan"), n_floor=(2, 3),
        items=("Apple", "Bread", "Cup", "Mug", "Bowl", "Tomato"),
        contents=("Egg", "Apple", "Tomato", "Potato", "Fork", "Spoon", "Knife", "ButterKnife", "Cup", "Bowl", "Plate", "DishSponge"),
    ),
    "LivingRoom": RoomRecipe(
        slab="TVStand", columns=(3, 4),
        on_slab=("Television", "Box", "AlarmClock"), n_on_slab=(2, 3),
        tall=None,
        floor=("Sofa", "ArmChair", "CoffeeTable", "FloorLamp", "Safe", "Shelf"), n_floor=(3, 4),
        items=("Book", "RemoteControl", "KeyChain", "Mug"),
        contents=("Book", "Pen", "CellPhone", "CreditCard", "KeyChain", "RemoteControl"),
    ),
    "Bedroom": RoomRecipe(
        slab="Dresser", columns=(3, 4),
        on_slab=("AlarmClock", "Box", "Television"), n_on_slab=(2, 3),
        tall=None,
        floor=("Bed", "SideTable", "Desk", "Chair", "Safe", "FloorLamp"), n_floor=(3, 4),
        items=("Book", "Pen", "CellPhone", "Mug"),
        contents=("Book", "Pen", "CellPhone", "CreditCard", "KeyChain", "Towel"),
    ),
    "Bathroom": RoomRecipe(
        slab="CounterTop", columns=(3, 4),
        on_slab=("Sink", "Box", "Kettle"), n_on_slab=(1, 2),
        tall=None,
        floor=("Toilet", "Bathtub", "GarbageCan", "Shelf", "Stool"), n_floor=(3, 4),
        items=("SoapBottle", "ToiletPaper", "SprayBottle", "Towel"),
        contents=("SoapBottle", "ToiletPaper", "DishSponge", "SprayBottle", "Towel", "Cup"),
    ),
}


class _Retry(Exception):
    pass


class _Builder:
    def __init__(self, room_type: str, nx: int, nz: int):
        self.room_type = room_type
        self.nx, self.nz = nx, nz
        self.taken = np.zeros((nx, nz), dtype=bool)
        self.objects: dict[str, ObjectInstance] = {}
        self.counts: dict[str, int] = {}

    def add(self, obj_type: str, lo, hi, parent_id=None) -> ObjectInstance:
        k = self.counts.get(obj_type, 0)
        self.counts[obj_type] = k + 1
        oid = f"{obj_type}_{k:02d}"
        box = Box3(tuple(round(v, 4) for v in lo), tuple(round(v, 4) for v in hi))
        obj = ObjectInstance.of_type(oid, obj_type, box, parent_id=parent_id)
        self.objects[oid] = obj
        return obj

    def fits(self, i, j, w, d) -> bool:
        if i < 0 or j < 0 or i + w > self.nx or j + d > self.nz:
            return False
        return not self.taken[max(i - 1, 0):i + w + 1, max(j - 1, 0):j + d + 1].any()

    def claim(self, i, j, w, d) -> None:
        self.taken[i:i + w, j:j + d] = True

    def floor_box(self, i, j, w, d, h):
        return (i * CELL_SIZE + INSET, 0.0, j * CELL_SIZE + INSET), ((i + w) * CELL_SIZE - INSET, h, (j + d) * CELL_SIZE - INSET)


def _item_height(top: float) -> float:
    """Tall enough to poke into a voxel layer the supporting surface does not touch."""
    k = top / CELL_SIZE
    if abs(k - round(k)) < 1e-9:
        return ITEM_SIZE[1]
    return max(ITEM_SIZE[1], math.ceil(k) * CELL_SIZE - top + 0.02)


def _surface_slots(box: Box3, used: set):
    """Cell-centred item boxes on top of `box`, skipping cells in `used`."""
    top = box.max_corner[1]
    h = _item_height(top)
    half = ITEM_SIZE[0] / 2
    out = []
    i0, i1 = int(box.min_corner[0] // CELL_SIZE), int(box.max_corner[0] // CELL_SIZE) + 1
    j0, j1 = int(box.min_corner[2] // CELL_SIZE), int(box.max_corner[2] // CELL_SIZE) + 1
    for i in range(i0, i1):
        for j in range(j0, j1):
            cx, cz = (i + 0.5) * CELL_SIZE, (j + 0.5) * CELL_SIZE
            inside = (box.min_corner[0] <= cx - half and cx + half <= box.max_corner[0]
                      and box.min_corner[2] <= cz - half and cz + half <= box.max_corner[2])
            if inside and (i, j) not in used:
                out.append(((i, j), (cx - half, top, cz - half), (cx + half, top + h, cz + half)))
    return out


def _layout(rng: np.random.Generator, room_type: str, scene_id: str) -> World:
    recipe = RECIPES[room_type]
    nx, nz = (int(v) for v in rng.integers(16, 21, size=2))
    b = _Builder(room_type, nx, nz)

    # base units along the back wall
    n_cols = int(rng.integers(recipe.columns[0], recipe.columns[1] + 1))
    x0 = int(rng.integers(1, 4))
    for c in range(n_cols):
        xa = (x0 + 2 * c) * CELL_SIZE
        b.add("Cabinet", (xa + INSET, CABINET_Y[0], INSET), (xa + 0.5 - INSET, CABINET_Y[1], 0.5 - INSET))
        b.add("Drawer", (xa + INSET, DRAWER_Y[0], INSET), (xa + 0.5 - INSET, DRAWER_Y[1], 0.5 - INSET))
    run_hi = (x0 + 2 * n_cols) * CELL_SIZE
    b.add(recipe.slab, (x0 * CELL_SIZE, SLAB_BOTTOM, 0.0), (run_hi, SLAB_TOP, 0.5))
    b.claim(x0, 0, 2 * n_cols, 2)
    if recipe.tall:
        w, d, h = FLOOR_SIZES[recipe.tall]
        i = x0 + 2 * n_cols
        if i + w > nx:
            raise _Retry
        b.add(recipe.tall, *b.floor_box(i, 0, w, d, h))
        b.claim(i, 0, w, d)

    cols = [int(c) for c in rng.permutation(n_cols)]
    n_app = int(rng.integers(recipe.n_on_slab[0], recipe.n_on_slab[1] + 1))
    apps = [str(a) for a in rng.choice(recipe.on_slab, size=min(n_app, len(recipe.on_slab)), replace=False)]
    slab = b.objects[f"{recipe.slab}_00"]
    used: set = set()
    for app, c in zip(apps, cols):
        sx, sz, sh = SLAB_SIZES[app]
        cx = (x0 + 2 * c + 1) * CELL_SIZE
        lo = (cx - sx / 2, SLAB_TOP, 0.25 - sz / 2)
        hi = (cx + sx / 2, SLAB_TOP + sh, 0.25 + sz / 2)
        used.update(_cells_under(b.add(app, lo, hi).box))

    # floor furniture
    n_floor = int(rng.integers(recipe.n_floor[0], recipe.n_floor[1] + 1))
    picks = [str(t) for t in rng.choice(recipe.floor, size=min(n_floor, len(recipe.floor)), replace=False)]
    flats = []
    for t in picks:
        w, d, h = FLOOR_SIZES[t]
        for _ in range(60):
            i, j = int(rng.integers(0, nx - w + 1)), int(rng.integers(0, nz - d + 1))
            if b.fits(i, j, w, d):
                obj = b.add(t, *b.floor_box(i, j, w, d, h))
                b.claim(i, j, w, d)
                if t in FLAT_TOPS:
                    flats.append(obj)
                break
        else:
            raise _Retry

    # loose items on the slab and on flat furniture
    surfaces = [slab.box] + [o.box for o in flats]
    n_items = int(rng.integers(2, 5))
    for _ in range(n_items):
        slots = _surface_slots(surfaces[int(rng.integers(len(surfaces)))], used)
        if not slots:
            continue
        cell, lo, hi = slots[int(rng.integers(len(slots)))]
        b.add(str(rng.choice(recipe.items)), lo, hi)
        used.add(cell)

    world = World(
        scene_id=scene_id,
        room_type=room_type,
        bounds=Box3((0.0, 0.0, 0.0), (nx * CELL_SIZE, 2.5, nz * CELL_SIZE)),
        objects=b.objects,
        agent=AgentState((0, 0)),
        config_id="base",
    )
    free = ~world.occupancy()
    cells = [tuple(int(v) for v in c) for c in np.argwhere(free)]
    start = cells[int(rng.integers(len(cells)))]
    world.agent = AgentState(start, Heading(str(rng.choice([h.value for h in Heading]))))
    _check_layout(world)
    return world


def _cells_under(box: Box3) -> set:
    xs = lattice_span(box.min_corner[0], box.max_corner[0], 0.0, CELL_SIZE)
    zs = lattice_span(box.min_corner[2], box.max_corner[2], 0.0, CELL_SIZE)
    return {(i, j) for i in xs for j in zs}


def _labels_survive(world: World) -> bool:
    """Every visible-from-outside object owns a voxel in each column it covers.

    A voxel holds one label, so an object whose voxels are all shared could
    lose its label in the map depending on the order frames arrive in.
    """
    mem = VoxelMemory.for_world(world)
    vox = {o.id: mem.voxels_of(o.box) for o in world.objects.values() if o.parent_id is None}
    owners = Counter(v for vs in vox.values() for v in vs)
    for vs in vox.values():
        cols = {(i, j) for i, _, j in vs}
        if cols != {(i, j) for i, k, j in vs if owners[(i, k, j)] == 1}:
            return False
    return True


def _check_layout(world: World) -> None:
    n = len(world.objects)
    if not MIN_OBJECTS <= n <= MAX_BASE_OBJECTS:
        raise _Retry
    vocab = default_vocabulary()
    counts = world.type_counts()
    if sum(1 for o in world.objects.values() if o.openable and vocab[o.obj_type].receptacle) < 2:
        raise _Retry
    if max(counts.values()) < 2:
        raise _Retry
    free = ~world.occupancy()
    reach = np.isfinite(bfs_distances(free, world.agent.cell))
    if (reach != free).any():
        raise _Retry
    # every object must be inside the view range of some free cell
    centers = np.array([world.cell_center(c) for c in np.argwhere(free)])
    for o in world.objects.values():
        x, _, z = o.box.center
        if np.min(np.hypot(centers[:, 0] - x, centers[:, 1] - z)) > 1.5 - 1e-6:
            raise _Retry
    if not _labels_survive(world):
        raise _Retry
    try:
        world.validate()
    except ValueError as exc:
        raise _Retry from exc


def sample_scene(seed: int, room_type: str) -> World:
    """Deterministic room layout with empty, closed receptacles."""
    if room_type not in RECIPES:
        raise ValueError(f"unknown room type {room_type!r}")
    rng = np.random.default_rng([seed, ROOM_TYPES.index(room_type)])
    scene_id = f"{room_type.lower()}_{seed}"
    for _ in range(LAYOUT_RETRIES):
        try:
            return _layout(rng, room_type, scene_id)
        except _Retry:
            continue
    raise GenerationFailure(f"no valid {room_type} layout for seed {seed}")


def _content_slots(box: Box3):
    lo, hi = box.min_corner, box.max_corner
    nx = int((hi[0] - lo[0] - 0.04) // SLOT)
    nz = int((hi[2] - lo[2] - 0.04) // SLOT)
    y = lo[1] + 0.02
    if y + ITEM_SIZE[1] > hi[1] - 0.01:
        return []
    out = []
    for a in range(nx):
        for c in range(nz):
            x = lo[0] + 0.02 + a * SLOT + 0.015
            z = lo[2] + 0.02 + c * SLOT + 0.015
            out.append(((x, y, z), (x + ITEM_SIZE[0], y + ITEM_SIZE[1], z + ITEM_SIZE[2])))
    return out


def sample_config(base: World, seed: int, index: int) -> World:
    """Fill some receptacles of `base` with small items; config ids are c0, c1, ..."""
    rng = np.random.default_rng([seed, index, 7])
    recipe = RECIPES[base.room_type]
    vocab = default_vocabulary()
    objects = dict(base.objects)
    counts = base.type_counts()
    budget = MAX_OBJECTS - len(objects)
    holders = sorted(o.id for o in objects.values() if o.parent_id is None and o.openable and vocab[o.obj_type].receptacle)
    order = [holders[int(k)] for k in rng.permutation(len(holders))]
    n_fill = min(len(order), int(rng.integers(2, 5)))
    for rid in order[:n_fill]:
        if budget <= 0:
            break
        slots = _content_slots(objects[rid].box)
        if not slots:
            continue
        kinds = [str(t) for t in rng.choice(recipe.contents, size=int(rng.integers(1, 3)), replace=False)]
        n = min(int(rng.integers(1, 4)), len(slots), budget, MAX_COUNT)
        for lo, hi in slots[:n]:
            t = kinds[int(rng.integers(len(kinds)))]
            k = counts.get(t, 0)
            counts[t] = k + 1
            oid = f"{t}_{k:02d}"
            objects[oid] = ObjectInstance.of_type(oid, t, Box3(tuple(round(v, 4) for v in lo), tuple(round(v, 4) for v in hi)), parent_id=rid)
            budget -= 1
    world = dataclasses.replace(base, objects=objects, config_id=f"c{index}", carried={})
    world.validate()
    return world


# --- episodes ------------------------------------------------------------------


@dataclass(frozen=True)
class Episode:
    episode_id: str
    scene_id: str
    config_id: str
    qtype: QuestionType
    question_utterance: str
    question_ast: QuestionAST
    target_object_id: str
    goal_cell: tuple[int, int]
    required_action: ActionKind
    truth: str | int

    def __post_init__(self):
        object.__setattr__(self, "qtype", QuestionType(self.qtype))
        object.__setattr__(self, "required_action", ActionKind(self.required_action))
        object.__setattr__(self, "goal_cell", tuple(self.goal_cell))

    def to_record(self) -> dict:
        return {
            "record": "episode",
            "episode_id": self.episode_id,
            "scene_id": self.scene_id,
            "config_id": self.config_id,
            "qtype": self.qtype.value,
            "question": self.question_utterance,
            "ast": self.question_ast.to_dict(),
            "target_object_id": self.target_object_id,
            "goal_cell": list(self.goal_cell),
            "required_action": self.required_action.value,
            "truth": self.truth,
        }

    @classmethod
    def from_record(cls, r: dict) -> "Episode":
        return cls(
            episode_id=r["episode_id"],
            scene_id=r["scene_id"],
            config_id=r["config_id"],
            qtype=r["qtype"],
            question_utterance=r["question"],
            question_ast=QuestionAST.from_dict(r["ast"]),
            target_object_id=r["target_object_id"],
            goal_cell=tuple(r["goal_cell"]),
            required_action=r["required_action"],
            truth=r["truth"],
        )


def ground_truth_answer(world: World, episode, max_count: int = MAX_COUNT):
    """Answer from the full world state, visibility ignored."""
    ast = episode.question_ast
    tid = episode.target_object_id
    if ast.qtype is QuestionType.SPATIAL:
        anchor = world.objects[tid]
        hit = any(
            o.obj_type == ast.obj1_type and o.id != tid and assign_relation(o, anchor) == ast.target.relation
            for o in world.objects.values()
        )
        return "yes" if hit else "no"
    n = sum(1 for o in world.objects.values() if o.obj_type == ast.obj1_type and o.parent_id == tid)
    if ast.qtype is QuestionType.EXISTENCE:
        return "yes" if n else "no"
    return min(n, max_count)


def token_count(utterance: str) -> int:
    return len(utterance.replace("?", " ").split())


@dataclass
class _Arrival:
    cell: tuple[int, int]
    heading: Heading
    shortest: int


def _arrival(world: World, label: str, cache: dict) -> _Arrival | None:
    """Where a shortest-path agent ends up when sent to `label`, from world truth."""
    if label in cache:
        return cache[label]
    shortest, ends = shortest_steps(world, label)
    out = None
    if shortest is not None:
        dist = bfs_distances(~world.occupancy(), world.agent.cell)
        cell = min((e for e in ends if dist[e] == shortest))
        out = _Arrival(cell, facing(cell, true_goal_cells(world, label), world.grid_shape), shortest)
    cache[label] = out
    return out


class _Candidates:
    """Validated episode candidates for one configured world."""

    def __init__(self, world: World):
        self.world = world
        self.graph: SceneGraph = build_graph(world.objects.values())
        self.counts = world.type_counts()
        self.vocab = default_vocabulary()
        self._arrivals: dict = {}

    def _unique_root(self, obj_type: str):
        if self.counts.get(obj_type) != 1:
            return None
        o = next(o for o in self.world.objects.values() if o.obj_type == obj_type)
        return o if o.parent_id is None else None

    def _solvable(self, ast: QuestionAST, target_id: str, anchor_id: str):
        """Arrival, action and truth for a candidate, or None when it is not solvable."""
        utterance = realize(ast)
        if not MIN_TOKENS <= token_count(utterance) <= MAX_TOKENS:
            return None
        arr = _arrival(self.world, ast.nav_label, self._arrivals)
        if arr is None or not 1 <= arr.shortest <= MAX_SHORTEST:
            return None
        w = self.world
        here = dataclasses.replace(w, agent=dataclasses.replace(w.agent, cell=arr.cell, heading=arr.heading))
        pose = Pose(arr.cell, arr.heading)
        start = observe(here, pose)
        seen = start.by_id()
        if target_id not in seen or anchor_id not in seen:
            return None
        if reach_distance(here, w.objects[target_id]) > here.agent.reach_radius:
            return None
        kind = classify_action(w.objects[target_id].obj_type)
        try:
            after = apply_action(here, Action(kind, target_id))
        except ActionError:
            return None
        end = observe(after, pose, timestamp=1)
        probe = Episode("?", w.scene_id, w.config_id, ast.qtype, utterance, ast, target_id, arr.cell, kind, 0)
        truth = ground_truth_answer(w, probe)
        if answer_question(ast, start, end, self.graph, anchor_id=target_id) != truth:
            return None
        return dataclasses.replace(probe, truth=truth)

    def receptacle_questions(self, qtype: QuestionType, rng: np.random.Generator) -> list[Episode]:
        w = self.world
        pool = RECIPES[w.room_type].contents
        out = []
        for r in sorted(w.objects.values(), key=lambda o: o.id):
            if not (r.openable and r.parent_id is None and self.vocab[r.obj_type].receptacle):
                continue
            inside = sorted({o.obj_type for o in w.objects.values() if o.parent_id == r.id})
            absent = [t for t in pool if t not in inside]
            kinds = inside + [absent[int(rng.integers(len(absent)))]]
            for re_ast in candidate_res(self.graph, r.id):
                anchor = self._unique_root(re_ast.anchor_type)
                if anchor is None:
                    continue
                found = []
                for t in kinds:
                    ep = self._solvable(QuestionAST(qtype, t, re_ast), r.id, anchor.id)
                    if ep is None:
                        break
                    found.append(ep)
                if found and len(found) == len(kinds):
                    out.extend(found)
                    break
        return out

    def spatial_questions(self, rng: np.random.Generator) -> list[Episode]:
        w = self.world
        rels = [r for r in Relation if r is not Relation.IN]
        types = sorted(self.counts)
        out = []
        for anchor_type in types:
            anchor = self._unique_root(anchor_type)
            if anchor is None:
                continue
            yes = set()
            for o in w.objects.values():
                if o.id != anchor.id:
                    rel = assign_relation(o, anchor)
                    if rel is not None and rel is not Relation.IN:
                        yes.add((o.obj_type, rel))
            no = [(t, r) for t in types if t != anchor_type for r in rels if (t, r) not in yes]
            picks = sorted(yes, key=lambda p: (p[0], p[1].value))
            if no:
                order = rng.permutation(len(no))[:max(1, len(picks))]
                picks += [no[int(k)] for k in sorted(order)]
            for t, rel in picks:
                ep = self._solvable(QuestionAST(QuestionType.SPATIAL, t, SpatialTarget(rel, anchor_type)), anchor.id, anchor.id)
                if ep is not None:
                    out.append(ep)
        return out

    def questions(self, qtype: QuestionType, rng: np.random.Generator) -> list[Episode]:
        qtype = QuestionType(qtype)
        if qtype is QuestionType.SPATIAL:
            return self.spatial_questions(rng)
        return self.receptacle_questions(qtype, rng)


def episode_candidates(world: World, qtype, seed: int = 0) -> list[Episode]:
    """Every validated episode of `qtype` for `world` (ids left as '?')."""
    return _Candidates(world).questions(qtype, np.random.default_rng([seed, 11]))


def gen_episode(world: World, qtype, seed: int = 0) -> Episode:
    """One validated episode of `qtype`, chosen by `seed`."""
    cands = episode_candidates(world, qtype, seed)
    if not cands:
        raise NoValidEpisode(f"{world.scene_id}/{world.config_id} has no {QuestionType(qtype).value} episode")
    rng = np.random.default_rng([seed, 13])
    ep = cands[int(rng.integers(len(cands)))]
    return dataclasses.replace(ep, episode_id=f"{world.scene_id}-{world.config_id}-{ep.qtype.value[:1]}")


# --- manifest ------------------------------------------------------------------


@dataclass
class DatasetManifest:
    seed: int
    scenes: list[dict]
    episodes: list[Episode]
    split: dict[str, str] = field(default_factory=dict)
    version: int = DATASET_FORMAT_VERSION

    def __post_init__(self):
        train = {s for s, v in self.split.items() if v == "train"}
        test = {s for s, v in self.split.items() if v == "test"}
        if train & test:
            raise ValueError("a scene cannot be in both splits")

    def episode(self, episode_id: str) -> Episode:
        for ep in self.episodes:
            if ep.episode_id == episode_id:
                return ep
        raise KeyError(episode_id)

    def type_counts(self) -> dict[str, int]:
        out = {q.value: 0 for q in QuestionType}
        for ep in self.episodes:
            out[ep.qtype.value] += 1
        return out

    def header(self) -> dict:
        return {
            "record": "manifest",
            "version": self.version,
            "seed": self.seed,
            "num_episodes": len(self.episodes),
            "scenes": self.scenes,
            "split": dict(sorted(self.split.items())),
        }


def quotas(n: int) -> dict[QuestionType, int]:
    """Split `n` episodes across question types by largest remainder."""
    total = sum(TYPE_RATIO.values())
    exact = {q: n * r / total for q, r in TYPE_RATIO.items()}
    out = {q: int(math.floor(v)) for q, v in exact.items()}
    rest = n - sum(out.values())
    for q in sorted(exact, key=lambda q: (out[q] - exact[q], list(QuestionType).index(q)))[:rest]:
        out[q] += 1
    return out


def sample_worlds(seed: int, num_scenes: int = DEFAULT_SCENES, configs_per_scene: int = CONFIGS_PER_SCENE):
    """Scenes cycling through the room types, each with several configs.

    Returns ``(scene records, worlds)`` with worlds keyed by (scene_id, config_id).
    """
    scenes, worlds = [], {}
    for k in range(num_scenes):
        room = ROOM_TYPES[k % len(ROOM_TYPES)]
        scene_seed = seed * 1000 + k
        base = sample_scene(scene_seed, room)
        configs = []
        for c in range(configs_per_scene):
            w = sample_config(base, scene_seed, c)
            worlds[(w.scene_id, w.config_id)] = w
            configs.append(w.config_id)
        scenes.append({"scene_id": base.scene_id, "room_type": room, "seed": scene_seed, "configs": configs})
        log.info("scene %s: %d objects", base.scene_id, len(base.objects))
    return scenes, worlds


def build_dataset(seed: int = 0, num_scenes: int = DEFAULT_SCENES, num_episodes: int | None = None,
                  configs_per_scene: int = CONFIGS_PER_SCENE, train_fraction: float = DEFAULT_TRAIN_FRACTION):
    """Generate scenes and episodes; returns ``(manifest, worlds)``.

    `worlds` maps (scene_id, config_id) to the configured world.
    """
    if num_episodes is None:
        num_episodes = int(round(num_scenes * EPISODES_PER_SCENE))
    scenes, worlds = sample_worlds(seed, num_scenes, configs_per_scene)

    rng = np.random.default_rng([seed, 17])
    keys = sorted(worlds)
    chosen = []
    for qtype, quota in quotas(num_episodes).items():
        pools = []
        for key in keys:
            cands = _Candidates(worlds[key]).questions(qtype, rng)
            pools.append([cands[int(i)] for i in rng.permutation(len(cands))])
        taken = 0
        while taken < quota and any(pools):
            for pool in pools:
                if pool and taken < quota:
                    chosen.append(pool.pop())
                    taken += 1
        if taken < quota:
            log.warning("only %d of %d %s episodes available", taken, quota, qtype.value)

    qorder = {q: i for i, q in enumerate(QuestionType)}
    chosen.sort(key=lambda e: (e.scene_id, e.config_id, qorder[e.qtype], e.question_utterance, e.target_object_id))
    episodes = [dataclasses.replace(e, episode_id=f"ep{i:05d}") for i, e in enumerate(chosen)]
    manifest = DatasetManifest(seed, scenes, episodes)
    return split(manifest, train_fraction), worlds


def split(manifest: DatasetManifest, train_fraction: float = DEFAULT_TRAIN_FRACTION) -> DatasetManifest:
    """Scene-level train/test partition; the test share is rounded down."""
    ids = sorted(s["scene_id"] for s in manifest.scenes)
    n = len(ids)
    if n < 2:
        raise TooFewScenes(f"need at least 2 scenes, got {n}")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n_test = min(max(int(math.floor(n * (1 - train_fraction) + 1e-9)), 1), n - 1)
    order = np.random.default_rng([manifest.seed, 19]).permutation(n)
    test = {ids[int(k)] for k in order[:n_test]}
    assignment = {s: ("test" if s in test else "train") for s in ids}
    return dataclasses.replace(manifest, split=assignment)


# --- persistence ---------------------------------------------------------------

MANIFEST_NAME = "manifest.jsonl"


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def scene_path(root, scene_id: str, config_id: str) -> Path:
    return Path(root) / "scenes" / scene_id / f"{config_id}.json"


def write_dataset(manifest: DatasetManifest, root, worlds: dict | None = None) -> Path:
    """Write ``manifest.jsonl`` and, when given, every scene file under `root`."""
    from .world import dumps_world

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if worlds:
        for (sid, cid), w in sorted(worlds.items()):
            p = scene_path(root, sid, cid)
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(dumps_world(w))
    lines = [_dumps(manifest.header())] + [_dumps(e.to_record()) for e in manifest.episodes]
    out = root / MANIFEST_NAME
    tmp = out.with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, out)
    return out


def read_dataset(root) -> DatasetManifest:
    path = Path(root)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise SchemaError("empty dataset file", 1)
    header = None
    episodes = []
    for n, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", n) from exc
        kind = rec.get("record") if isinstance(rec, dict) else None
        if n == 1:
            if kind != "manifest":
                raise SchemaError("first record must be the manifest header", n)
            if rec.get("version") != DATASET_FORMAT_VERSION:
                raise SchemaError(f"unsupported dataset version {rec.get('version')!r}", n)
            header = rec
            continue
        if kind != "episode":
            raise SchemaError(f"unexpected record kind {kind!r}", n)
        try:
            ep = Episode.from_record(rec)
            if parse(ep.question_utterance) != ep.question_ast:
                raise ValueError("question does not parse to its stored AST")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad episode record: {exc}", n) from exc
        episodes.append(ep)
    try:
        expected = int(header["num_episodes"])
        manifest = DatasetManifest(int(header["seed"]), header["scenes"], episodes, dict(header["split"]), header["version"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad manifest header: {exc}", 1) from exc
    if len(episodes) != expected:
        raise SchemaError(f"expected {expected} episodes, found {len(episodes)} (truncated?)", len(lines))
    return manifest


def load_worlds(manifest: DatasetManifest, root) -> dict:
    """Load every configured world the manifest lists; missing files raise FileNotFoundError."""
    from .world import load_world

    out = {}
    for s in manifest.scenes:
        for cid in s["configs"]:
            out[(s["scene_id"], cid)] = load_world(scene_path(root, s["scene_id"], cid))
    return out
