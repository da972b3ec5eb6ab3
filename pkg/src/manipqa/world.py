"""Discrete room model: objects, containment, visibility and manipulation.

A :class:`World` is treated as a value. :func:`apply_action` returns a new
world and leaves its input untouched, so callers can keep the pre-action
state around (the question answerer needs both frames).
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .boxes import Box3, containment, intersection_volume, iou3d, lattice_span
from .vocab import default_vocabulary

CELL_SIZE = 0.25
VISIBILITY_DISTANCE = 1.5
FIELD_OF_VIEW_DEG = 90.0
REACH_RADIUS = 1.0
AGENT_HEIGHT = 1.0
CONTAINMENT_MIN = 0.9
MAX_OVERLAP_IOU = 0.5

ROOM_TYPES = ("Kitchen", "LivingRoom", "Bedroom", "Bathroom")
SCENE_FORMAT_VERSION = 1


class Heading(str, enum.Enum):
    PX = "+x"
    NX = "-x"
    PZ = "+z"
    NZ = "-z"

    @property
    def vector(self) -> tuple[int, int]:
        return {"+x": (1, 0), "-x": (-1, 0), "+z": (0, 1), "-z": (0, -1)}[self.value]

    @classmethod
    def toward(cls, src, dst) -> "Heading":
        dx, dz = dst[0] - src[0], dst[1] - src[1]
        if abs(dx) >= abs(dz):
            return cls.PX if dx > 0 else cls.NX
        return cls.PZ if dz > 0 else cls.NZ


class ActionKind(str, enum.Enum):
    OPEN = "Open"
    MOVE = "Move"
    PICKUP = "Pickup"


class ActionError(Exception):
    pass


class OutOfReach(ActionError):
    pass


class Unaffordable(ActionError):
    pass


class UnknownTarget(ActionError):
    pass


class Blocked(ActionError):
    """Move found no free neighboring cell."""


class SchemaError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    obj_type: str
    box: Box3
    openable: bool = False
    pickupable: bool = False
    movable: bool = False
    is_open: bool = False
    parent_id: str | None = None

    @classmethod
    def of_type(cls, id, obj_type, box, **kw) -> "ObjectInstance":
        """Build an instance with affordance flags taken from the vocabulary."""
        t = default_vocabulary()[obj_type]
        flags = dict(openable=t.openable, pickupable=t.pickupable, movable=t.movable)
        flags.update(kw)
        return cls(id, obj_type, box, **flags)


@dataclass(frozen=True)
class AgentState:
    cell: tuple[int, int]
    heading: Heading = Heading.PZ
    reach_radius: float = REACH_RADIUS
    inventory: tuple[str, ...] = ()


class Pose(NamedTuple):
    cell: tuple[int, int]
    heading: Heading


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    target_id: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ActionKind(self.kind))


@dataclass(frozen=True)
class VisibleObject:
    id: str
    obj_type: str
    box: Box3
    parent_id: str | None = None


@dataclass(frozen=True)
class Observation:
    viewpoint: Pose
    visible: tuple[VisibleObject, ...]
    timestamp: int = 0

    def by_id(self) -> dict[str, VisibleObject]:
        return {v.id: v for v in self.visible}


@dataclass
class World:
    scene_id: str
    room_type: str
    bounds: Box3
    objects: dict[str, ObjectInstance]
    agent: AgentState
    cell_size: float = CELL_SIZE
    config_id: str = "c0"
    # objects removed from the room by Pickup, keyed by id
    carried: dict[str, ObjectInstance] = field(default_factory=dict)

    @property
    def grid_shape(self) -> tuple[int, int]:
        ex = self.bounds.extent
        return round(ex[0] / self.cell_size), round(ex[2] / self.cell_size)

    def cell_center(self, cell) -> tuple[float, float]:
        ox, _, oz = self.bounds.min_corner
        return ox + (cell[0] + 0.5) * self.cell_size, oz + (cell[1] + 0.5) * self.cell_size

    def footprint_cells(self, box: Box3) -> list[tuple[int, int]]:
        nx, nz = self.grid_shape
        ox, _, oz = self.bounds.min_corner
        xs = lattice_span(box.min_corner[0], box.max_corner[0], ox, self.cell_size)
        zs = lattice_span(box.min_corner[2], box.max_corner[2], oz, self.cell_size)
        return [(i, j) for i in xs for j in zs if 0 <= i < nx and 0 <= j < nz]

    def occupancy(self, agent_height: float = AGENT_HEIGHT) -> np.ndarray:
        """Boolean (nx, nz) array, True where an object intrudes into the agent's height band."""
        blocked = np.zeros(self.grid_shape, dtype=bool)
        floor = self.bounds.min_corner[1]
        for obj in self.objects.values():
            if obj.box.min_corner[1] < floor + agent_height:
                for c in self.footprint_cells(obj.box):
                    blocked[c] = True
        return blocked

    def ancestors(self, obj_id: str) -> list[str]:
        chain, seen = [], {obj_id}
        parent = self.objects[obj_id].parent_id
        while parent is not None:
            if parent in seen:
                raise ValueError(f"containment cycle through {parent}")
            seen.add(parent)
            chain.append(parent)
            parent = self.objects[parent].parent_id
        return chain

    def descendants(self, obj_id: str) -> list[str]:
        out, frontier = [], [obj_id]
        while frontier:
            cur = frontier.pop()
            kids = sorted(o.id for o in self.objects.values() if o.parent_id == cur)
            out.extend(kids)
            frontier.extend(kids)
        return out

    def type_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for o in self.objects.values():
            counts[o.obj_type] = counts.get(o.obj_type, 0) + 1
        return counts

    def validate(self) -> None:
        """Raise ValueError when a structural invariant is broken."""
        vocab = default_vocabulary()
        if self.room_type not in ROOM_TYPES:
            raise ValueError(f"unknown room type {self.room_type!r}")
        lo, hi = self.bounds.min_corner, self.bounds.max_corner
        tol = 1e-9
        for o in self.objects.values():
            if o.obj_type not in vocab:
                raise ValueError(f"{o.id}: type {o.obj_type!r} not in vocabulary")
            b = o.box
            if any(b.min_corner[i] < lo[i] - tol or b.max_corner[i] > hi[i] + tol for i in range(3)):
                raise ValueError(f"{o.id} lies outside the room")
            if o.parent_id is not None:
                parent = self.objects.get(o.parent_id)
                if parent is None:
                    raise ValueError(f"{o.id}: unknown parent {o.parent_id}")
                if not vocab[parent.obj_type].receptacle:
                    raise ValueError(f"{o.id}: parent {parent.id} is not a receptacle")
                if containment(o.box, parent.box) < CONTAINMENT_MIN:
                    raise ValueError(f"{o.id} is not inside {parent.id}")
            self.ancestors(o.id)
        free = [o for o in self.objects.values() if o.parent_id is None]
        for i, a in enumerate(free):
            for b in free[i + 1:]:
                if iou3d(a.box, b.box) > MAX_OVERLAP_IOU:
                    raise ValueError(f"{a.id} and {b.id} overlap")
        nx, nz = self.grid_shape
        c = self.agent.cell
        if not (0 <= c[0] < nx and 0 <= c[1] < nz) or self.occupancy()[c]:
            raise ValueError(f"agent cell {c} is not traversable")
        if self.agent.reach_radius <= 0:
            raise ValueError("reach radius must be positive")


# --- observation -----------------------------------------------------------


def in_view(world: World, pose: Pose, point, max_dist=VISIBILITY_DISTANCE, fov_deg=FIELD_OF_VIEW_DEG) -> bool:
    cx, cz = world.cell_center(pose.cell)
    dx, dz = point[0] - cx, point[2] - cz
    d = math.hypot(dx, dz)
    if d > max_dist:
        return False
    if d < 1e-9:
        return True
    hx, hz = pose.heading.vector
    cos_angle = (dx * hx + dz * hz) / d
    return cos_angle >= math.cos(math.radians(fov_deg / 2)) - 1e-12


def is_visible(world: World, obj_id: str, pose: Pose) -> bool:
    chain = world.ancestors(obj_id)
    if any(not world.objects[a].is_open for a in chain):
        return False
    root = world.objects[chain[-1] if chain else obj_id]
    return in_view(world, pose, root.box.center)


def observe(world: World, pose: Pose | None = None, timestamp: int = 0) -> Observation:
    """Symbolic egocentric frame: the objects the agent can see from `pose`."""
    if pose is None:
        pose = Pose(world.agent.cell, world.agent.heading)
    pose = Pose(tuple(pose[0]), Heading(pose[1]))
    visible = tuple(
        VisibleObject(o.id, o.obj_type, o.box, o.parent_id)
        for o in sorted(world.objects.values(), key=lambda o: o.id)
        if is_visible(world, o.id, pose)
    )
    return Observation(pose, visible, timestamp)


# --- manipulation ----------------------------------------------------------

MOVE_ORDER = (Heading.PX, Heading.NX, Heading.PZ, Heading.NZ)


def reach_distance(world: World, obj: ObjectInstance) -> float:
    cx, cz = world.cell_center(world.agent.cell)
    x, _, z = obj.box.center
    return math.hypot(x - cx, z - cz)


def _move_is_free(world: World, moving: list[str], offset) -> bool:
    lo, hi = world.bounds.min_corner, world.bounds.max_corner
    ids = set(moving)
    agent_cell = world.agent.cell
    floor = world.bounds.min_corner[1]
    for mid in moving:
        nb = world.objects[mid].box.translated(offset)
        if any(nb.min_corner[i] < lo[i] - 1e-9 or nb.max_corner[i] > hi[i] + 1e-9 for i in range(3)):
            return False
        if nb.min_corner[1] < floor + AGENT_HEIGHT and agent_cell in world.footprint_cells(nb):
            return False
        for other in world.objects.values():
            if other.id not in ids and intersection_volume(nb, other.box) > 1e-12:
                return False
    return True


def apply_action(world: World, action: Action) -> World:
    """Execute one manipulation and return the resulting world.

    Raises UnknownTarget, OutOfReach, Unaffordable or Blocked; the input
    world is never modified.
    """
    obj = world.objects.get(action.target_id)
    if obj is None:
        raise UnknownTarget(action.target_id)
    if reach_distance(world, obj) > world.agent.reach_radius + 1e-9:
        raise OutOfReach(f"{obj.id} is {reach_distance(world, obj):.2f} m away")
    objects = dict(world.objects)
    kind = action.kind
    if kind is ActionKind.OPEN:
        if not obj.openable:
            raise Unaffordable(f"{obj.obj_type} cannot be opened")
        objects[obj.id] = dataclasses.replace(obj, is_open=True)
        return dataclasses.replace(world, objects=objects)
    if kind is ActionKind.PICKUP:
        if not obj.pickupable:
            raise Unaffordable(f"{obj.obj_type} cannot be picked up")
        carried = dict(world.carried)
        for oid in [obj.id, *world.descendants(obj.id)]:
            carried[oid] = objects.pop(oid)
        agent = dataclasses.replace(world.agent, inventory=world.agent.inventory + (obj.id,))
        return dataclasses.replace(world, objects=objects, carried=carried, agent=agent)
    # Move
    if not obj.movable:
        raise Unaffordable(f"{obj.obj_type} cannot be moved")
    moving = [obj.id, *world.descendants(obj.id)]
    for heading in MOVE_ORDER:
        dx, dz = heading.vector
        offset = (dx * world.cell_size, 0.0, dz * world.cell_size)
        if _move_is_free(world, moving, offset):
            for mid in moving:
                m = objects[mid]
                objects[mid] = dataclasses.replace(m, box=m.box.translated(offset))
            return dataclasses.replace(world, objects=objects)
    raise Blocked(f"no free cell next to {obj.id}")


# --- scene files -------------------------------------------------------------


def _r(v: float) -> float:
    return round(v, 6)


def world_to_dict(world: World) -> dict:
    def obj_rec(o: ObjectInstance) -> dict:
        return {
            "id": o.id,
            "type": o.obj_type,
            "min": [_r(v) for v in o.box.min_corner],
            "max": [_r(v) for v in o.box.max_corner],
            "openable": o.openable,
            "pickupable": o.pickupable,
            "movable": o.movable,
            "is_open": o.is_open,
            "parent_id": o.parent_id,
        }

    return {
        "version": SCENE_FORMAT_VERSION,
        "scene_id": world.scene_id,
        "config_id": world.config_id,
        "room_type": world.room_type,
        "bounds": {"min": [_r(v) for v in world.bounds.min_corner], "max": [_r(v) for v in world.bounds.max_corner]},
        "cell_size": world.cell_size,
        "agent": {
            "cell": list(world.agent.cell),
            "heading": world.agent.heading.value,
            "reach_radius": world.agent.reach_radius,
            "inventory": list(world.agent.inventory),
        },
        "objects": [obj_rec(o) for o in sorted(world.objects.values(), key=lambda o: o.id)],
        "carried": [obj_rec(o) for o in sorted(world.carried.values(), key=lambda o: o.id)],
    }


def world_from_dict(d: dict) -> World:
    try:
        if d.get("version") != SCENE_FORMAT_VERSION:
            raise SchemaError(f"unsupported scene version {d.get('version')!r}")

        def obj(r):
            return ObjectInstance(
                id=r["id"],
                obj_type=r["type"],
                box=Box3(tuple(r["min"]), tuple(r["max"])),
                openable=bool(r["openable"]),
                pickupable=bool(r["pickupable"]),
                movable=bool(r["movable"]),
                is_open=bool(r["is_open"]),
                parent_id=r["parent_id"],
            )

        a = d["agent"]
        return World(
            scene_id=d["scene_id"],
            config_id=d["config_id"],
            room_type=d["room_type"],
            bounds=Box3(tuple(d["bounds"]["min"]), tuple(d["bounds"]["max"])),
            cell_size=float(d["cell_size"]),
            agent=AgentState(tuple(a["cell"]), Heading(a["heading"]), float(a["reach_radius"]), tuple(a["inventory"])),
            objects={r["id"]: obj(r) for r in d["objects"]},
            carried={r["id"]: obj(r) for r in d.get("carried", [])},
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed scene record: {exc}") from exc


def dumps_world(world: World) -> str:
    return json.dumps(world_to_dict(world), indent=1, sort_keys=True) + "\n"


def save_world(world: World, path) -> None:
    with open(path, "w") as f:
        f.write(dumps_world(world))


def load_world(path) -> World:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc.msg}", exc.lineno) from exc
    return world_from_dict(d)

