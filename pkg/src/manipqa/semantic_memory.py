"""3D semantic voxel memory and its column projection to a 2D map.

Voxels and map cells share the navigation lattice (0.25 m by default), so a
map cell is exactly one vertical voxel column.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import lattice_span
from .scene_graph import SceneGraph, update_graph
from .vocab import FREE, UNKNOWN, default_vocabulary
from .world import AGENT_HEIGHT, CELL_SIZE, Heading, Observation, Pose, World, observe

VOXEL_SIZE = CELL_SIZE


@dataclass
class VoxelMemory:
    """Sparse voxel labels over a fixed room lattice.

    Missing keys are Unknown. ``shape`` is (nx, ny, nz) in voxels and
    ``origin`` the room's min corner.
    """

    shape: tuple[int, int, int]
    voxel_size: float = VOXEL_SIZE
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cells: dict[tuple[int, int, int], str] = field(default_factory=dict)
    # last box written for each object id; unchanged boxes are not rewritten
    written: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")

    @classmethod
    def for_world(cls, world: World, voxel_size: float = VOXEL_SIZE) -> "VoxelMemory":
        ex = world.bounds.extent
        shape = tuple(int(round(e / voxel_size)) for e in ex)
        return cls(shape, voxel_size, world.bounds.min_corner)

    def copy(self) -> "VoxelMemory":
        return VoxelMemory(self.shape, self.voxel_size, self.origin, dict(self.cells), dict(self.written))

    def label_at(self, key) -> str:
        return self.cells.get(tuple(key), UNKNOWN)

    def voxels_of(self, box) -> list[tuple[int, int, int]]:
        spans = [lattice_span(box.min_corner[i], box.max_corner[i], self.origin[i], self.voxel_size) for i in range(3)]
        nx, ny, nz = self.shape
        return [
            (i, k, j)
            for i in spans[0] if 0 <= i < nx
            for k in spans[1] if 0 <= k < ny
            for j in spans[2] if 0 <= j < nz
        ]

    def unknown_count(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz - len(self.cells)

    def band_layers(self, agent_height: float = AGENT_HEIGHT) -> int:
        """Number of bottom voxel layers that intersect [0, agent_height)."""
        return int(np.ceil(agent_height / self.voxel_size - 1e-9))


def _depth(obs: Observation, v) -> int:
    by_id = obs.by_id()
    d, p = 0, v.parent_id
    while p is not None and p in by_id and d < 64:
        d, p = d + 1, by_id[p].parent_id
    return d


def integrate(mem: VoxelMemory, observation: Observation, mark_free: bool = True) -> VoxelMemory:
    """Write every visible object's voxels into a copy of `mem`.

    Parents are written before their contents so a contained object keeps its
    voxels. With `mark_free`, the band voxels of the viewpoint column become
    Free unless an object already claimed them.
    """
    out = mem.copy()
    _integrate_into(out, observation, mark_free)
    return out


def _integrate_into(mem: VoxelMemory, observation: Observation, mark_free: bool = True) -> None:
    for v in sorted(observation.visible, key=lambda v: (_depth(observation, v), v.id)):
        if mem.written.get(v.id) == v.box:
            continue
        for key in mem.voxels_of(v.box):
            mem.cells[key] = v.obj_type
        mem.written[v.id] = v.box
    if mark_free:
        i, j = observation.viewpoint.cell
        for k in range(min(mem.band_layers(), mem.shape[1])):
            if (i, k, j) not in mem.cells:
                mem.cells[(i, k, j)] = FREE


@dataclass(frozen=True)
class MapCell:
    labels: frozenset = frozenset()
    blocked: bool = False  # an object label lies inside the agent's height band
    known: bool = False  # some voxel of the column has been observed


@dataclass
class SemanticMap2D:
    shape: tuple[int, int]
    cell_size: float = CELL_SIZE
    cells: dict[tuple[int, int], MapCell] = field(default_factory=dict)
    unknown_traversable: bool = True

    def cell(self, c) -> MapCell:
        return self.cells.get(tuple(c), MapCell())

    def traversable(self, c) -> bool:
        i, j = c
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
            return False
        mc = self.cell(c)
        if mc.blocked:
            return False
        return mc.known or self.unknown_traversable

    def traversable_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                m[i, j] = self.traversable((i, j))
        return m

    def labels(self) -> set[str]:
        out: set[str] = set()
        for mc in self.cells.values():
            out |= mc.labels
        return out

    @classmethod
    def from_mask(cls, blocked, cell_size: float = CELL_SIZE, label: str = "Shelf") -> "SemanticMap2D":
        """Fully-known map whose blocked cells carry `label` (handy for planner tests)."""
        blocked = np.asarray(blocked, dtype=bool)
        cells = {}
        for (i, j), b in np.ndenumerate(blocked):
            cells[(i, j)] = MapCell(frozenset([label]) if b else frozenset(), bool(b), True)
        return cls(blocked.shape, cell_size, cells)

    def __eq__(self, other):
        if not isinstance(other, SemanticMap2D):
            return NotImplemented
        keys = set(self.cells) | set(other.cells)
        return (
            self.shape == other.shape
            and self.cell_size == other.cell_size
            and self.unknown_traversable == other.unknown_traversable
            and all(self.cell(k) == other.cell(k) for k in keys)
        )


def project_2d(mem: VoxelMemory, agent_height: float = AGENT_HEIGHT, unknown_traversable: bool = True) -> SemanticMap2D:
    """Collapse voxel columns into 2D cells (label union + band blocking)."""
    band = mem.band_layers(agent_height)
    cols: dict[tuple[int, int], tuple[set, bool]] = {}
    for (i, k, j), label in mem.cells.items():
        labels, blocked = cols.get((i, j), (set(), False))
        if label not in (FREE, UNKNOWN):
            labels.add(label)
            if k < band:
                blocked = True
        cols[(i, j)] = (labels, blocked)
    cells = {c: MapCell(frozenset(l), b, True) for c, (l, b) in cols.items()}
    return SemanticMap2D((mem.shape[0], mem.shape[2]), mem.voxel_size, cells, unknown_traversable)


def merge_maps(a: SemanticMap2D, b: SemanticMap2D) -> SemanticMap2D:
    if a.shape != b.shape or a.cell_size != b.cell_size:
        raise ValueError("maps cover different lattices")
    cells = {}
    for c in set(a.cells) | set(b.cells):
        x, y = a.cell(c), b.cell(c)
        cells[c] = MapCell(x.labels | y.labels, x.blocked or y.blocked, x.known or y.known)
    return SemanticMap2D(a.shape, a.cell_size, cells, a.unknown_traversable)


# --- sampling sweep ------------------------------------------------------------


def sweep_cells(traversable: np.ndarray) -> list[tuple[int, int]]:
    """Lawnmower order over traversable cells: rows of z, alternating x direction."""
    nx, nz = traversable.shape
    out = []
    for j in range(nz):
        xs = range(nx) if j % 2 == 0 else range(nx - 1, -1, -1)
        out.extend((i, j) for i in xs if traversable[i, j])
    return out


def sweep_observations(world: World) -> list[Observation]:
    """Frames gathered along the sweep, four headings per cell."""
    blocked = world.occupancy()
    obs, t = [], 0
    for c in sweep_cells(~blocked):
        for h in Heading:
            obs.append(observe(world, Pose(c, h), timestamp=t))
            t += 1
    return obs


@dataclass
class ExplorationResult:
    memory: VoxelMemory
    map2d: SemanticMap2D
    graph: SceneGraph
    seen: set[str]


def explore(world: World) -> ExplorationResult:
    """Run the sampling sweep and accumulate memory, map and scene graph."""
    mem = VoxelMemory.for_world(world)
    graph = SceneGraph()
    for o in sweep_observations(world):
        _integrate_into(mem, o)
        if any(graph.nodes.get(v.id) != v for v in o.visible):
            graph = update_graph(graph, o)
    return ExplorationResult(mem, project_2d(mem), graph, set(graph.nodes))


# --- text export ---------------------------------------------------------------


def export_map_text(map2d: SemanticMap2D) -> str:
    """One line per z row; tokens are '?' (unknown), '.' (known, empty) or
    '+'-joined vocabulary ids, suffixed with '#' when blocked."""
    vocab = default_vocabulary()
    nx, nz = map2d.shape
    lines = [f"map {nx} {nz} {map2d.cell_size}"]
    for j in range(nz):
        toks = []
        for i in range(nx):
            mc = map2d.cell((i, j))
            if not mc.known:
                tok = "?"
            elif mc.labels:
                tok = "+".join(str(i_) for i_ in sorted(vocab.label_id(l) for l in mc.labels))
            else:
                tok = "."
            toks.append(tok + ("#" if mc.blocked else ""))
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def parse_map_text(text: str, unknown_traversable: bool = True) -> SemanticMap2D:
    vocab = default_vocabulary()
    names = {o.id: o.name for o in vocab.objects}
    lines = text.strip("\n").split("\n")
    _, nx, nz, cs = lines[0].split()
    nx, nz = int(nx), int(nz)
    cells = {}
    for j, line in enumerate(lines[1:]):
        for i, tok in enumerate(line.split()):
            blocked = tok.endswith("#")
            tok = tok.rstrip("#")
            if tok == "?":
                if blocked:
                    cells[(i, j)] = MapCell(frozenset(), True, False)
                continue
            labels = frozenset() if tok == "." else frozenset(names[int(t)] for t in tok.split("+"))
            cells[(i, j)] = MapCell(labels, blocked, True)
    return SemanticMap2D((nx, nz), float(cs), cells, unknown_traversable)
