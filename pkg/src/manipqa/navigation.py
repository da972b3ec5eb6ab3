"""Goal lookup and shortest-path planning on the 2D semantic map.

Motion is 4-connected with unit step cost. All-pairs distances come from a
vectorised Floyd-Warshall over the traversable cells, with a next-hop table
for path reconstruction.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .semantic_memory import SemanticMap2D

STEP_BUDGETS = (25, 50)
NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class Unreachable(Exception):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class PathPlan:
    cells: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return len(self.cells) - 1


@dataclass(frozen=True)
class NavResult:
    success: bool
    path_taken: int
    shortest: int | None
    budget: int

    def __post_init__(self):
        if self.path_taken < 0:
            raise ValueError("path_taken must be non-negative")
        if self.success and self.path_taken > self.budget:
            raise ValueError("a successful episode cannot exceed its budget")


def neighbors4(cell, shape):
    i, j = cell
    for di, dj in NEIGHBORS:
        a, b = i + di, j + dj
        if 0 <= a < shape[0] and 0 <= b < shape[1]:
            yield a, b


def locate_label(map2d: SemanticMap2D, label: str) -> list[tuple[int, int]]:
    """Cells whose label set contains `label`, sorted by (x, z)."""
    return sorted(c for c, mc in map2d.cells.items() if label in mc.labels)


@dataclass
class FloydTables:
    cells: list[tuple[int, int]]
    index: dict[tuple[int, int], int]
    dist: np.ndarray  # float, inf when disconnected
    next_hop: np.ndarray  # int, -1 when disconnected
    shape: tuple[int, int]

    def traversable_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for c in self.cells:
            m[c] = True
        return m

    def distance(self, u, v) -> float:
        iu, iv = self.index.get(tuple(u)), self.index.get(tuple(v))
        if iu is None or iv is None:
            return float("inf")
        return float(self.dist[iu, iv])

    def path(self, u, v) -> list[tuple[int, int]]:
        iu, iv = self.index[tuple(u)], self.index[tuple(v)]
        if self.next_hop[iu, iv] < 0:
            raise Unreachable(f"{u} -> {v}")
        out = [iu]
        while iu != iv:
            iu = int(self.next_hop[iu, iv])
            out.append(iu)
        return [self.cells[k] for k in out]


def floyd_apsp(map2d_or_mask) -> FloydTables:
    """All-pairs shortest paths over traversable cells.

    Accepts a :class:`SemanticMap2D` or a boolean traversability mask.
    """
    if isinstance(map2d_or_mask, SemanticMap2D):
        mask = map2d_or_mask.traversable_mask()
    else:
        mask = np.asarray(map2d_or_mask, dtype=bool)
    cells = [tuple(int(v) for v in c) for c in np.argwhere(mask)]
    index = {c: k for k, c in enumerate(cells)}
    n = len(cells)
    dist = np.full((n, n), np.inf)
    nxt = np.full((n, n), -1, dtype=np.int64)
    idx = np.arange(n)
    dist[idx, idx] = 0.0
    nxt[idx, idx] = idx
    for c, k in index.items():
        for nb in neighbors4(c, mask.shape):
            m = index.get(nb)
            if m is not None:
                dist[k, m] = 1.0
                nxt[k, m] = m
    via = np.empty_like(dist)
    better = np.empty((n, n), dtype=bool)
    for k in range(n):
        np.add(dist[:, k, None], dist[None, k, :], out=via)
        np.less(via, dist, out=better)
        np.copyto(dist, via, where=better)
        np.copyto(nxt, nxt[:, k, None], where=better)
    return FloydTables(cells, index, dist, nxt, tuple(mask.shape))


def arrival_cells(traversable, goal_cells) -> list[tuple[int, int]]:
    """Traversable cells 4-adjacent to any goal cell, sorted by (x, z)."""
    traversable = np.asarray(traversable, dtype=bool)
    out = set()
    for g in goal_cells:
        for nb in neighbors4(g, traversable.shape):
            if traversable[nb]:
                out.add(nb)
    return sorted(out)


def plan_path(tables: FloydTables, start, goal_cells) -> PathPlan:
    """Shortest path from `start` to the nearest cell adjacent to a goal cell.

    Ties between equally near end cells go to the smallest (x, z).
    """
    start = tuple(start)
    if start not in tables.index:
        raise Unreachable(f"start {start} is not traversable")
    ends = arrival_cells(tables.traversable_mask(), goal_cells)
    best = None
    for e in ends:
        d = tables.distance(start, e)
        if np.isfinite(d) and (best is None or d < best[0]):
            best = (d, e)
    if best is None:
        raise Unreachable(f"no reachable cell next to {list(goal_cells)[:4]}")
    return PathPlan(tuple(tables.path(start, best[1])))


def bfs_distances(traversable, start) -> np.ndarray:
    """Step distances from `start` over a traversability mask (inf when unreachable)."""
    traversable = np.asarray(traversable, dtype=bool)
    dist = np.full(traversable.shape, np.inf)
    start = tuple(start)
    if not traversable[start]:
        return dist
    dist[start] = 0
    q = deque([start])
    while q:
        c = q.popleft()
        for nb in neighbors4(c, traversable.shape):
            if traversable[nb] and dist[nb] == np.inf:
                dist[nb] = dist[c] + 1
                q.append(nb)
    return dist


def spl(results) -> float:
    """Success weighted by path length, averaged over episodes."""
    results = list(results)
    if not results:
        raise EmptyInput("spl of no episodes")
    total = 0.0
    for r in results:
        if r.success:
            if not r.shortest or r.shortest <= 0:
                raise ValueError("successful episode needs a positive shortest path")
            total += r.shortest / max(r.path_taken, r.shortest)
    return total / len(results)


def success_rate(results) -> float:
    results = list(results)
    if not results:
        raise EmptyInput("success rate of no episodes")
    return sum(r.success for r in results) / len(results)
