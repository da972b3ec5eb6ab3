"""Incremental scene graphs with spatial relations between object boxes.

Relations are decided from two pairwise metrics, the centroid distance ``l``
and the 3D IoU of the boxes, plus containment and vertical contact tests.
Directions are world-frame: ``left_of`` means smaller x.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .boxes import Box3, centroid_distance, containment, footprint_overlap, iou3d
from .world import CONTAINMENT_MIN, Observation, VisibleObject

__all__ = [
    "Relation",
    "Edge",
    "SceneGraph",
    "assign_relation",
    "build_graph",
    "centroid_distance",
    "iou3d",
    "update_graph",
]

ON_MAX_GAP = 0.05
ON_PENETRATION_TOL = 0.01
ON_MIN_FOOTPRINT = 0.5
L_MAX = 1.5


class Relation(str, enum.Enum):
    IN = "in"
    ON = "on"
    ABOVE = "above"
    BELOW = "below"
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    NEAR = "near"


def _gap_above(upper: Box3, lower: Box3) -> float:
    return upper.min_corner[1] - lower.max_corner[1]


def assign_relation(subject, anchor, l_max: float = L_MAX) -> Relation | None:
    """Relation of `subject` with respect to `anchor`, or None.

    Both arguments need ``id``, ``box`` and ``parent_id`` attributes
    (:class:`~manipqa.world.ObjectInstance` and
    :class:`~manipqa.world.VisibleObject` both qualify). Predicates are
    tried in the order in, on, above, below, left_of/right_of, near.
    """
    s, a = subject.box, anchor.box
    if subject.parent_id == anchor.id or containment(s, a) >= CONTAINMENT_MIN:
        return Relation.IN
    overlap = footprint_overlap(s, a)
    gap = _gap_above(s, a)
    if -ON_PENETRATION_TOL <= gap <= ON_MAX_GAP and overlap / s.footprint_area >= ON_MIN_FOOTPRINT:
        return Relation.ON
    l = centroid_distance(s, a)
    if l > l_max:
        return None
    if overlap > 0:
        if gap > ON_MAX_GAP:
            return Relation.ABOVE
        if _gap_above(a, s) > ON_MAX_GAP:
            return Relation.BELOW
    else:
        dx = s.center[0] - a.center[0]
        dz = s.center[2] - a.center[2]
        if abs(dx) > abs(dz):
            return Relation.LEFT_OF if dx < 0 else Relation.RIGHT_OF
    return Relation.NEAR


@dataclass(frozen=True)
class Edge:
    subject: str
    relation: Relation
    anchor: str
    l: float
    s_iou: float


@dataclass
class SceneGraph:
    nodes: dict[str, VisibleObject] = field(default_factory=dict)
    edges: dict[tuple[str, str], Edge] = field(default_factory=dict)

    def copy(self) -> "SceneGraph":
        return SceneGraph(dict(self.nodes), dict(self.edges))

    def node_type(self, node_id: str) -> str:
        return self.nodes[node_id].obj_type

    def out_edges(self, subject: str) -> list[Edge]:
        return sorted((e for (s, _), e in self.edges.items() if s == subject), key=lambda e: e.anchor)

    def has_edge(self, subject: str, relation: Relation, anchor: str) -> bool:
        e = self.edges.get((subject, anchor))
        return e is not None and e.relation == relation

    def type_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for n in self.nodes.values():
            counts[n.obj_type] = counts.get(n.obj_type, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "type": n.obj_type} for n in sorted(self.nodes.values(), key=lambda n: n.id)],
            "edges": [
                {"subject": e.subject, "relation": e.relation.value, "anchor": e.anchor, "l": round(e.l, 6), "s_iou": round(e.s_iou, 6)}
                for _, e in sorted(self.edges.items())
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _edge(subject: VisibleObject, anchor: VisibleObject) -> Edge | None:
    rel = assign_relation(subject, anchor)
    if rel is None:
        return None
    return Edge(subject.id, rel, anchor.id, centroid_distance(subject.box, anchor.box), iou3d(subject.box, anchor.box))


def _refresh(graph: SceneGraph, dirty: set[str]) -> None:
    for d in sorted(dirty):
        for other in graph.nodes:
            if other == d:
                continue
            for s, a in ((d, other), (other, d)):
                e = _edge(graph.nodes[s], graph.nodes[a])
                if e is None:
                    graph.edges.pop((s, a), None)
                else:
                    graph.edges[(s, a)] = e


def update_graph(graph: SceneGraph, observation: Observation) -> SceneGraph:
    """Fold one observation into a copy of `graph`.

    Unseen objects become nodes. Edges are recomputed for every pair that
    touches a new object or one whose box or parent changed; all other edges
    are carried over untouched.
    """
    out = graph.copy()
    dirty = set()
    for v in observation.visible:
        if out.nodes.get(v.id) != v:
            out.nodes[v.id] = v
            dirty.add(v.id)
    _refresh(out, dirty)
    return out


def build_graph(objects) -> SceneGraph:
    """One-shot graph over an iterable of objects (instances or visible records)."""
    g = SceneGraph()
    for o in objects:
        g.nodes[o.id] = o if isinstance(o, VisibleObject) else VisibleObject(o.id, o.obj_type, o.box, o.parent_id)
    _refresh(g, set(g.nodes))
    return g
