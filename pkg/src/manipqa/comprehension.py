"""Symbolic referring-expression comprehension.

Each visible candidate gets three module scores (subject, location,
relationship). Modules absent from the expression get weight 0 and the rest
share the weight uniformly; the single-hop grammar never fills the location
channel, so it is always inert.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .boxes import Box3, iou3d, jitter_box
from .language import ReferringExpressionAST
from .navigation import EmptyInput
from .scene_graph import SceneGraph
from .vocab import default_vocabulary
from .world import Observation, VisibleObject

SCORE_THRESHOLD = 0.99


class ComprehensionError(Exception):
    pass


class Ambiguous(ComprehensionError):
    pass


class NoMatch(ComprehensionError):
    pass


@dataclass(frozen=True)
class CandidateScore:
    candidate_id: str
    s_subject: float
    s_location: float
    s_relationship: float
    weights: tuple[float, float, float]

    @property
    def total(self) -> float:
        w = self.weights
        return w[0] * self.s_subject + w[1] * self.s_location + w[2] * self.s_relationship

    def scaled(self, c: float) -> "CandidateScore":
        return dataclasses.replace(
            self, s_subject=c * self.s_subject, s_location=c * self.s_location, s_relationship=c * self.s_relationship
        )


def module_weights(ast: ReferringExpressionAST) -> tuple[float, float, float]:
    present = (True, False, ast.relation is not None)
    n = sum(present)
    return tuple(1.0 / n if p else 0.0 for p in present)


def score_candidate(ast: ReferringExpressionAST, candidate: VisibleObject, observation: Observation, graph: SceneGraph) -> CandidateScore:
    s_subject = 1.0 if candidate.obj_type == ast.subject_type else 0.0
    s_rel = 0.0
    if ast.relation is not None:
        for v in observation.visible:
            if v.id != candidate.id and v.obj_type == ast.anchor_type and graph.has_edge(candidate.id, ast.relation, v.id):
                s_rel = 1.0
                break
    return CandidateScore(candidate.id, s_subject, 0.0, s_rel, module_weights(ast))


def score_all(ast, observation: Observation, graph: SceneGraph) -> list[CandidateScore]:
    return [score_candidate(ast, v, observation, graph) for v in observation.visible]


def pick(scores: list[CandidateScore], threshold: float = SCORE_THRESHOLD) -> CandidateScore:
    """Unique arg-max of `scores`; raises NoMatch or Ambiguous."""
    if not scores:
        raise NoMatch("no visible candidates")
    best = max(s.total for s in scores)
    if best < threshold:
        raise NoMatch(f"best score {best:.2f} below {threshold}")
    top = [s for s in scores if np.isclose(s.total, best, rtol=0, atol=1e-12)]
    if len(top) > 1:
        raise Ambiguous(", ".join(s.candidate_id for s in top))
    return top[0]


def resolve(ast, observation: Observation, graph: SceneGraph, threshold: float = SCORE_THRESHOLD) -> tuple[str, Box3]:
    """Localize the referent among the visible objects as ``(id, box)``."""
    best = pick(score_all(ast, observation, graph), threshold)
    return best.candidate_id, observation.by_id()[best.candidate_id].box


def prec_at(results, x: float = 0.5) -> float:
    """Fraction of (predicted, truth) box pairs with IoU above `x`.

    A predicted box of None (comprehension failed) counts as a miss.
    """
    results = list(results)
    if not results:
        raise EmptyInput("prec@X of no predictions")
    hits = sum(1 for pred, truth in results if pred is not None and iou3d(pred, truth) > x)
    return hits / len(results)


def perturb_observation(observation: Observation, sigma: float, label_flip: float, rng: np.random.Generator) -> Observation:
    """Simulated perception noise: box-corner jitter and random label flips."""
    if sigma == 0 and label_flip == 0:
        return observation
    names = default_vocabulary().names
    out = []
    for v in observation.visible:
        box = jitter_box(v.box, sigma, rng)
        obj_type = v.obj_type
        if label_flip > 0 and rng.random() < label_flip:
            others = [n for n in names if n != obj_type]
            obj_type = others[int(rng.integers(len(others)))]
        out.append(VisibleObject(v.id, obj_type, box, v.parent_id))
    return dataclasses.replace(observation, visible=tuple(out))
