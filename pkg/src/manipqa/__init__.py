"""Interactive question answering in simulated rooms.

An agent explores a room, builds a semantic map and scene graph, walks to the
object a question refers to, manipulates it and answers from what it saw
before and after.
"""
from .boxes import Box3, iou3d
from .language import QuestionAST, QuestionType, ReferringExpressionAST, SpatialTarget, parse, realize
from .scene_graph import Relation, SceneGraph, assign_relation, build_graph, update_graph
from .world import Action, ActionKind, ObjectInstance, Observation, World, apply_action, observe

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionKind",
    "Box3",
    "ObjectInstance",
    "Observation",
    "QuestionAST",
    "QuestionType",
    "ReferringExpressionAST",
    "Relation",
    "SceneGraph",
    "SpatialTarget",
    "World",
    "apply_action",
    "assign_relation",
    "build_graph",
    "iou3d",
    "observe",
    "parse",
    "realize",
    "update_graph",
]
