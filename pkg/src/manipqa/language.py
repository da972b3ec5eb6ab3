"""Closed template grammar for referring expressions and questions.

Forms produced and accepted::

    the {OBJ1} {REL} the {OBJ2}
    Is there a {OBJ1} in the {OBJ2} {REL} the {OBJ3}?          EXISTENCE
    How many {OBJ1} are there in the {OBJ2} {REL} the {OBJ3}?  COUNTING
    Is there a {OBJ1} {REL} the {OBJ2}?                        SPATIAL

Object names are the vocabulary's surface words (possibly several tokens);
the parser matches them longest-first. Nothing is inflected, so
``parse(realize(ast)) == ast`` holds exactly.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .scene_graph import Relation, SceneGraph
from .vocab import Vocabulary, default_vocabulary


class QuestionType(str, enum.Enum):
    EXISTENCE = "EXISTENCE"
    COUNTING = "COUNTING"
    SPATIAL = "SPATIAL"


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at char {position})")


@dataclass(frozen=True)
class ReferringExpressionAST:
    subject_type: str
    relation: Relation | None
    anchor_type: str | None

    def __post_init__(self):
        if self.relation is not None:
            object.__setattr__(self, "relation", Relation(self.relation))
        if (self.relation is None) != (self.anchor_type is None):
            raise ValueError("relation and anchor_type go together")

    @classmethod
    def bare(cls, subject_type: str) -> "ReferringExpressionAST":
        """Type-only reference, used to localize the anchor of a SPATIAL question."""
        return cls(subject_type, None, None)


@dataclass(frozen=True)
class SpatialTarget:
    relation: Relation
    anchor_type: str

    def __post_init__(self):
        object.__setattr__(self, "relation", Relation(self.relation))


@dataclass(frozen=True)
class QuestionAST:
    qtype: QuestionType
    obj1_type: str
    target: ReferringExpressionAST | SpatialTarget

    def __post_init__(self):
        object.__setattr__(self, "qtype", QuestionType(self.qtype))
        want = SpatialTarget if self.qtype is QuestionType.SPATIAL else ReferringExpressionAST
        if not isinstance(self.target, want):
            raise ValueError(f"{self.qtype.value} questions take a {want.__name__}")
        if want is ReferringExpressionAST and self.target.relation is None:
            raise ValueError("question REs need a relation and an anchor")

    @property
    def nav_label(self) -> str:
        """Object type the agent searches for in the semantic map."""
        return self.target.anchor_type

    @property
    def reference(self) -> ReferringExpressionAST:
        """What the agent has to localize at the goal."""
        if isinstance(self.target, SpatialTarget):
            return ReferringExpressionAST.bare(self.target.anchor_type)
        return self.target

    def to_dict(self) -> dict:
        t = self.target
        if isinstance(t, SpatialTarget):
            tgt = {"relation": t.relation.value, "anchor_type": t.anchor_type}
        else:
            tgt = {"subject_type": t.subject_type, "relation": t.relation.value, "anchor_type": t.anchor_type}
        return {"qtype": self.qtype.value, "obj1_type": self.obj1_type, "target": tgt}

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionAST":
        t = d["target"]
        if d["qtype"] == QuestionType.SPATIAL.value:
            tgt = SpatialTarget(t["relation"], t["anchor_type"])
        else:
            tgt = ReferringExpressionAST(t["subject_type"], t["relation"], t["anchor_type"])
        return cls(d["qtype"], d["obj1_type"], tgt)


# --- realization -----------------------------------------------------------


def _name(vocab: Vocabulary, obj_type: str) -> str:
    return vocab[obj_type].surface


def _rel(vocab: Vocabulary, rel: Relation) -> str:
    return vocab.relation_surfaces[Relation(rel).value]


def _re_body(vocab, re_ast: ReferringExpressionAST) -> str:
    return f"{_name(vocab, re_ast.subject_type)} {_rel(vocab, re_ast.relation)} the {_name(vocab, re_ast.anchor_type)}"


def realize(ast, vocab: Vocabulary | None = None) -> str:
    vocab = vocab or default_vocabulary()
    if isinstance(ast, ReferringExpressionAST):
        if ast.relation is None:
            raise ValueError("bare references have no surface form")
        return "the " + _re_body(vocab, ast)
    obj1 = _name(vocab, ast.obj1_type)
    if ast.qtype is QuestionType.EXISTENCE:
        return f"Is there a {obj1} in the {_re_body(vocab, ast.target)}?"
    if ast.qtype is QuestionType.COUNTING:
        return f"How many {obj1} are there in the {_re_body(vocab, ast.target)}?"
    t = ast.target
    return f"Is there a {obj1} {_rel(vocab, t.relation)} the {_name(vocab, t.anchor_type)}?"


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"[A-Za-z]+|\?|\S")


class _Parser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.text = text
        self.toks = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
        self.i = 0
        self.names = {tuple(o.surface.split()): o.name for o in vocab.objects}
        self.rels = {tuple(s.split()): Relation(r) for r, s in vocab.relation_surfaces.items()}
        self.max_name = max(len(k) for k in self.names)
        self.max_rel = max(len(k) for k in self.rels)

    def pos(self) -> int:
        return self.toks[self.i][1] if self.i < len(self.toks) else len(self.text)

    def peek(self) -> str | None:
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def expect(self, *words: str) -> None:
        for w in words:
            if self.peek() != w:
                got = self.peek()
                raise ParseError(f"expected {w!r}, got {got!r}" if got else f"expected {w!r}, got end of input", self.pos())
            self.i += 1

    def _longest(self, table: dict, width: int):
        words = [t for t, _ in self.toks[self.i:self.i + width]]
        for n in range(len(words), 0, -1):
            hit = table.get(tuple(words[:n]))
            if hit is not None:
                self.i += n
                return hit
        return None

    def obj(self) -> str:
        at = self.pos()
        hit = self._longest(self.names, self.max_name)
        if hit is None:
            raise ParseError(f"unknown object type {self.peek()!r}", at)
        return hit

    def rel(self) -> Relation:
        at = self.pos()
        hit = self._longest(self.rels, self.max_rel)
        if hit is None:
            raise ParseError(f"expected a relation, got {self.peek()!r}", at)
        return hit

    def re_body(self) -> ReferringExpressionAST:
        subject = self.obj()
        rel = self.rel()
        self.expect("the")
        return ReferringExpressionAST(subject, rel, self.obj())

    def end(self) -> None:
        if self.i != len(self.toks):
            raise ParseError(f"trailing input {self.peek()!r}", self.pos())

    def parse(self):
        head = self.peek()
        if head == "the":
            self.i += 1
            out = self.re_body()
        elif head == "How":
            self.expect("How", "many")
            obj1 = self.obj()
            self.expect("are", "there", "in", "the")
            out = QuestionAST(QuestionType.COUNTING, obj1, self.re_body())
            self.expect("?")
        elif head == "Is":
            self.expect("Is", "there", "a")
            obj1 = self.obj()
            rel = self.rel()
            self.expect("the")
            second = self.obj()
            if self.peek() == "?":
                out = QuestionAST(QuestionType.SPATIAL, obj1, SpatialTarget(rel, second))
            else:
                if rel is not Relation.IN:
                    raise ParseError("expected '?'", self.pos())
                rel2 = self.rel()
                self.expect("the")
                out = QuestionAST(QuestionType.EXISTENCE, obj1, ReferringExpressionAST(second, rel2, self.obj()))
            self.expect("?")
        else:
            raise ParseError(f"utterance cannot start with {head!r}", self.pos())
        self.end()
        return out


def parse(utterance: str, vocab: Vocabulary | None = None):
    """Inverse of :func:`realize`; raises ParseError outside the grammar."""
    return _Parser(utterance, vocab or default_vocabulary()).parse()


# --- referring expression generation -----------------------------------------

_REL_ORDER = {r: k for k, r in enumerate(Relation)}


def re_matches(graph: SceneGraph, ast: ReferringExpressionAST) -> list[str]:
    """Node ids satisfying the RE under exact (noiseless) matching."""
    out = []
    for nid, node in graph.nodes.items():
        if node.obj_type != ast.subject_type:
            continue
        if ast.relation is None:
            out.append(nid)
            continue
        for e in graph.out_edges(nid):
            if e.relation == ast.relation and graph.node_type(e.anchor) == ast.anchor_type:
                out.append(nid)
                break
    return sorted(out)


def candidate_res(graph: SceneGraph, target_id: str) -> list[ReferringExpressionAST]:
    """All unambiguous single-hop REs for `target_id`, nearest anchor first.

    Anchors must have a type that occurs once among the graph's nodes and
    must not sit inside a receptacle.
    """
    counts = graph.type_counts()
    subject_type = graph.node_type(target_id)
    found = []
    for e in graph.out_edges(target_id):
        anchor = graph.nodes[e.anchor]
        if counts[anchor.obj_type] != 1 or anchor.parent_id is not None:
            continue
        ast = ReferringExpressionAST(subject_type, e.relation, anchor.obj_type)
        if re_matches(graph, ast) == [target_id]:
            found.append((e.l, _REL_ORDER[e.relation], e.anchor, ast))
    found.sort(key=lambda t: t[:3])
    return [t[3] for t in found]


def generate_re(graph: SceneGraph, target_id: str, vocab: Vocabulary | None = None):
    """Best unambiguous RE for `target_id` as ``(ast, utterance)``, or None."""
    cands = candidate_res(graph, target_id)
    if not cands:
        return None
    return cands[0], realize(cands[0], vocab)
