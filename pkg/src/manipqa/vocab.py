"""Object-type vocabulary, affordance table and relation surface forms.

The table ships as ``data/vocabulary.jsonl``: one JSON record per line, either
an ``object`` record (type, surface words, affordance flags) or a ``relation``
record (relation kind and its surface phrase).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

FREE = "Free"
UNKNOWN = "Unknown"


@dataclass(frozen=True)
class ObjectType:
    id: int
    name: str
    surface: str
    openable: bool
    pickupable: bool
    movable: bool
    receptacle: bool


@dataclass(frozen=True)
class Vocabulary:
    objects: tuple[ObjectType, ...]
    relation_surfaces: dict  # relation value -> surface phrase
    relation_ids: dict  # relation value -> integer id

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {o.name: o for o in self.objects})
        object.__setattr__(self, "_by_surface", {o.surface: o for o in self.objects})

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> ObjectType:
        return self._by_name[name]

    @property
    def names(self) -> list[str]:
        return [o.name for o in self.objects]

    def by_surface(self, surface: str) -> ObjectType | None:
        return self._by_surface.get(surface)

    def label_id(self, label: str) -> int:
        return self._by_name[label].id


def load_vocabulary(path=None) -> Vocabulary:
    """Read a vocabulary file; the packaged one when `path` is None."""
    if path is None:
        text = resources.files("manipqa").joinpath("data/vocabulary.jsonl").read_text()
    else:
        with open(path) as f:
            text = f.read()
    objects, surfaces, rel_ids = [], {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["kind"] == "object":
            objects.append(
                ObjectType(
                    id=rec["id"],
                    name=rec["type"],
                    surface=rec["surface"],
                    openable=rec["openable"],
                    pickupable=rec["pickupable"],
                    movable=rec["movable"],
                    receptacle=rec["receptacle"],
                )
            )
        elif rec["kind"] == "relation":
            surfaces[rec["relation"]] = rec["surface"]
            rel_ids[rec["relation"]] = rec["id"]
        else:
            raise ValueError(f"line {lineno}: unknown record kind {rec['kind']!r}")
    return Vocabulary(tuple(objects), surfaces, rel_ids)


@lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    return load_vocabulary()
