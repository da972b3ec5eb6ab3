"""
Scene graphs and the question grammar
=====================================

Pairwise relations between boxes, unambiguous referring expressions, and the
three question templates with their exact inverse parser.
"""

from manipqa.boxes import Box3, iou3d
from manipqa.language import QuestionAST, ReferringExpressionAST, SpatialTarget, generate_re, parse, realize
from manipqa.scene_graph import build_graph
from manipqa.world import VisibleObject


def thing(oid, lo, hi):
    return VisibleObject(oid, oid.split("_")[0], Box3(lo, hi))


toaster = thing("Toaster_00", (0.1, 1.0, 0.1), (0.4, 1.2, 0.3))
drawers = [thing("Drawer_00", (0.02, 0.5, 0.02), (0.48, 0.74, 0.48)),
           thing("Drawer_01", (0.9, 0.5, 0.02), (1.36, 0.74, 0.48))]
graph = build_graph([toaster, *drawers])

for e in sorted(graph.edges.values(), key=lambda e: (e.subject, e.anchor)):
    print(f"{e.subject:11s} {e.relation.value:9s} {e.anchor:11s} l={e.l:.2f} iou={e.s_iou:.2f}")

# the first drawer is the only one below the toaster
ast, text = generate_re(graph, "Drawer_00")
print(text)

# %%
# Questions round-trip exactly; nouns are never inflected
questions = [
    QuestionAST("EXISTENCE", "Fork", ast),
    QuestionAST("COUNTING", "Egg", ReferringExpressionAST("Fridge", "near", "Sink")),
    QuestionAST("SPATIAL", "Cup", SpatialTarget("on", "Table")),
]
for q in questions:
    s = realize(q)
    print(s, parse(s) == q)

print(iou3d(Box3((0, 0, 0), (2, 2, 2)), Box3((1, 0, 0), (3, 2, 2))))
