import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import shortest_path

from manipqa.boxes import Box3
from manipqa.dataset import build_dataset
from manipqa.world import AgentState, ObjectInstance, World

settings.register_profile("ci", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def make_world(objects, size=(8, 8), agent=(0, 0), **kw):
    """Room of `size` cells with the given ObjectInstances."""
    nx, nz = size
    return World(
        scene_id="t",
        room_type=kw.pop("room_type", "Kitchen"),
        bounds=Box3((0, 0, 0), (nx * 0.25, 2.5, nz * 0.25)),
        objects={o.id: o for o in objects},
        agent=AgentState(agent, **kw),
    )


def obj(oid, obj_type, lo, hi, **kw):
    return ObjectInstance.of_type(oid, obj_type, Box3(lo, hi), **kw)


def voxel_iou(a: Box3, b: Box3, n: int = 120) -> float:
    """Brute-force IoU by counting cell centres of an n^3 grid over both boxes."""
    lo = np.minimum(a.min_corner, b.min_corner)
    hi = np.maximum(a.max_corner, b.max_corner)
    axes = [lo[i] + (np.arange(n) + 0.5) * (hi[i] - lo[i]) / n for i in range(3)]

    def inside(box):
        m = [(axes[i] >= box.min_corner[i]) & (axes[i] <= box.max_corner[i]) for i in range(3)]
        return m[0][:, None, None] & m[1][None, :, None] & m[2][None, None, :]

    ia, ib = inside(a), inside(b)
    return np.count_nonzero(ia & ib) / np.count_nonzero(ia | ib)


def oracle_distances(mask):
    """Unweighted all-pairs distances from scipy's csgraph BFS."""
    cells = [tuple(c) for c in np.argwhere(mask)]
    index = {c: k for k, c in enumerate(cells)}
    adj = lil_matrix((len(cells), len(cells)))
    for (i, j), k in index.items():
        for nb in ((i + 1, j), (i, j + 1)):
            if nb in index:
                adj[k, index[nb]] = adj[index[nb], k] = 1
    return cells, shortest_path(adj.tocsr(), unweighted=True, directed=False)


@pytest.fixture(scope="session")
def small_dataset():
    """Four scenes (one per room type) with 120 validated episodes."""
    return build_dataset(seed=5, num_scenes=4, num_episodes=120)


def random_question(rng, names, relations):
    """A uniformly drawn valid QuestionAST (numpy Generator `rng`)."""
    from manipqa.language import QuestionAST, QuestionType, ReferringExpressionAST, SpatialTarget

    def pick(seq):
        return seq[int(rng.integers(len(seq)))]

    qtype = pick(list(QuestionType))
    if qtype is QuestionType.SPATIAL:
        return QuestionAST(qtype, pick(names), SpatialTarget(pick(relations), pick(names)))
    return QuestionAST(qtype, pick(names), ReferringExpressionAST(pick(names), pick(relations), pick(names)))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
