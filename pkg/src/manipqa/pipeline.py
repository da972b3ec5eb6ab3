"""End-to-end agent: navigate, localize, manipulate, answer.

The agent's only prior is what it gathered on the sampling sweep (semantic
map plus scene graph). Ground truth from the world is used solely for
scoring: shortest path length, arrival, target id and the answer label.
"""
from __future__ import annotations

import dataclasses
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from .boxes import Box3, iou3d
from .comprehension import SCORE_THRESHOLD, ComprehensionError, perturb_observation, pick, resolve, score_all
from .language import QuestionAST, QuestionType, SpatialTarget, parse
from .navigation import (
    EmptyInput,
    FloydTables,
    NavResult,
    Unreachable,
    arrival_cells,
    bfs_distances,
    floyd_apsp,
    locate_label,
    neighbors4,
    plan_path,
    spl,
    success_rate,
)
from .scene_graph import SceneGraph, assign_relation, update_graph
from .semantic_memory import ExplorationResult, SemanticMap2D, explore
from .vocab import default_vocabulary
from .world import Action, ActionError, ActionKind, Heading, Observation, Pose, World, apply_action, observe

log = logging.getLogger(__name__)

MAX_COUNT = 10
DEFAULT_ANSWERS = {QuestionType.EXISTENCE: "no", QuestionType.COUNTING: 0, QuestionType.SPATIAL: "no"}


class UnknownType(KeyError):
    pass


class UnresolvedAnchor(Exception):
    pass


def default_answer(qtype) -> str | int:
    return DEFAULT_ANSWERS[QuestionType(qtype)]


def classify_action(target_type: str, vocab=None) -> ActionKind:
    """Affordance lookup: openable -> Open, pickupable -> Pickup, else Move."""
    vocab = vocab or default_vocabulary()
    if target_type not in vocab:
        raise UnknownType(target_type)
    t = vocab[target_type]
    if t.openable:
        return ActionKind.OPEN
    if t.pickupable:
        return ActionKind.PICKUP
    return ActionKind.MOVE


def merge_frames(*frames: Observation) -> dict:
    """Union of visible objects by id; the earliest frame's record wins."""
    out = {}
    for f in frames:
        for v in f.visible:
            out.setdefault(v.id, v)
    return out


def answer_question(ast: QuestionAST, obs_start: Observation, obs_end: Observation, graph: SceneGraph,
                    anchor_id: str | None = None, max_count: int = MAX_COUNT):
    """Answer from the union of the pre- and post-manipulation frames.

    `anchor_id` is the object localized upstream; when omitted the question's
    reference is resolved here against the merged frame.
    """
    seen = merge_frames(obs_start, obs_end)
    if anchor_id is None:
        merged = Observation(obs_start.viewpoint, tuple(seen[k] for k in sorted(seen)), obs_end.timestamp)
        try:
            anchor_id, _ = resolve(ast.reference, merged, graph)
        except ComprehensionError as exc:
            raise UnresolvedAnchor(str(exc)) from exc
    if anchor_id not in seen:
        raise UnresolvedAnchor(f"{anchor_id} is not in view")
    if isinstance(ast.target, SpatialTarget):
        anchor = seen[anchor_id]
        hit = any(
            v.obj_type == ast.obj1_type and v.id != anchor_id and assign_relation(v, anchor) == ast.target.relation
            for v in seen.values()
        )
        return "yes" if hit else "no"
    n = sum(1 for v in seen.values() if v.obj_type == ast.obj1_type and v.parent_id == anchor_id)
    if ast.qtype is QuestionType.EXISTENCE:
        return "yes" if n else "no"
    return min(n, max_count)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    budget: int = 50
    noise_sigma: float = 0.0
    label_flip: float = 0.0
    manipulate: bool = True
    max_count: int = MAX_COUNT
    score_threshold: float = SCORE_THRESHOLD

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.label_flip <= 1:
            raise ValueError("label_flip must be in [0, 1]")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")


@dataclass
class AgentPrior:
    """Sweep-time knowledge of one room: map, planner tables and scene graph."""

    exploration: ExplorationResult
    tables: FloydTables

    @property
    def map2d(self) -> SemanticMap2D:
        return self.exploration.map2d

    @property
    def graph(self) -> SceneGraph:
        return self.exploration.graph


class PriorCache:
    """Reuses sweeps across configurations that differ only in hidden contents."""

    def __init__(self):
        self._explorations: dict = {}
        self._tables: dict = {}

    @staticmethod
    def _signature(world: World):
        def hidden(o):
            return any(not world.objects[a].is_open for a in world.ancestors(o.id))

        return (world.scene_id, world.bounds, tuple(sorted(
            (o.id, o.obj_type, o.box, o.parent_id, o.is_open) for o in world.objects.values() if not hidden(o)
        )))

    def prior(self, world: World) -> AgentPrior:
        key = self._signature(world)
        ex = self._explorations.get(key)
        if ex is None:
            ex = self._explorations[key] = explore(world)
        mask = ex.map2d.traversable_mask()
        tkey = (mask.shape, mask.tobytes())
        tables = self._tables.get(tkey)
        if tables is None:
            tables = self._tables[tkey] = floyd_apsp(mask)
        return AgentPrior(ex, tables)


def build_prior(world: World) -> AgentPrior:
    return PriorCache().prior(world)


@dataclass
class EpisodeResult:
    episode_id: str
    qtype: QuestionType
    navigated: bool
    localized: bool
    answered_correctly: bool
    nav: NavResult
    chosen_action: Action | None
    answer: str | int
    truth: str | int
    manipulated: bool = False
    resolved_id: str | None = None
    loc_iou: float | None = None
    pred_box: Box3 | None = None
    path: tuple = ()
    trace: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.localized and not self.navigated:
            raise ValueError("cannot localize without navigating")

    def to_record(self) -> dict:
        return {
            "record": "episode",
            "episode_id": self.episode_id,
            "qtype": QuestionType(self.qtype).value,
            "navigated": self.navigated,
            "localized": self.localized,
            "answered_correctly": self.answered_correctly,
            "manipulated": self.manipulated,
            "success": self.nav.success,
            "p": self.nav.path_taken,
            "shortest": self.nav.shortest,
            "budget": self.nav.budget,
            "action": None if self.chosen_action is None else [self.chosen_action.kind.value, self.chosen_action.target_id],
            "resolved_id": self.resolved_id,
            "loc_iou": None if self.loc_iou is None else round(self.loc_iou, 6),
            "answer": self.answer,
            "truth": self.truth,
        }

    @classmethod
    def from_record(cls, r: dict) -> "EpisodeResult":
        act = r.get("action")
        return cls(
            episode_id=r["episode_id"],
            qtype=QuestionType(r["qtype"]),
            navigated=r["navigated"],
            localized=r["localized"],
            answered_correctly=r["answered_correctly"],
            nav=NavResult(r["success"], r["p"], r["shortest"], r["budget"]),
            chosen_action=None if act is None else Action(ActionKind(act[0]), act[1]),
            answer=r["answer"],
            truth=r["truth"],
            manipulated=r.get("manipulated", False),
            resolved_id=r.get("resolved_id"),
            loc_iou=r.get("loc_iou"),
        )


def episode_rng(seed: int, episode_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(episode_id.encode())])


def true_goal_cells(world: World, obj_type: str) -> list[tuple[int, int]]:
    cells = set()
    for o in world.objects.values():
        if o.obj_type == obj_type:
            cells.update(world.footprint_cells(o.box))
    return sorted(cells)


def shortest_steps(world: World, obj_type: str) -> tuple[int | None, list[tuple[int, int]]]:
    """Ground-truth step count from the agent to any arrival cell, and those cells."""
    free = ~world.occupancy()
    ends = arrival_cells(free, true_goal_cells(world, obj_type))
    dist = bfs_distances(free, world.agent.cell)
    finite = [dist[e] for e in ends if np.isfinite(dist[e])]
    return (int(min(finite)) if finite else None), ends


def facing(final, goal_cells, shape) -> Heading:
    goals = set(map(tuple, goal_cells))
    adj = sorted(nb for nb in neighbors4(final, shape) if nb in goals)
    return Heading.toward(final, adj[0]) if adj else Heading.PZ


def run_episode(world: World, episode, config: RunConfig = RunConfig(), prior: AgentPrior | None = None) -> EpisodeResult:
    """Run one episode. Stage failures are recorded in the result, never raised."""
    prior = prior or build_prior(world)
    trace: list[str] = []
    ast = parse(episode.question_utterance)
    qtype = ast.qtype
    label = ast.nav_label
    truth = episode.truth
    default = default_answer(qtype)

    shortest, true_ends = shortest_steps(world, label)
    start = world.agent.cell
    goal_cells = locate_label(prior.map2d, label)
    trace.append(f"question: {episode.question_utterance}")
    trace.append(f"goal label {label}: {len(goal_cells)} map cells")
    try:
        plan = plan_path(prior.tables, start, goal_cells)
        trace.append(f"plan: {plan.length} steps from {start} to {plan.cells[-1]}")
    except Unreachable as exc:
        plan = None
        trace.append(f"plan: unreachable ({exc})")
    steps = min(plan.length, config.budget) if plan else 0
    walked = plan.cells[:steps + 1] if plan else (start,)
    final = walked[-1]
    navigated = plan is not None and final in true_ends
    if plan is not None and plan.length > config.budget:
        trace.append(f"walk: budget of {config.budget} steps exhausted at {final}")
    nav = NavResult(navigated, steps, shortest, config.budget)

    def finish(**kw) -> EpisodeResult:
        kw.setdefault("answer", default)
        base = dict(episode_id=episode.episode_id, qtype=qtype, navigated=navigated, localized=False,
                    nav=nav, chosen_action=None, truth=truth, path=tuple(walked), trace=trace)
        base.update(kw)
        base["answered_correctly"] = base["answer"] == truth
        trace.append(f"answer: {base['answer']!r}  truth: {truth!r}")
        return EpisodeResult(**base)

    if not navigated:
        trace.append("navigation failed")
        return finish()

    rng = episode_rng(config.seed, episode.episode_id)
    pose = Pose(final, facing(final, goal_cells, prior.map2d.shape))
    here = dataclasses.replace(world, agent=dataclasses.replace(world.agent, cell=final, heading=pose.heading))
    obs_start = perturb_observation(observe(here, pose, timestamp=steps), config.noise_sigma, config.label_flip, rng)
    graph = update_graph(prior.graph, obs_start)
    trace.append(f"I_start at {final} facing {pose.heading.value}: {len(obs_start.visible)} objects")
    scores = score_all(ast.reference, obs_start, graph)
    for sc in sorted(scores, key=lambda sc: (-sc.total, sc.candidate_id)):
        if sc.s_subject > 0:
            trace.append(f"  score {sc.candidate_id}: {sc.total:.2f} (subject {sc.s_subject:.0f}, relation {sc.s_relationship:.0f})")
    try:
        rid = pick(scores, config.score_threshold).candidate_id
        rbox = obs_start.by_id()[rid].box
    except ComprehensionError as exc:
        trace.append(f"localize: {type(exc).__name__} ({exc})")
        return finish()
    loc_iou = iou3d(rbox, world.objects[episode.target_object_id].box)
    localized = rid == episode.target_object_id
    trace.append(f"localize: {rid} (iou {loc_iou:.2f} with target {episode.target_object_id})")
    if not localized:
        return finish(resolved_id=rid, loc_iou=loc_iou, pred_box=rbox)

    rtype = obs_start.by_id()[rid].obj_type
    action = Action(classify_action(rtype), rid)
    after, manipulated = here, False
    if config.manipulate:
        try:
            after = apply_action(here, action)
            manipulated = True
            trace.append(f"action: {action.kind.value} {rid}")
        except ActionError as exc:
            trace.append(f"action: {action.kind.value} {rid} failed ({type(exc).__name__})")
    else:
        trace.append("action: skipped")
    obs_end = perturb_observation(observe(after, pose, timestamp=steps + 1), config.noise_sigma, config.label_flip, rng)
    trace.append(f"I_end: {len(obs_end.visible)} objects")
    try:
        answer = answer_question(ast, obs_start, obs_end, graph, anchor_id=rid, max_count=config.max_count)
    except UnresolvedAnchor:
        answer = default
    return finish(localized=True, chosen_action=action, answer=answer, manipulated=manipulated,
                  resolved_id=rid, loc_iou=loc_iou, pred_box=rbox)


def run_episodes(worlds: dict, episodes, config: RunConfig = RunConfig(), cache: PriorCache | None = None) -> list[EpisodeResult]:
    """Run episodes against their (scene_id, config_id) worlds; output sorted by episode id."""
    cache = cache or PriorCache()
    out = []
    for ep in sorted(episodes, key=lambda e: e.episode_id):
        world = worlds[(ep.scene_id, ep.config_id)]
        out.append(run_episode(world, ep, config, cache.prior(world)))
    return out


def _rates(results) -> dict:
    n = len(results)
    return {
        "S_N": sum(r.navigated for r in results) / n,
        "S_L": sum(r.localized for r in results) / n,
        "S_QA": sum(r.answered_correctly for r in results) / n,
        "n": n,
    }


def eval_metrics(results) -> dict:
    """S_N / S_L / S_QA overall and per question type, plus success and SPL."""
    results = list(results)
    if not results:
        raise EmptyInput("no episode results")
    per_type = {}
    for q in QuestionType:
        sub = [r for r in results if QuestionType(r.qtype) is q]
        if sub:
            per_type[q.value] = _rates(sub)
    navs = [r.nav for r in results]
    return {
        "overall": _rates(results),
        "per_type": per_type,
        "navigation": {"budget": navs[0].budget, "success": success_rate(navs), "spl": spl(navs)},
    }
