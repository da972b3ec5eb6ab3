"""Command-line entry points.

Summaries go to stdout as JSON; logs go to stderr. Exit status is 0 on
success and 2 on bad input (missing files, unknown ids, malformed records).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataset as ds
from .pipeline import EpisodeResult, PriorCache, RunConfig, eval_metrics, run_episode, true_goal_cells
from .world import SchemaError, save_world

log = logging.getLogger("manipqa")

RESULTS_FORMAT_VERSION = 1


class UsageError(Exception):
    """Bad input from the command line; reported with exit status 2."""


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _writable_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {path}: {exc.strerror}") from exc
    return out


def cmd_gen_scenes(args) -> int:
    out = _writable_dir(args.out)
    scenes, worlds = ds.sample_worlds(args.seed, args.scale)
    for (sid, cid), w in sorted(worlds.items()):
        p = ds.scene_path(out, sid, cid)
        p.parent.mkdir(parents=True, exist_ok=True)
        save_world(w, p)
    rooms: dict[str, int] = {}
    for s in scenes:
        rooms[s["room_type"]] = rooms.get(s["room_type"], 0) + 1
    _emit({"scenes": len(scenes), "configs": len(worlds), "room_types": rooms, "out": str(out)})
    return 0


def cmd_gen_dataset(args) -> int:
    out = _writable_dir(args.out)
    manifest, worlds = ds.build_dataset(args.seed, args.scale, args.episodes)
    ds.write_dataset(manifest, out, worlds)
    counts = manifest.type_counts()
    n = len(manifest.episodes)
    _emit({
        "scenes": len(manifest.scenes),
        "episodes": n,
        "per_type": counts,
        "proportions": {k: round(v / n, 4) if n else 0.0 for k, v in counts.items()},
        "split": {part: sum(1 for v in manifest.split.values() if v == part) for part in ("train", "test")},
        "out": str(out),
    })
    return 0


def _load(dataset_dir: str):
    root = Path(dataset_dir)
    try:
        manifest = ds.read_dataset(root)
        worlds = ds.load_worlds(manifest, root)
    except FileNotFoundError as exc:
        raise UsageError(f"missing file: {exc.filename}") from exc
    except SchemaError as exc:
        raise UsageError(f"malformed dataset: {exc}") from exc
    return manifest, worlds


def _config(args) -> RunConfig:
    try:
        return RunConfig(seed=args.seed, budget=args.budget, noise_sigma=args.noise_sigma,
                         label_flip=args.label_flip, manipulate=not args.no_manipulation)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _select(manifest, part: str):
    if part == "all":
        return list(manifest.episodes)
    keep = {s for s, v in manifest.split.items() if v == part}
    return [e for e in manifest.episodes if e.scene_id in keep]


def _aggregate_record(results) -> dict:
    return {"record": "aggregate", **eval_metrics(results)}


def cmd_run_agent(args) -> int:
    manifest, worlds = _load(args.dataset)
    config = _config(args)
    episodes = sorted(_select(manifest, args.split), key=lambda e: e.episode_id)
    if not episodes:
        raise UsageError(f"no episodes in split {args.split!r}")
    cache = PriorCache()
    results = []
    for ep in episodes:
        world = worlds[(ep.scene_id, ep.config_id)]
        results.append(run_episode(world, ep, config, cache.prior(world)))
    log.info("ran %d episodes", len(results))
    header = {
        "record": "run",
        "version": RESULTS_FORMAT_VERSION,
        "dataset": str(args.dataset),
        "split": args.split,
        "seed": config.seed,
        "budget": config.budget,
        "noise_sigma": config.noise_sigma,
        "label_flip": config.label_flip,
        "manipulate": config.manipulate,
    }
    agg = _aggregate_record(results)
    lines = [header] + [r.to_record() for r in results] + [agg]
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(json.dumps(x, sort_keys=True, separators=(",", ":")) + "\n" for x in lines))
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from exc
    _emit({k: v for k, v in agg.items() if k != "record"})
    return 0


def read_results(path) -> tuple[dict, list[EpisodeResult], dict | None]:
    """Parse a results file into (run header, episode results, aggregate)."""
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError as exc:
        raise UsageError(f"missing file: {path}") from exc
    header, results, agg = None, [], None
    for n, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
            kind = rec["record"]
            if n == 1:
                if kind != "run" or rec.get("version") != RESULTS_FORMAT_VERSION:
                    raise ValueError("first record must be a version-1 run header")
                header = rec
            elif kind == "episode":
                results.append(EpisodeResult.from_record(rec))
            elif kind == "aggregate":
                agg = rec
            else:
                raise ValueError(f"unexpected record kind {kind!r}")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(str(SchemaError(f"{path}: {exc}", n))) from exc
    if header is None:
        raise UsageError(f"{path}: empty results file")
    return header, results, agg


def cmd_eval(args) -> int:
    _, results, _ = read_results(args.results)
    if not results:
        raise UsageError("results file has no episode records")
    _emit(eval_metrics(results))
    return 0


def ascii_map(world, path, goal_cells, final) -> str:
    """Top-down map, one row per z: # blocked, . free, * path, S start, A agent, G goal."""
    blocked = world.occupancy()
    nx, nz = blocked.shape
    grid = [["#" if blocked[i, j] else "." for i in range(nx)] for j in range(nz)]
    for i, j in goal_cells:
        grid[j][i] = "G"
    for i, j in path:
        grid[j][i] = "*"
    if path:
        i, j = path[0]
        grid[j][i] = "S"
    grid[final[1]][final[0]] = "A"
    return "\n".join("".join(row) for row in grid)


def cmd_replay(args) -> int:
    header, results, _ = read_results(args.results)
    if args.episode not in {r.episode_id for r in results}:
        raise UsageError(f"unknown episode id {args.episode!r}")
    manifest, worlds = _load(args.dataset or header["dataset"])
    try:
        ep = manifest.episode(args.episode)
    except KeyError:
        raise UsageError(f"episode {args.episode!r} is not in the dataset") from None
    config = RunConfig(seed=header["seed"], budget=header["budget"], noise_sigma=header["noise_sigma"],
                       label_flip=header["label_flip"], manipulate=header["manipulate"])
    world = worlds[(ep.scene_id, ep.config_id)]
    res = run_episode(world, ep, config)
    final = res.path[-1] if res.path else world.agent.cell
    sys.stdout.write(f"episode {ep.episode_id}  scene {ep.scene_id}/{ep.config_id}  {ep.qtype.value}\n")
    sys.stdout.write(ascii_map(world, res.path, true_goal_cells(world, ep.question_ast.nav_label), final) + "\n")
    sys.stdout.write(f"steps {res.nav.path_taken}  shortest {res.nav.shortest}  budget {res.nav.budget}\n")
    for line in res.trace:
        sys.stdout.write(line + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manipqa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gen-scenes", help="sample rooms and their configurations")
    common(g)
    g.add_argument("--scale", type=int, default=ds.DEFAULT_SCENES, help="number of scenes")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scenes)

    g = sub.add_parser("gen-dataset", help="sample rooms and question episodes")
    common(g)
    g.add_argument("--scale", type=int, default=ds.DEFAULT_SCENES, help="number of scenes")
    g.add_argument("--episodes", type=int, default=None, help="episode count (default ~33 per scene)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_dataset)

    g = sub.add_parser("run-agent", help="run the agent over a dataset")
    common(g)
    g.add_argument("--dataset", required=True)
    g.add_argument("--budget", type=int, default=50, help="step budget (25 and 50 are the reported settings)")
    g.add_argument("--noise-sigma", type=float, default=0.0, help="box corner jitter in meters")
    g.add_argument("--label-flip", type=float, default=0.0, help="probability of a wrong object label")
    g.add_argument("--no-manipulation", action="store_true", help="skip the manipulation step")
    g.add_argument("--split", choices=("all", "train", "test"), default="all")
    g.add_argument("--out", required=True, help="results file")
    g.set_defaults(func=cmd_run_agent)

    g = sub.add_parser("eval", help="recompute metrics from a results file")
    g.add_argument("--results", required=True)
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("replay", help="re-run one episode and print its trace")
    g.add_argument("--results", required=True)
    g.add_argument("--episode", required=True)
    g.add_argument("--dataset", default=None, help="defaults to the dataset named in the results file")
    g.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"manipqa: error: {exc}", file=sys.stderr)
        return 2
    except ds.GenerationFailure as exc:
        print(f"manipqa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
