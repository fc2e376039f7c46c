"""Command-line entry point.

Commands: gen-maps, gen-demos, train, eval, render, check. All read one JSON
config (sections env/dataset/model/train/eval); any field can be overridden
with --section.key=value flags. The output root comes from --out or the
DEMONAV_OUT environment variable (default ./demonav_out).

Exit codes: 0 ok, 2 config error, 3 check failure, 4 runtime numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .demos import generate_demos, load_demos, save_demos, split_dataset, verify_demo
from .maze import MazeMap, generate_maze
from .rng import stream
from .trainer import NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
EXIT_NUMERIC = 4


class CheckFailure(RuntimeError):
    pass


def _out_root(args) -> str:
    return args.out or os.environ.get("DEMONAV_OUT", "demonav_out")


def _load(args) -> RunConfig:
    return load_config(args.config, args.overrides)


def _map_dir(root: str) -> str:
    return os.path.join(root, "maps")


def _load_maps(root: str) -> tuple[dict[str, MazeMap], dict]:
    manifest_path = os.path.join(_map_dir(root), "maps_manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    mazes = {}
    for map_id in manifest["train"] + manifest["eval_new_map"]:
        with open(os.path.join(_map_dir(root), f"{map_id}.json")) as f:
            mazes[map_id] = MazeMap.from_dict(json.load(f))
    return mazes, manifest


# ------------------------------------------------------------------ commands
def cmd_gen_maps(args) -> int:
    cfg = _load(args)
    root = _out_root(args)
    os.makedirs(_map_dir(root), exist_ok=True)
    ds, env = cfg.dataset, cfg.env
    if ds.held_out_maps >= ds.n_maps:
        raise ConfigError("held_out_maps must be smaller than n_maps")
    train_ids, held_ids = [], []
    for i in range(ds.n_maps):
        seed = int(stream(ds.seed, "map-seeds", i).integers(2**62))
        maze = generate_maze(seed, env.grid_size, env.path_width)
        with open(os.path.join(_map_dir(root), f"{maze.map_id}.json"), "w") as f:
            f.write(maze.to_json())
        (held_ids if i >= ds.n_maps - ds.held_out_maps else train_ids).append(maze.map_id)
    manifest = {"train": train_ids, "eval_new_map": held_ids}
    with open(os.path.join(_map_dir(root), "maps_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    print(f"wrote {len(train_ids)} train + {len(held_ids)} eval maps under {_map_dir(root)}")
    return EXIT_OK


def cmd_gen_demos(args) -> int:
    cfg = _load(args)
    root = _out_root(args)
    mazes, manifest = _load_maps(root)
    ds, env = cfg.dataset, cfg.env
    all_demos = []
    for map_id in manifest["train"] + manifest["eval_new_map"]:
        maze = mazes[map_id]
        all_demos.extend(
            generate_demos(
                maze,
                ds.demos_per_map,
                seed=ds.seed,
                goal_radius=env.goal_radius,
                max_step=ds.max_step,
                horizon=env.horizon,
                ray_len=env.resolved_ray_len(),
                min_cell_dist=ds.min_goal_cell_dist,
            )
        )
    if args.audit:
        for d in all_demos:
            ok, msg = verify_demo(mazes[d.map_id], d, horizon=env.horizon, ray_len=env.resolved_ray_len())
            if not ok:
                raise CheckFailure(f"demo {d.demo_id} failed replay audit: {msg}")
        print(f"replay audit passed for {len(all_demos)} demos")
    split = split_dataset(all_demos, ds.train_fraction, held_out_maps=manifest["eval_new_map"], seed=ds.seed)
    save_demos(all_demos, os.path.join(root, "demos.jsonl"))
    with open(os.path.join(root, "split.json"), "w") as f:
        json.dump(split.to_manifest(), f, indent=2)
    print(
        f"wrote {len(all_demos)} demos: {len(split.train)} train, "
        f"{len(split.eval_new_demo)} new_demo, {len(split.eval_new_map)} new_map"
    )
    return EXIT_OK


def _prepare_dataset(cfg: RunConfig, root: str):
    mazes, _ = _load_maps(root)
    demos = load_demos(os.path.join(root, "demos.jsonl"))
    with open(os.path.join(root, "split.json")) as f:
        manifest = json.load(f)
    by_id = {d.demo_id: d for d in demos}
    groups = {
        "seen": [by_id[i] for i in manifest["train"]],
        "new_demo": [by_id[i] for i in manifest["eval_new_demo"]],
        "new_map": [by_id[i] for i in manifest["eval_new_map"]],
    }
    return mazes, groups, manifest


def cmd_train(args) -> int:
    from .trainer import SACTrainer

    cfg = _load(args)
    root = _out_root(args)
    mazes, groups, _ = _prepare_dataset(cfg, root)
    run_dir = args.run_dir or os.path.join(root, "runs", f"seed{cfg.train.seed}")
    trainer = SACTrainer(
        mazes=mazes,
        train_demos=groups["seen"],
        eval_groups=groups,
        model_cfg=cfg.model,
        cfg=cfg.train,
        include_coords=cfg.env.coords,
        ray_len=cfg.env.resolved_ray_len(),
        with_obstacles=cfg.env.obstacles,
        horizon=cfg.env.horizon,
    )
    if args.resume and os.path.exists(os.path.join(run_dir, "trainer_state.pt")):
        trainer.load_run_state(run_dir)
        print(f"resumed from {run_dir} at step {trainer.env_steps}")
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as f:
        json.dump(cfg.to_dict(), f, indent=2)
    trainer.train(run_dir, log_fn=print)
    print(f"run artifacts in {run_dir}")
    return EXIT_OK


def _policy_from_args(cfg: RunConfig, args):
    from .evaluate import ActorPolicy, OracleFactory, random_policy, still_policy

    if args.checkpoint:
        return ActorPolicy.from_checkpoint(args.checkpoint)
    name = args.policy or "oracle"
    if name == "oracle":
        return OracleFactory(max_step=cfg.dataset.max_step)
    if name == "random":
        return random_policy(cfg.eval.seed)
    if name == "still":
        return still_policy
    raise ConfigError(f"unknown policy {name!r}")


def cmd_eval(args) -> int:
    from .evaluate import assert_no_leakage, evaluate, save_report

    cfg = _load(args)
    root = _out_root(args)
    mazes, groups, manifest = _prepare_dataset(cfg, root)
    assert_no_leakage(manifest)
    policy = _policy_from_args(cfg, args)
    task_groups = {
        split: [(mazes[d.map_id], d) for d in demos] for split, demos in groups.items() if demos
    }
    episodes_per_task = {
        split: max(1, cfg.eval.episodes_per_split // max(len(tasks), 1))
        for split, tasks in task_groups.items()
    }
    report = {}
    for split, tasks in task_groups.items():
        rep = evaluate(
            policy,
            {split: tasks},
            episodes_per_task=episodes_per_task[split],
            base_seed=cfg.eval.seed,
            include_coords=cfg.env.coords,
            ray_len=cfg.env.resolved_ray_len(),
            with_obstacles=cfg.env.obstacles,
            horizon=cfg.env.horizon,
            c=cfg.train.c,
        )
        report.update(rep)
    out_path = args.report or os.path.join(root, "report.json")
    save_report(report, out_path)
    for split, r in report.items():
        print(f"{split:>10}: {r['rate']:.3f} ({r['successes']}/{r['episodes']}, stderr {r['stderr']:.3f})")
    print(f"report written to {out_path}")
    return EXIT_OK


def cmd_render(args) -> int:
    from .env import NavEnv, spawn_obstacles
    from .evaluate import rollout_episode
    from .render import render_trajectory

    cfg = _load(args)
    root = _out_root(args)
    mazes, groups, _ = _prepare_dataset(cfg, root)
    all_demos = {d.demo_id: d for g in groups.values() for d in g}
    demo = all_demos.get(args.demo_id)
    if demo is None:
        raise ConfigError(f"demo {args.demo_id!r} not found in dataset")
    maze = mazes[demo.map_id]
    obstacles = []
    if args.obstacle_seed is not None:
        obstacles = spawn_obstacles(
            maze, demo, seed=args.obstacle_seed, p=cfg.env.obstacle_prob, max_n=cfg.env.max_obstacles
        )
    rollout = None
    if args.checkpoint or args.policy:
        env = NavEnv(
            task=demo.task(maze, horizon=cfg.env.horizon),
            obstacles=obstacles,
            ray_len=cfg.env.resolved_ray_len(),
            include_coords=cfg.env.coords,
            c=cfg.train.c,
        )
        policy = _policy_from_args(cfg, args)
        result = rollout_episode(env, policy(env, demo))
        rollout = result.positions
        print(f"rollout status: {result.status.value} in {result.steps} steps")
    out_path = args.render_out or os.path.join(root, f"{args.demo_id}.svg")
    render_trajectory(maze, demo, rollout, obstacles, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    import torch

    from .selfcheck import GradScene, fd_gradient_check, oracle_success_sweep, ray_march_distances
    from .env import ray_cast

    failures = []

    scene = GradScene(seed=0)
    checks = [
        ("actor_forward", scene.actor_forward_loss, list(scene.actor.parameters())),
        ("critic_objective", scene.critic_loss, list(scene.critic.parameters())),
        ("actor_objective", scene.actor_objective_loss, list(scene.actor.parameters())),
        ("behavior_cloning", scene.bc_loss, list(scene.actor.parameters())),
    ]
    for name, loss_fn, params in checks:
        report = fd_gradient_check(loss_fn, params, n_coords=args.grad_coords)
        status = "pass" if report.ok else "FAIL"
        print(f"gradient check [{name}]: max rel err {report.max_rel_err:.2e} over {report.n_coords} coords -> {status}")
        if not report.ok:
            failures.append(f"gradient:{name}")

    sweep = oracle_success_sweep(n_tasks=args.oracle_tasks, with_obstacles=False, seed=0)
    status = "pass" if sweep["rate"] == 1.0 else "FAIL"
    print(f"oracle check (no obstacles): {sweep['success']}/{sweep['episodes']} -> {status}")
    if sweep["rate"] < 1.0:
        failures.append("oracle")

    maze = generate_maze(11, 24, 2)
    rng = stream(0, "check-raycast")
    poses = rng.uniform(maze.margin + 0.05, maze.grid_size - maze.margin - 0.05, size=(args.raycast_poses, 2))
    march = ray_march_distances(maze, [], poses, ray_len=5.0)
    worst = 0.0
    for i, p in enumerate(poses):
        worst = max(worst, float(np.abs(ray_cast(maze, [], p, ray_len=5.0) - march[i]).max()))
    status = "pass" if worst <= 2e-3 else "FAIL"
    print(f"ray-cast check: max abs err {worst:.2e} over {len(poses)} poses -> {status}")
    if worst > 2e-3:
        failures.append("raycast")

    if failures:
        raise CheckFailure(f"failed checks: {failures}")
    print("all checks passed")
    return EXIT_OK


# ------------------------------------------------------------------ wiring
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demonav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config path (defaults apply if omitted)")
        p.add_argument("--out", default=None, help="output root (or DEMONAV_OUT env var)")
        p.add_argument("overrides", nargs="*", help="--section.key=value overrides")

    p = sub.add_parser("gen-maps", help="generate maze map files and a manifest")
    common(p)
    p.set_defaults(fn=cmd_gen_maps)

    p = sub.add_parser("gen-demos", help="synthesize demonstrations and the dataset split")
    common(p)
    p.add_argument("--audit", action="store_true", help="replay-verify every demo")
    p.set_defaults(fn=cmd_gen_demos)

    p = sub.add_parser("train", help="train a policy")
    common(p)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a policy on the dataset splits")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--policy", default=None, choices=["oracle", "random", "still"])
    p.add_argument("--report", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("render", help="render a demo (and optional rollout) to SVG")
    common(p)
    p.add_argument("--demo-id", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--policy", default=None, choices=["oracle", "random", "still"])
    p.add_argument("--obstacle-seed", type=int, default=None)
    p.add_argument("--render-out", default=None)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("check", help="run gradient, oracle, and ray-cast self checks")
    common(p)
    p.add_argument("--grad-coords", type=int, default=60)
    p.add_argument("--oracle-tasks", type=int, default=20)
    p.add_argument("--raycast-poses", type=int, default=1000)
    p.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as e:
        print(f"check failure: {e}", file=sys.stderr)
        return EXIT_CHECK
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"config error: missing file: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
