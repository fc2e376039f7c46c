"""Evaluation protocol: success rates per split, offset robustness, heatmaps.

Evaluation rollouts always use deterministic actions and per-episode seeds, so
a report is bit-stable under a fixed seed set. Splits are evaluated strictly
from their labels; a leakage check asserts the demo-id sets are disjoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .demos import Demonstration
from .env import EnvState, NavEnv, Status, spawn_obstacles
from .maze import MazeMap
from .nets import DAActor, ModelConfig, load_checkpoint
from .oracle import OraclePolicy, OracleStuck
from .reward import Normalizer
from .rng import stream

__all__ = [
    "ActorPolicy",
    "OracleFactory",
    "still_policy",
    "random_policy",
    "rollout_episode",
    "evaluate",
    "offset_range_test",
    "attention_heatmap",
    "assert_no_leakage",
    "EpisodeResult",
]


@dataclass
class EpisodeResult:
    status: Status
    steps: int
    positions: np.ndarray  # (steps+1, 2) including the start
    attention_rows: np.ndarray | None = None  # (steps, demo_len) final-layer head means


# ---------------------------------------------------------------- policies
class ActorPolicy:
    """Deterministic wrapper around a trained actor for evaluation rollouts."""

    def __init__(
        self,
        actor: DAActor,
        normalizer: Normalizer,
        include_coords: bool,
        goal_scale: float = 1.0,
        record_attention: bool = False,
    ):
        self.actor = actor
        self.normalizer = normalizer
        self.include_coords = include_coords
        self.goal_scale = goal_scale
        self.record_attention = record_attention

    @staticmethod
    def from_checkpoint(path, record_attention: bool = False) -> "ActorPolicy":
        ckpt = load_checkpoint(path)
        cfg = ModelConfig.from_dict(ckpt["model_cfg"])
        actor = DAActor(ckpt["obs_dim"], cfg)
        actor.load_state_dict(ckpt["actor_state"])
        extra = ckpt["extra"]
        return ActorPolicy(
            actor,
            Normalizer.from_dict(ckpt["normalizer"]),
            include_coords=extra["include_coords"],
            goal_scale=extra.get("goal_scale", 1.0),
            record_attention=record_attention,
        )

    def __call__(self, env: NavEnv, demo: Demonstration):
        self.actor.eval()
        norm_obs = self.normalizer.normalize_state(demo.observations(self.include_coords))
        with torch.no_grad():
            keys, values = self.actor.encode_demo(
                torch.as_tensor(norm_obs, dtype=torch.float32).unsqueeze(0),
                torch.as_tensor(demo.actions, dtype=torch.float32).unsqueeze(0),
            )
        rows: list[np.ndarray] = []

        def act(state: EnvState) -> np.ndarray:
            obs = env.observation(state)
            with torch.no_grad():
                obs_t = torch.as_tensor(
                    self.normalizer.normalize_state(obs), dtype=torch.float32
                ).unsqueeze(0)
                action, trace = self.actor.deterministic(obs_t, keys, values)
            if self.record_attention:
                rows.append(trace.final_head_mean()[0])
            return action.squeeze(0).numpy().astype(np.float64)

        act.attention_rows = rows
        return act


class OracleFactory:
    def __init__(self, max_step: float = 0.8):
        self.max_step = max_step

    def __call__(self, env: NavEnv, demo: Demonstration):
        return OraclePolicy(env, demo, max_step=self.max_step).act


def still_policy(env: NavEnv, demo: Demonstration):
    return lambda state: np.zeros(2)


def random_policy(seed: int = 0):
    def factory(env: NavEnv, demo: Demonstration):
        rng = stream(seed, "random-policy", len(demo))

        def act(state):
            return rng.uniform(-1.0, 1.0, size=2)

        return act

    return factory


# ---------------------------------------------------------------- rollouts
def rollout_episode(env: NavEnv, act_fn, start_state: EnvState | None = None) -> EpisodeResult:
    state = env.reset(evaluation=True) if start_state is None else start_state
    positions = [state.position.copy()]
    status = Status.RUNNING
    steps = 0
    try:
        while status == Status.RUNNING:
            action = act_fn(state)
            outcome = env.step(state, action)
            state, status = outcome.next_state, outcome.status
            positions.append(state.position.copy())
            steps += 1
    except OracleStuck:
        status = Status.TIMEOUT
    attn = getattr(act_fn, "attention_rows", None)
    return EpisodeResult(
        status=status,
        steps=steps,
        positions=np.asarray(positions),
        attention_rows=np.asarray(attn) if attn else None,
    )


def _stderr(successes: int, episodes: int) -> float:
    if episodes == 0:
        return float("nan")
    p = successes / episodes
    return math.sqrt(max(p * (1.0 - p), 0.0) / episodes)


def evaluate(
    policy_factory,
    groups: dict[str, list[tuple[MazeMap, Demonstration]]],
    episodes_per_task: int = 1,
    base_seed: int = 0,
    include_coords: bool = True,
    ray_len: float = 5.0,
    with_obstacles: bool = False,
    horizon: int = 50,
    c: float = 1.0,
) -> dict:
    """Success-rate report per split; deterministic given the seed set."""
    report: dict[str, dict] = {}
    for split, tasks in groups.items():
        successes = 0
        episodes = 0
        skipped = 0
        for t_idx, (maze, demo) in enumerate(tasks):
            for ep in range(episodes_per_task):
                obstacles = []
                if with_obstacles:
                    ep_seed = int(
                        stream(base_seed, "eval-obstacles", _split_tag(split), t_idx, ep).integers(2**62)
                    )
                    obstacles = spawn_obstacles(maze, demo, seed=ep_seed, p=0.1, max_n=4)
                env = NavEnv(
                    task=demo.task(maze, horizon=horizon),
                    obstacles=obstacles,
                    ray_len=ray_len,
                    include_coords=include_coords,
                    c=c,
                )
                try:
                    act_fn = policy_factory(env, demo)
                    result = rollout_episode(env, act_fn)
                except ValueError:
                    skipped += 1
                    episodes += 1  # policy-caused skip counts as failure
                    continue
                episodes += 1
                successes += result.status == Status.SUCCESS
        report[split] = {
            "successes": successes,
            "episodes": episodes,
            "rate": successes / episodes if episodes else float("nan"),
            "stderr": _stderr(successes, episodes),
            "skipped": skipped,
        }
    return report


def _split_tag(split: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(split.encode()).digest()[:4], "little")


def offset_range_test(
    policy_factory,
    tasks: list[tuple[MazeMap, Demonstration]],
    offsets: list[float],
    episodes_per_task: int = 1,
    base_seed: int = 0,
    include_coords: bool = True,
    ray_len: float = 5.0,
    horizon: int = 50,
    c: float = 1.0,
) -> list[dict]:
    """Success rate under uniformly sampled start offsets of growing radius.

    Offsets landing inside geometry are resampled (rejections counted).
    Obstacle-free by protocol.
    """
    curve = []
    for o_idx, radius in enumerate(offsets):
        successes = 0
        episodes = 0
        rejections = 0
        for t_idx, (maze, demo) in enumerate(tasks):
            env = NavEnv(
                task=demo.task(maze, horizon=horizon),
                obstacles=[],
                ray_len=ray_len,
                include_coords=include_coords,
                c=c,
            )
            rng = stream(base_seed, "offset", o_idx, t_idx)
            for ep in range(episodes_per_task):
                pos = np.array(maze.start, dtype=float)
                if radius > 0:
                    while True:
                        angle = rng.uniform(0.0, 2.0 * np.pi)
                        r = rng.uniform(0.0, radius)
                        cand = maze.start + r * np.array([np.cos(angle), np.sin(angle)])
                        if env.position_free(cand):
                            pos = cand
                            break
                        rejections += 1
                start = EnvState(position=pos, local_view=env.local_view(pos), t=0)
                act_fn = policy_factory(env, demo)
                result = rollout_episode(env, act_fn, start_state=start)
                episodes += 1
                successes += result.status == Status.SUCCESS
        curve.append(
            {
                "offset": radius,
                "rate": successes / episodes if episodes else float("nan"),
                "stderr": _stderr(successes, episodes),
                "episodes": episodes,
                "rejections": rejections,
            }
        )
    return curve


def attention_heatmap(policy: ActorPolicy, env: NavEnv, demo: Demonstration) -> np.ndarray:
    """Final-layer, head-averaged attention matrix of one deterministic rollout.

    Rows are agent timesteps, columns demo timesteps.
    """
    policy.record_attention = True
    act_fn = policy(env, demo)
    result = rollout_episode(env, act_fn)
    if result.attention_rows is None or len(result.attention_rows) == 0:
        return np.zeros((0, len(demo)))
    return result.attention_rows


def save_heatmap(matrix: np.ndarray, csv_path, png_path=None) -> None:
    np.savetxt(csv_path, matrix, delimiter=",")
    if png_path is not None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.imshow(matrix, aspect="auto", cmap="viridis", interpolation="nearest")
        ax.set_xlabel("demo timestep")
        ax.set_ylabel("agent timestep")
        fig.tight_layout()
        fig.savefig(png_path, dpi=110)
        plt.close(fig)


def assert_no_leakage(manifest: dict) -> None:
    """Split demo-id sets must be pairwise disjoint."""
    splits = list(manifest)
    for i in range(len(splits)):
        for j in range(i + 1, len(splits)):
            overlap = set(manifest[splits[i]]) & set(manifest[splits[j]])
            if overlap:
                raise AssertionError(f"splits {splits[i]}/{splits[j]} share demos: {sorted(overlap)[:5]}")


def save_report(report: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
