"""Soft actor-critic training loop over demonstration-conditioned tasks.

One iteration samples a task uniformly, rolls out an episode with the current
stochastic policy under the dense imitation reward, stores transitions in the
per-demo replay bank, then runs gradient updates on batches mixing replayed
transitions (from 5 demo buffers) with 20% transitions synthesized directly
from demonstration pairs. Twin critics bootstrap from slow target copies; the
entropy coefficient is tuned toward a target entropy by default.

A behavior-cloning mode trains the same actor with an MSE loss on expert
actions and never touches the environment.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .buffers import NotEnoughBuffers, ReplayBank
from .demos import Demonstration
from .env import NavEnv, Status, spawn_obstacles
from .maze import MazeMap
from .nets import (
    ACTION_DIM,
    DAActor,
    ModelConfig,
    TwinCritic,
    make_target,
    polyak_update_params,
    save_checkpoint,
)
from .reward import DemoContext, Normalizer, RewardConfig, fit_normalizer, itor_reward
from .rng import stream

__all__ = ["TrainerConfig", "SACTrainer", "NumericError"]

METRIC_FIELDS = [
    "step",
    "critic_loss",
    "actor_loss",
    "entropy_coef",
    "success_seen",
    "success_new_demo",
    "success_new_map",
]


class NumericError(RuntimeError):
    """A loss or gradient became non-finite."""


@dataclass
class TrainerConfig:
    lr: float = 5e-5
    batch_size: int = 256
    gamma: float = 0.99
    buffers_per_batch: int = 5
    demo_injection: float = 0.2
    polyak: float = 0.995
    entropy_coef: str | float = "auto"
    target_entropy: float | None = None  # default -action_dim
    total_steps: int = 100_000
    warmup_steps: int = 5_000
    updates_per_step: float = 1.0
    replay_capacity: int = 100_000
    optimizer: str = "rmsprop"
    start_disturbance: float = 0.1
    eval_every: int = 5_000
    eval_episodes_per_task: int = 1
    checkpoint_every: int = 20_000
    seed: int = 0
    mode: str = "sac"  # "sac" | "bc"
    bc_total_updates: int = 20_000
    # reward parameters
    eta: float = 2.0
    alpha: str | float = 100.0  # "auto" -> 1/(c*(1-gamma))
    c: float = 1.0
    use_itor_reward: bool = True  # False: plain ending reward only (ablation)
    stop_success: dict | None = None  # e.g. {"seen": 0.9, "new_demo": 0.7}

    def __post_init__(self):
        if not (0.0 <= self.demo_injection < 1.0):
            raise ValueError("demo_injection must be in [0, 1)")
        if self.mode not in ("sac", "bc"):
            raise ValueError(f"unknown trainer mode {self.mode!r}")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def reward_config(self) -> RewardConfig:
        alpha = self.alpha
        if alpha == "auto":
            alpha = RewardConfig.derived_alpha(self.c, self.gamma)
        return RewardConfig(eta=self.eta, alpha=float(alpha), c=self.c, gamma=self.gamma)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeStats:
    steps: int
    status: Status
    total_reward: float
    demo_id: str


class _DemoSlot:
    """Per-demonstration caches used by rollouts and updates."""

    def __init__(self, demo: Demonstration, maze: MazeMap, ctx: DemoContext, goal_scale: float):
        self.demo = demo
        self.maze = maze
        self.ctx = ctx
        self.norm_obs_t = torch.as_tensor(ctx.norm_states, dtype=torch.float32)
        self.actions_t = torch.as_tensor(demo.actions, dtype=torch.float32)
        self.goal_t = torch.as_tensor(demo.goal / goal_scale, dtype=torch.float32)
        self.length = len(demo)
        self.injected: dict | None = None  # filled by trainer


class SACTrainer:
    def __init__(
        self,
        mazes: dict[str, MazeMap],
        train_demos: list[Demonstration],
        eval_groups: dict[str, list[Demonstration]],
        model_cfg: ModelConfig,
        cfg: TrainerConfig,
        include_coords: bool = True,
        ray_len: float = 5.0,
        with_obstacles: bool = False,
        horizon: int = 50,
    ):
        if not train_demos:
            raise ValueError("need at least one training demonstration")
        self.cfg = cfg
        self.model_cfg = model_cfg
        self.include_coords = include_coords
        self.ray_len = ray_len
        self.with_obstacles = with_obstacles
        self.horizon = horizon
        self.mazes = mazes
        self.train_demos = train_demos
        self.eval_groups = eval_groups
        self.reward_cfg = cfg.reward_config()

        torch.manual_seed(cfg.seed)
        self.normalizer = fit_normalizer(train_demos, include_coords)
        self.obs_dim = train_demos[0].observations(include_coords).shape[1]
        goal_scale = float(next(iter(mazes.values())).grid_size)
        self.goal_scale = goal_scale

        self.slots: dict[str, _DemoSlot] = {}
        for d in train_demos:
            ctx = DemoContext(d, self.normalizer, include_coords)
            self.slots[d.demo_id] = _DemoSlot(d, mazes[d.map_id], ctx, goal_scale)
        self.demo_order = [d.demo_id for d in train_demos]
        for slot in self.slots.values():
            slot.injected = self._materialize_demo_transitions(slot)

        self.actor = DAActor(self.obs_dim, model_cfg)
        self.critic = TwinCritic(self.obs_dim, model_cfg)
        self.target_critic = make_target(self.critic)

        self._actor_params = list(self.actor.parameters())
        self._critic_params = list(self.critic.parameters())
        self._target_params = list(self.target_critic.parameters())
        opt = torch.optim.RMSprop if cfg.optimizer == "rmsprop" else torch.optim.Adam
        self.actor_opt = opt(self._actor_params, lr=cfg.lr, foreach=True)
        self.critic_opt = opt(self._critic_params, lr=cfg.lr, foreach=True)
        self.log_alpha = torch.zeros(1, requires_grad=True)
        self.alpha_opt = opt([self.log_alpha], lr=cfg.lr)
        if cfg.entropy_coef != "auto":
            with torch.no_grad():
                self.log_alpha.fill_(math.log(float(cfg.entropy_coef)))
        self.target_entropy = cfg.target_entropy if cfg.target_entropy is not None else -float(ACTION_DIM)

        self.bank = ReplayBank(self.demo_order, self.obs_dim, cfg.replay_capacity)
        self.demo_lengths = {d: self.slots[d].length for d in self.demo_order}

        # independent streams so each stochastic component replays in isolation
        self.rng_task = stream(cfg.seed, "tasks")
        self.rng_reset_idx = stream(cfg.seed, "reset-index")
        self.rng_reset_noise = stream(cfg.seed, "reset-noise")
        self.rng_batch = stream(cfg.seed, "batch")
        self.torch_gen = torch.Generator().manual_seed(cfg.seed)

        self.env_steps = 0
        self.episodes = 0
        self.updates = 0
        self.bc_updates = 0
        self._update_carry = 0.0
        self.metrics: list[dict] = []
        self._loss_acc = {"critic": 0.0, "actor": 0.0, "n": 0}

    # ------------------------------------------------------------------ rollouts
    def _make_env(self, slot: _DemoSlot) -> NavEnv:
        obstacles = []
        if self.with_obstacles:
            task0 = slot.demo.task(slot.maze, horizon=self.horizon)
            obstacles = spawn_obstacles(
                slot.maze,
                slot.demo,
                seed=int(stream(self.cfg.seed, "obstacle-seeds", self.episodes).integers(2**62)),
                p=task0.obstacle_prob,
                max_n=task0.max_obstacles,
            )
        return NavEnv(
            task=slot.demo.task(slot.maze, horizon=self.horizon),
            obstacles=obstacles,
            ray_len=self.ray_len,
            include_coords=self.include_coords,
            c=self.cfg.c,
        )

    def _step_reward(self, slot: _DemoSlot, obs: np.ndarray, action: np.ndarray, ending: float) -> float:
        if self.cfg.use_itor_reward:
            return itor_reward(obs, action, slot.ctx, ending, self.reward_cfg)
        return ending

    def collect_rollout(self) -> EpisodeStats:
        demo_id = self.demo_order[int(self.rng_task.integers(len(self.demo_order)))]
        slot = self.slots[demo_id]
        env = self._make_env(slot)
        state = env.reset(
            demo=slot.demo,
            start_index_rng=self.rng_reset_idx,
            disturbance_rng=self.rng_reset_noise,
            evaluation=False,
            disturbance_scale=self.cfg.start_disturbance,
        )
        self.actor.eval()
        keys, values = self._actor_memory(slot)
        total = 0.0
        steps = 0
        status = Status.RUNNING
        while status == Status.RUNNING:
            obs = env.observation(state)
            with torch.no_grad():
                obs_t = torch.as_tensor(
                    self.normalizer.normalize_state(obs), dtype=torch.float32
                ).unsqueeze(0)
                action_t, _, _ = self.actor.sample(obs_t, keys, values, generator=self.torch_gen)
            action = action_t.squeeze(0).numpy().astype(np.float64)
            outcome = env.step(state, action)
            reward = self._step_reward(slot, obs, action, outcome.ending_reward)
            done = outcome.status != Status.RUNNING
            next_obs = env.observation(outcome.next_state)
            self.bank.append(demo_id, obs, action, reward, next_obs, done)
            total += reward
            steps += 1
            self.env_steps += 1
            state, status = outcome.next_state, outcome.status
        self.episodes += 1
        return EpisodeStats(steps=steps, status=status, total_reward=total, demo_id=demo_id)

    def _actor_memory(self, slot: _DemoSlot):
        with torch.no_grad():
            keys, values = self.actor.encode_demo(
                slot.norm_obs_t.unsqueeze(0), slot.actions_t.unsqueeze(0)
            )
        return keys, values

    # ------------------------------------------------------------------ batches
    def _materialize_demo_transitions(self, slot: _DemoSlot) -> dict:
        """Transitions synthesized straight from demonstration pairs."""
        demo = slot.demo
        obs = demo.observations(self.include_coords)
        n = len(demo) - 1
        rew = np.zeros(n, dtype=np.float32)
        done = np.zeros(n, dtype=bool)
        for i in range(n):
            ending = self.cfg.c if i == n - 1 else 0.0
            rew[i] = self._step_reward(slot, obs[i], demo.actions[i], ending)
        done[n - 1] = True
        return {
            "obs": obs[:-1].astype(np.float32),
            "act": demo.actions[:-1].astype(np.float32),
            "rew": rew,
            "next_obs": obs[1:].astype(np.float32),
            "done": done,
        }

    def _assemble_batch(self):
        raw = self.bank.sample(
            self.cfg.batch_size,
            self.cfg.buffers_per_batch,
            self.cfg.demo_injection,
            self.rng_batch,
            self.demo_lengths,
        )
        parts_obs = [raw.obs]
        parts_act = [raw.act]
        parts_rew = [raw.rew]
        parts_next = [raw.next_obs]
        parts_done = [raw.done]
        demo_ids = list(raw.demo_ids)
        for demo_id, idx in raw.injected_pairs:
            t = self.slots[demo_id].injected
            parts_obs.append(t["obs"][idx : idx + 1])
            parts_act.append(t["act"][idx : idx + 1])
            parts_rew.append(t["rew"][idx : idx + 1])
            parts_next.append(t["next_obs"][idx : idx + 1])
            parts_done.append(t["done"][idx : idx + 1])
            demo_ids.append(demo_id)
        return (
            np.concatenate(parts_obs),
            np.concatenate(parts_act),
            np.concatenate(parts_rew),
            np.concatenate(parts_next),
            np.concatenate(parts_done),
            demo_ids,
        )

    def _group_demos(self, demo_ids: list[str]):
        unique = sorted(set(demo_ids))
        t_max = max(self.slots[d].length for d in unique)
        m = len(unique)
        demo_obs = torch.zeros(m, t_max, self.obs_dim)
        demo_act = torch.zeros(m, t_max, ACTION_DIM)
        mask = torch.zeros(m, t_max, dtype=torch.bool)
        goals = torch.zeros(m, 2)
        for r, d in enumerate(unique):
            slot = self.slots[d]
            demo_obs[r, : slot.length] = slot.norm_obs_t
            demo_act[r, : slot.length] = slot.actions_t
            mask[r, : slot.length] = True
            goals[r] = slot.goal_t
        row_of = {d: r for r, d in enumerate(unique)}
        rows = torch.as_tensor([row_of[d] for d in demo_ids], dtype=torch.long)
        return demo_obs, demo_act, mask, goals, rows

    def _policy_actions_on_demo(self, demo_obs, demo_act, mask):
        """Deterministic actor outputs on every expert state (stop-gradient)."""
        m, t, _ = demo_obs.shape
        with torch.no_grad():
            keys, values = self.actor.encode_demo(demo_obs, demo_act)
            flat_obs = demo_obs.reshape(m * t, -1)
            rep_k = keys.unsqueeze(1).expand(m, t, t, -1).reshape(m * t, t, -1)
            rep_v = values.unsqueeze(1).expand(m, t, t, -1).reshape(m * t, t, -1)
            rep_mask = mask.unsqueeze(1).expand(m, t, t).reshape(m * t, t)
            mean, _, _ = self.actor(flat_obs, rep_k, rep_v, rep_mask)
            return torch.tanh(mean).reshape(m, t, ACTION_DIM)

    # ------------------------------------------------------------------ updates
    def update(self) -> tuple[float, float]:
        obs, act, rew, next_obs, done, demo_ids = self._assemble_batch()
        demo_obs, demo_act, mask, goals, rows = self._group_demos(demo_ids)
        cfg = self.cfg
        self.actor.train()
        self.critic.train()

        obs_t = torch.as_tensor(self.normalizer.normalize_state(obs), dtype=torch.float32)
        next_t = torch.as_tensor(self.normalizer.normalize_state(next_obs), dtype=torch.float32)
        act_t = torch.as_tensor(act, dtype=torch.float32)
        rew_t = torch.as_tensor(rew, dtype=torch.float32)
        done_t = torch.as_tensor(done, dtype=torch.float32)

        a_pi = self._policy_actions_on_demo(demo_obs, demo_act, mask)
        actor_keys, actor_values = self.actor.encode_demo(demo_obs, demo_act)
        item_mask = mask[rows]
        item_goals = goals[rows]
        alpha = self.log_alpha.exp().detach()

        # critic update
        with torch.no_grad():
            next_action, next_logp, _ = self.actor.sample(
                next_t, actor_keys[rows], actor_values[rows], item_mask, generator=self.torch_gen
            )
            tmem = self.target_critic.encode_demo(demo_obs, demo_act, a_pi)
            tq1, tq2 = self.target_critic(
                next_t,
                next_action,
                item_goals,
                ((tmem[0][0][rows], tmem[0][1][rows]), (tmem[1][0][rows], tmem[1][1][rows])),
                item_mask,
            )
            next_v = torch.min(tq1, tq2) - alpha * next_logp
            target = rew_t + cfg.gamma * (1.0 - done_t) * next_v

        cmem = self.critic.encode_demo(demo_obs, demo_act, a_pi)
        cmem_items = ((cmem[0][0][rows], cmem[0][1][rows]), (cmem[1][0][rows], cmem[1][1][rows]))
        q1, q2 = self.critic(obs_t, act_t, item_goals, cmem_items, item_mask)
        critic_loss = 0.5 * ((q1 - target) ** 2).mean() + 0.5 * ((q2 - target) ** 2).mean()
        if not torch.isfinite(critic_loss):
            raise NumericError("critic loss is not finite")
        self.critic_opt.zero_grad(set_to_none=True)
        critic_loss.backward()

        # actor objective against the same critic snapshot, with critic
        # parameters frozen so its gradients stay untouched; both optimizers
        # step only after both backward passes
        for p in self._critic_params:
            p.requires_grad_(False)
        new_action, logp, _ = self.actor.sample(
            obs_t, actor_keys[rows], actor_values[rows], item_mask, generator=self.torch_gen
        )
        cmem_detached = (
            (cmem_items[0][0].detach(), cmem_items[0][1].detach()),
            (cmem_items[1][0].detach(), cmem_items[1][1].detach()),
        )
        q1_pi, q2_pi = self.critic(obs_t, new_action, item_goals, cmem_detached, item_mask)
        actor_loss = (alpha * logp - torch.min(q1_pi, q2_pi)).mean()
        if not torch.isfinite(actor_loss):
            raise NumericError("actor loss is not finite")
        self.actor_opt.zero_grad(set_to_none=True)
        actor_loss.backward()
        for p in self._critic_params:
            p.requires_grad_(True)
        self.critic_opt.step()
        self.actor_opt.step()

        if cfg.entropy_coef == "auto":
            alpha_loss = -(self.log_alpha * (logp.detach() + self.target_entropy)).mean()
            self.alpha_opt.zero_grad(set_to_none=True)
            alpha_loss.backward()
            self.alpha_opt.step()

        polyak_update_params(self._target_params, self._critic_params, cfg.polyak)
        self.updates += 1
        c_val, a_val = critic_loss.item(), actor_loss.item()
        self._loss_acc["critic"] += c_val
        self._loss_acc["actor"] += a_val
        self._loss_acc["n"] += 1
        return c_val, a_val

    def bc_update(self) -> float:
        """MSE between deterministic actor outputs and expert actions."""
        cfg = self.cfg
        self.actor.train()
        ids = [
            self.demo_order[int(self.rng_batch.integers(len(self.demo_order)))]
            for _ in range(cfg.batch_size)
        ]
        obs = np.zeros((cfg.batch_size, self.obs_dim), dtype=np.float32)
        target = np.zeros((cfg.batch_size, ACTION_DIM), dtype=np.float32)
        for i, d in enumerate(ids):
            slot = self.slots[d]
            j = int(self.rng_batch.integers(slot.length))
            obs[i] = slot.ctx.norm_states[j]
            target[i] = slot.demo.actions[j]
        demo_obs, demo_act, mask, _, rows = self._group_demos(ids)
        keys, values = self.actor.encode_demo(demo_obs, demo_act)
        mean, _, _ = self.actor(torch.as_tensor(obs), keys[rows], values[rows], mask[rows])
        loss = ((torch.tanh(mean) - torch.as_tensor(target)) ** 2).mean()
        if not torch.isfinite(loss):
            raise NumericError("bc loss is not finite")
        self.actor_opt.zero_grad(set_to_none=True)
        loss.backward()
        self.actor_opt.step()
        self.bc_updates += 1
        val = loss.item()
        self._loss_acc["actor"] += val
        self._loss_acc["n"] += 1
        return val

    # ------------------------------------------------------------------ evaluation
    def evaluate_success(self) -> dict[str, float]:
        from .evaluate import ActorPolicy, evaluate

        policy = ActorPolicy(
            self.actor, self.normalizer, self.include_coords, goal_scale=self.goal_scale
        )
        groups = {
            split: [(self.mazes[d.map_id], d) for d in demos]
            for split, demos in self.eval_groups.items()
        }
        report = evaluate(
            policy,
            groups,
            episodes_per_task=self.cfg.eval_episodes_per_task,
            base_seed=self.cfg.seed,
            include_coords=self.include_coords,
            ray_len=self.ray_len,
            with_obstacles=self.with_obstacles,
            horizon=self.horizon,
            c=self.cfg.c,
        )
        return {split: report[split]["rate"] for split in report}

    def _record_metrics(self):
        rates = self.evaluate_success()
        n = max(self._loss_acc["n"], 1)
        row = {
            "step": self.env_steps if self.cfg.mode == "sac" else self.bc_updates,
            "critic_loss": self._loss_acc["critic"] / n,
            "actor_loss": self._loss_acc["actor"] / n,
            "entropy_coef": self.log_alpha.detach().exp().item(),
            "success_seen": rates.get("seen", float("nan")),
            "success_new_demo": rates.get("new_demo", float("nan")),
            "success_new_map": rates.get("new_map", float("nan")),
        }
        self.metrics.append(row)
        self._loss_acc = {"critic": 0.0, "actor": 0.0, "n": 0}
        return row

    def _stop_reached(self, row: dict) -> bool:
        if not self.cfg.stop_success:
            return False
        for split, threshold in self.cfg.stop_success.items():
            if row.get(f"success_{split}", float("nan")) < threshold:
                return False
        return True

    # ------------------------------------------------------------------ the loop
    def train(self, run_dir: str | None = None, log_fn=None) -> list[dict]:
        cfg = self.cfg
        if run_dir:
            os.makedirs(run_dir, exist_ok=True)
        t0 = time.time()
        if cfg.mode == "bc":
            return self._train_bc(run_dir, log_fn, t0)

        next_eval = cfg.eval_every
        next_ckpt = cfg.checkpoint_every
        while self.env_steps < cfg.total_steps:
            self.collect_rollout()
            if self.env_steps > cfg.warmup_steps:
                for _ in range(self._pending_updates()):
                    try:
                        self.update()
                    except NotEnoughBuffers:
                        break
            if self.env_steps >= next_eval or self.env_steps >= cfg.total_steps:
                row = self._record_metrics()
                if log_fn:
                    log_fn(
                        f"step {row['step']:>8}  critic {row['critic_loss']:.3f}  actor {row['actor_loss']:.3f}  "
                        f"seen {row['success_seen']:.2f}  new_demo {row['success_new_demo']:.2f}  "
                        f"[{time.time() - t0:.0f}s]"
                    )
                while next_eval <= self.env_steps:
                    next_eval += cfg.eval_every
                if run_dir:
                    self._write_metrics(run_dir)
                if self._stop_reached(row):
                    break
            if run_dir and self.env_steps >= next_ckpt:
                self.save_run_state(run_dir)
                while next_ckpt <= self.env_steps:
                    next_ckpt += cfg.checkpoint_every
        if run_dir:
            self.save_run_state(run_dir)
            self._write_metrics(run_dir)
        return self.metrics

    def _pending_updates(self) -> int:
        """Updates owed for steps collected since the last call (after warmup)."""
        new_steps = self.env_steps - getattr(self, "_last_update_step", max(self.cfg.warmup_steps, 0))
        if new_steps <= 0:
            self._last_update_step = max(self.env_steps, self.cfg.warmup_steps)
            return 0
        self._last_update_step = self.env_steps
        self._update_carry += new_steps * self.cfg.updates_per_step
        n = int(self._update_carry)
        self._update_carry -= n
        return n

    def _train_bc(self, run_dir, log_fn, t0) -> list[dict]:
        cfg = self.cfg
        next_eval = cfg.eval_every
        while self.bc_updates < cfg.bc_total_updates:
            self.bc_update()
            if self.bc_updates >= next_eval or self.bc_updates >= cfg.bc_total_updates:
                row = self._record_metrics()
                if log_fn:
                    log_fn(
                        f"bc update {row['step']:>8}  loss {row['actor_loss']:.4f}  "
                        f"seen {row['success_seen']:.2f}  [{time.time() - t0:.0f}s]"
                    )
                next_eval += cfg.eval_every
                if run_dir:
                    self._write_metrics(run_dir)
                if self._stop_reached(row):
                    break
        if run_dir:
            self.save_run_state(run_dir)
            self._write_metrics(run_dir)
        return self.metrics

    # ------------------------------------------------------------------ persistence
    def _write_metrics(self, run_dir: str):
        path = os.path.join(run_dir, "metrics.csv")
        fd, tmp = tempfile.mkstemp(dir=run_dir, suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS)
            writer.writeheader()
            for row in self.metrics:
                writer.writerow(row)
        os.replace(tmp, path)

    def save_run_state(self, run_dir: str):
        os.makedirs(run_dir, exist_ok=True)
        save_checkpoint(
            os.path.join(run_dir, "checkpoint.pt"),
            kind="policy",
            model_cfg=self.model_cfg,
            obs_dim=self.obs_dim,
            actor_state=self.actor.state_dict(),
            critic_state=self.critic.state_dict(),
            target_state=self.target_critic.state_dict(),
            normalizer=self.normalizer.to_dict(),
            rng_state={"torch": torch.get_rng_state().numpy()},
            extra={
                "include_coords": self.include_coords,
                "ray_len": self.ray_len,
                "goal_scale": self.goal_scale,
                "env_steps": self.env_steps,
            },
        )
        state = {
            "cfg": self.cfg.to_dict(),
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "alpha_opt": self.alpha_opt.state_dict(),
            "log_alpha": self.log_alpha.detach().clone(),
            "bank": self.bank.state_dict(),
            "counters": {
                "env_steps": self.env_steps,
                "episodes": self.episodes,
                "updates": self.updates,
                "bc_updates": self.bc_updates,
                "update_carry": self._update_carry,
                "last_update_step": getattr(self, "_last_update_step", self.cfg.warmup_steps),
            },
            "metrics": self.metrics,
            "rng": {
                "task": self.rng_task.bit_generator.state,
                "reset_idx": self.rng_reset_idx.bit_generator.state,
                "reset_noise": self.rng_reset_noise.bit_generator.state,
                "batch": self.rng_batch.bit_generator.state,
                "torch_gen": self.torch_gen.get_state(),
            },
        }
        fd, tmp = tempfile.mkstemp(dir=run_dir, suffix=".tmp")
        with os.fdopen(fd, "wb") as f:
            torch.save(state, f)
        os.replace(tmp, os.path.join(run_dir, "trainer_state.pt"))

    def load_run_state(self, run_dir: str):
        from .nets import load_checkpoint

        ckpt = load_checkpoint(os.path.join(run_dir, "checkpoint.pt"))
        self.actor.load_state_dict(ckpt["actor_state"])
        self.critic.load_state_dict(ckpt["critic_state"])
        self.target_critic.load_state_dict(ckpt["target_state"])
        state = torch.load(os.path.join(run_dir, "trainer_state.pt"), weights_only=False)
        self.actor_opt.load_state_dict(state["actor_opt"])
        self.critic_opt.load_state_dict(state["critic_opt"])
        self.alpha_opt.load_state_dict(state["alpha_opt"])
        with torch.no_grad():
            self.log_alpha.copy_(state["log_alpha"])
        self.bank.load_state_dict(state["bank"])
        c = state["counters"]
        self.env_steps = c["env_steps"]
        self.episodes = c["episodes"]
        self.updates = c["updates"]
        self.bc_updates = c["bc_updates"]
        self._update_carry = c["update_carry"]
        self._last_update_step = c["last_update_step"]
        self.metrics = list(state["metrics"])
        self.rng_task.bit_generator.state = state["rng"]["task"]
        self.rng_reset_idx.bit_generator.state = state["rng"]["reset_idx"]
        self.rng_reset_noise.bit_generator.state = state["rng"]["reset_noise"]
        self.rng_batch.bit_generator.state = state["rng"]["batch"]
        self.torch_gen.set_state(state["rng"]["torch_gen"])
