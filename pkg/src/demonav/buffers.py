"""Per-demonstration replay storage with FIFO eviction.

Each demonstration owns a ring buffer sized ``total_capacity / n_demos``;
transitions never mix demo ids inside one record, and batches report which
demo each item came from so updates can attach the matching context.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ReplayBank", "RawBatch", "NotEnoughBuffers"]


class NotEnoughBuffers(RuntimeError):
    """Fewer non-empty buffers than a batch needs; retry after more rollouts."""


class _Ring:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rew = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=bool)
        self.ptr = 0
        self.size = 0

    def append(self, obs, act, rew, next_obs, done):
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def state_dict(self) -> dict:
        return {
            "obs": self.obs.copy(),
            "act": self.act.copy(),
            "rew": self.rew.copy(),
            "next_obs": self.next_obs.copy(),
            "done": self.done.copy(),
            "ptr": self.ptr,
            "size": self.size,
        }

    def load_state_dict(self, d: dict):
        self.obs[...] = d["obs"]
        self.act[...] = d["act"]
        self.rew[...] = d["rew"]
        self.next_obs[...] = d["next_obs"]
        self.done[...] = d["done"]
        self.ptr = int(d["ptr"])
        self.size = int(d["size"])


@dataclass
class RawBatch:
    obs: np.ndarray
    act: np.ndarray
    rew: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    demo_ids: list[str]  # per item
    injected_pairs: list[tuple[str, int]]  # (demo_id, pair index) rows still to fill


class ReplayBank:
    def __init__(self, demo_ids: list[str], obs_dim: int, total_capacity: int = 100_000):
        if not demo_ids:
            raise ValueError("need at least one registered demonstration")
        per = max(1, total_capacity // len(demo_ids))
        self.obs_dim = obs_dim
        self.buffers = {d: _Ring(per, obs_dim) for d in demo_ids}
        self.per_capacity = per

    def append(self, demo_id: str, obs, act, rew, next_obs, done):
        self.buffers[demo_id].append(obs, act, rew, next_obs, done)

    def __len__(self):
        return sum(b.size for b in self.buffers.values())

    def num_nonempty(self) -> int:
        return sum(1 for b in self.buffers.values() if b.size > 0)

    def select_buffers(self, buffers_per_batch: int, rng: np.random.Generator) -> list[str]:
        eligible = sorted(d for d, b in self.buffers.items() if b.size > 0)
        if len(eligible) < buffers_per_batch:
            raise NotEnoughBuffers(f"{len(eligible)} non-empty buffers < {buffers_per_batch}")
        picks = rng.choice(len(eligible), size=buffers_per_batch, replace=False)
        return [eligible[i] for i in sorted(picks)]

    def sample(
        self,
        batch_size: int,
        buffers_per_batch: int,
        demo_injection: float,
        rng: np.random.Generator,
        demo_lengths: dict[str, int],
    ) -> RawBatch:
        """Replay part of a training batch plus demo-pair slots to inject.

        ``floor(demo_injection * batch_size)`` items come straight from
        demonstration pairs of the selected demos; the rest are drawn uniformly
        across the selected buffers (buffer first, then item).
        """
        chosen = self.select_buffers(buffers_per_batch, rng)
        n_inject = int(np.floor(demo_injection * batch_size))
        n_replay = batch_size - n_inject

        obs = np.zeros((n_replay, self.obs_dim), dtype=np.float32)
        act = np.zeros((n_replay, 2), dtype=np.float32)
        rew = np.zeros(n_replay, dtype=np.float32)
        next_obs = np.zeros((n_replay, self.obs_dim), dtype=np.float32)
        done = np.zeros(n_replay, dtype=bool)
        demo_ids: list[str] = []
        for i in range(n_replay):
            demo_id = chosen[int(rng.integers(buffers_per_batch))]
            buf = self.buffers[demo_id]
            j = int(rng.integers(buf.size))
            obs[i] = buf.obs[j]
            act[i] = buf.act[j]
            rew[i] = buf.rew[j]
            next_obs[i] = buf.next_obs[j]
            done[i] = buf.done[j]
            demo_ids.append(demo_id)

        injected = []
        for _ in range(n_inject):
            demo_id = chosen[int(rng.integers(buffers_per_batch))]
            n_pairs = demo_lengths[demo_id] - 1  # transitions, not stored pairs
            idx = int(rng.integers(n_pairs)) if n_pairs > 0 else 0
            injected.append((demo_id, idx))

        return RawBatch(obs, act, rew, next_obs, done, demo_ids, injected)

    def state_dict(self) -> dict:
        return {d: b.state_dict() for d, b in self.buffers.items()}

    def load_state_dict(self, d: dict):
        for demo_id, st in d.items():
            self.buffers[demo_id].load_state_dict(st)
