"""Dense imitation rewards derived from a single demonstration.

The main reward compares the current (state, action) against the nearest
demonstration pair under normalized squared L2 distance:

    r = 1 - min( d(s_bar, s)^2 + d(a_bar, a)^2 / exp(d(s_bar, s)^2), eta )
        + alpha * r_end

where (s_bar, a_bar) is the demo pair whose state is nearest to s, eta clips
the penalty for far-away states, and alpha rescales the sparse ending reward
r_end so that finishing always dominates loitering for dense reward. The
unclipped, unweighted joint-distance variant is kept as an ablation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .demos import Demonstration

__all__ = [
    "RewardConfig",
    "Normalizer",
    "NearestPair",
    "DemoContext",
    "fit_normalizer",
    "nearest_pair",
    "itor_reward",
    "il_reward",
    "anti_loitering_margin",
]

_DEGENERATE_SCALE = 1e-12


@dataclass(frozen=True)
class RewardConfig:
    eta: float = 2.0
    alpha: float = 100.0  # rescale for the ending reward; "auto" -> 1/(c*(1-gamma))
    c: float = 1.0
    gamma: float = 0.99

    def __post_init__(self):
        if self.eta <= 0 or self.alpha <= 0 or not (0.0 < self.gamma < 1.0):
            raise ValueError("require eta > 0, alpha > 0, 0 < gamma < 1")

    @staticmethod
    def derived_alpha(c: float, gamma: float) -> float:
        return 1.0 / (c * (1.0 - gamma))

    @staticmethod
    def with_derived_alpha(c: float = 1.0, gamma: float = 0.99, eta: float = 2.0) -> "RewardConfig":
        return RewardConfig(eta=eta, alpha=RewardConfig.derived_alpha(c, gamma), c=c, gamma=gamma)


def anti_loitering_margin(c: Fraction | int, gamma: Fraction) -> Fraction:
    """Exact value of alpha*c*(1-gamma) for alpha = 1/(c*(1-gamma)).

    The anti-loitering condition alpha*c > 1 - eps + gamma*alpha*c for every
    eps > 0 is equivalent to this margin being >= 1; with the derived alpha it
    equals 1 exactly.
    """
    c = Fraction(c)
    gamma = Fraction(gamma)
    alpha = 1 / (c * (1 - gamma))
    return alpha * c * (1 - gamma)


@dataclass
class Normalizer:
    """Per-dimension affine map to zero mean / unit scale.

    Dimensions with no spread map to zero everywhere (their inverse scale is
    stored as 0).
    """

    state_mean: np.ndarray
    state_inv_scale: np.ndarray
    action_mean: np.ndarray
    action_inv_scale: np.ndarray

    def normalize_state(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.state_mean) * self.state_inv_scale

    def normalize_action(self, a: np.ndarray) -> np.ndarray:
        return (np.asarray(a, dtype=float) - self.action_mean) * self.action_inv_scale

    def to_dict(self) -> dict:
        return {
            "state_mean": self.state_mean.tolist(),
            "state_inv_scale": self.state_inv_scale.tolist(),
            "action_mean": self.action_mean.tolist(),
            "action_inv_scale": self.action_inv_scale.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(
            state_mean=np.asarray(d["state_mean"], dtype=float),
            state_inv_scale=np.asarray(d["state_inv_scale"], dtype=float),
            action_mean=np.asarray(d["action_mean"], dtype=float),
            action_inv_scale=np.asarray(d["action_inv_scale"], dtype=float),
        )

    @staticmethod
    def identity(state_dim: int, action_dim: int = 2) -> "Normalizer":
        return Normalizer(
            state_mean=np.zeros(state_dim),
            state_inv_scale=np.ones(state_dim),
            action_mean=np.zeros(action_dim),
            action_inv_scale=np.ones(action_dim),
        )


def fit_normalizer(demos: list[Demonstration], include_coords: bool) -> Normalizer:
    """Fit over all demo states and actions (population statistics)."""
    if not demos:
        raise ValueError("cannot fit a normalizer on an empty demo corpus")
    states = np.vstack([d.observations(include_coords) for d in demos])
    actions = np.vstack([d.actions for d in demos])

    def stats(x):
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        inv = np.where(scale > _DEGENERATE_SCALE, 1.0 / np.where(scale > 0, scale, 1.0), 0.0)
        return mean, inv

    sm, si = stats(states)
    am, ai = stats(actions)
    return Normalizer(state_mean=sm, state_inv_scale=si, action_mean=am, action_inv_scale=ai)


@dataclass(frozen=True)
class NearestPair:
    expert_state: np.ndarray
    expert_action: np.ndarray
    squared_distance: float
    index: int


class DemoContext:
    """Pre-normalized demo tensors for repeated reward queries."""

    def __init__(self, demo: Demonstration, normalizer: Normalizer, include_coords: bool):
        self.demo = demo
        self.normalizer = normalizer
        self.include_coords = include_coords
        self.norm_states = normalizer.normalize_state(demo.observations(include_coords))
        self.norm_actions = normalizer.normalize_action(demo.actions)

    def state_sq_dists(self, obs: np.ndarray) -> np.ndarray:
        q = self.normalizer.normalize_state(obs)
        diff = self.norm_states - q
        return np.einsum("ij,ij->i", diff, diff)


def nearest_pair(obs: np.ndarray, ctx: DemoContext) -> NearestPair:
    """Exhaustive nearest demo pair by normalized squared state distance.

    Ties break toward the earliest timestep index.
    """
    if len(ctx.norm_states) == 0:
        raise ValueError("demonstration is empty")
    d2 = ctx.state_sq_dists(obs)
    idx = int(np.argmin(d2))  # argmin returns the first minimum: earliest index
    return NearestPair(
        expert_state=ctx.demo.observations(ctx.include_coords)[idx],
        expert_action=ctx.demo.actions[idx],
        squared_distance=float(d2[idx]),
        index=idx,
    )


def itor_reward(
    obs: np.ndarray,
    action: np.ndarray,
    ctx: DemoContext,
    ending_reward_value: float,
    cfg: RewardConfig,
) -> float:
    """Clipped, distance-reweighted imitation reward plus rescaled ending reward."""
    a = np.asarray(action, dtype=float)
    if a.shape != (2,) or np.any(np.abs(a) > 1.0 + 1e-9):
        raise ValueError(f"action outside [-1,1]^2: {a}")
    pair = nearest_pair(obs, ctx)
    ds2 = pair.squared_distance
    if ds2 >= cfg.eta:
        # the state term alone already saturates the clip
        return 1.0 - cfg.eta + cfg.alpha * ending_reward_value
    na = ctx.normalizer.normalize_action(a)
    da2 = float(np.sum((ctx.norm_actions[pair.index] - na) ** 2))
    penalty = min(ds2 + da2 / np.exp(ds2), cfg.eta)
    return 1.0 - penalty + cfg.alpha * ending_reward_value


def itor_reward_batch(
    obs: np.ndarray,
    actions: np.ndarray,
    ctx: DemoContext,
    ending_rewards: np.ndarray,
    cfg: RewardConfig,
) -> np.ndarray:
    """Vectorized variant for training batches drawn from one demonstration."""
    q = ctx.normalizer.normalize_state(obs)
    diff = ctx.norm_states[None, :, :] - q[:, None, :]
    d2 = np.einsum("bij,bij->bi", diff, diff)
    idx = np.argmin(d2, axis=1)
    ds2 = d2[np.arange(len(obs)), idx]
    na = ctx.normalizer.normalize_action(actions)
    da2 = np.sum((ctx.norm_actions[idx] - na) ** 2, axis=1)
    penalty = np.minimum(ds2 + da2 / np.exp(np.minimum(ds2, cfg.eta)), cfg.eta)
    return 1.0 - penalty + cfg.alpha * np.asarray(ending_rewards, dtype=float)


def il_reward(obs: np.ndarray, action: np.ndarray, ctx: DemoContext) -> float:
    """Unclipped joint state-action distance reward (ablation baseline)."""
    if len(ctx.norm_states) == 0:
        raise ValueError("demonstration is empty")
    q = ctx.normalizer.normalize_state(obs)
    na = ctx.normalizer.normalize_action(np.asarray(action, dtype=float))
    joint = np.sum((ctx.norm_states - q) ** 2, axis=1) + np.sum((ctx.norm_actions - na) ** 2, axis=1)
    return 1.0 - float(joint.min())
