"""Demonstration-attention actor and critic networks.

Expert states become attention keys, expert actions become values, and the
current state becomes the query: each cross-attention layer softmax-matches
the query against the demo sequence and composes a value-weighted output that
feeds the next layer as its query. The actor head emits a squashed-Gaussian
action distribution; the critic scores (state, action, goal) queries against
a memory built from expert states and both the expert's and the current
policy's actions on them.

Expert states and the visited state share one encoder (identical weights by
construction). Per-layer, per-head attention weights are exported for the
diagonal-concentration diagnostic.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

__all__ = [
    "ModelConfig",
    "AttentionTrace",
    "attention_weights",
    "SequenceEncoder",
    "CrossAttentionStack",
    "polyak_update",
    "polyak_update_params",
    "DAActor",
    "DACritic",
    "TwinCritic",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT",
]

CHECKPOINT_FORMAT = "demonav-ckpt-1"

ACTION_DIM = 2
GOAL_DIM = 2


@dataclass
class ModelConfig:
    d_model: int = 128
    n_heads: int = 16
    enc_layers_actor: int = 3
    attn_layers_actor: int = 6
    enc_layers_critic: int = 4
    attn_layers_critic: int = 4
    hidden_width: int = 256
    dropout: float = 0.1
    timestep_encoding: bool = True
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    # "softmax" is the demonstration-matching attention; "uniform" mean-pools
    # the demo sequence instead (ablation that removes the matching mechanism)
    attention_mode: str = "softmax"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.attention_mode not in ("softmax", "uniform"):
            raise ValueError(f"unknown attention_mode {self.attention_mode!r}")
        for name in ("enc_layers_actor", "attn_layers_actor", "enc_layers_critic", "attn_layers_critic"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


@dataclass
class AttentionTrace:
    """Per-layer (batch, heads, demo_len) attention weights of one forward pass."""

    layers: list[torch.Tensor] = field(default_factory=list)

    def final_head_mean(self) -> np.ndarray:
        """Head-averaged weights of the last cross-attention layer, (batch, demo_len)."""
        return self.layers[-1].mean(dim=1).detach().cpu().numpy()

    def stacked(self) -> np.ndarray:
        return torch.stack(self.layers).detach().cpu().numpy()


def attention_weights(q: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
    """Scaled dot-product attention weights softmax(q . k_i / sqrt(d_k)).

    Computed with explicit max-subtraction for numerical stability. ``q`` is
    (..., d_k) and ``keys`` is (..., T, d_k); returns (..., T).
    """
    if keys.shape[-2] == 0:
        raise ValueError("empty key matrix")
    d_k = q.shape[-1]
    logits = (keys @ q.unsqueeze(-1)).squeeze(-1) / math.sqrt(d_k)
    logits = logits - logits.max(dim=-1, keepdim=True).values
    w = torch.exp(logits)
    return w / w.sum(dim=-1, keepdim=True)


def timestep_encoding(length: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    """Sinusoidal position codes, (length, d_model)."""
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    half = torch.arange(0, d_model, 2, dtype=dtype)
    div = torch.exp(-math.log(10000.0) * half / d_model)
    out = torch.zeros(length, d_model, dtype=dtype)
    out[:, 0::2] = torch.sin(pos * div)
    out[:, 1::2] = torch.cos(pos * div[: d_model // 2])
    return out


class FeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d_model, hidden), nn.GELU(), nn.Linear(hidden, d_model))

    def forward(self, x):
        return self.net(x)


class EncoderBlock(nn.Module):
    """dropout -> feedforward -> add & normalize, applied per element."""

    def __init__(self, d_model: int, hidden: int, dropout: float):
        super().__init__()
        self.dropout = nn.Dropout(dropout)
        self.ff = FeedForward(d_model, hidden)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x):
        return self.norm(x + self.ff(self.dropout(x)))


class SequenceEncoder(nn.Module):
    """Input projection followed by K stacked per-element residual blocks."""

    def __init__(self, in_dim: int, d_model: int, n_layers: int, hidden: int, dropout: float):
        super().__init__()
        self.proj = nn.Linear(in_dim, d_model)
        self.blocks = nn.ModuleList(EncoderBlock(d_model, hidden, dropout) for _ in range(n_layers))
        self.d_model = d_model

    def forward(self, x: torch.Tensor, add_timestep: bool = False) -> torch.Tensor:
        h = self.proj(x)
        if add_timestep:
            t = timestep_encoding(h.shape[-2], self.d_model, dtype=h.dtype).to(h.device)
            h = h + t
        for blk in self.blocks:
            h = blk(h)
        return h


class CrossAttentionLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int, hidden: int, dropout: float, mode: str = "softmax"):
        super().__init__()
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.mode = mode
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)
        self.drop1 = nn.Dropout(dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.ff = FeedForward(d_model, hidden)
        self.drop2 = nn.Dropout(dropout)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, q, keys, values, mask=None):
        """q: (B, d); keys/values: (B, T, d); mask: (B, T) bool, True = valid."""
        b, t, d = keys.shape
        h, dk = self.n_heads, self.d_k
        qh = self.w_q(q).view(b, h, 1, dk)
        kh = self.w_k(keys).view(b, t, h, dk).transpose(1, 2)  # (B, H, T, dk)
        vh = self.w_v(values).view(b, t, h, dk).transpose(1, 2)

        if self.mode == "uniform":
            if mask is None:
                w = torch.full((b, h, t), 1.0 / t, dtype=keys.dtype, device=keys.device)
            else:
                valid = mask.unsqueeze(1).to(keys.dtype).expand(b, h, t)
                w = valid / valid.sum(dim=-1, keepdim=True)
        else:
            logits = (qh @ kh.transpose(-1, -2)).squeeze(-2) / math.sqrt(dk)
            if mask is not None:
                logits = logits.masked_fill(~mask.unsqueeze(1), float("-inf"))
            # torch.softmax subtracts the row max internally
            w = torch.softmax(logits, dim=-1)  # (B, H, T)

        fused = (w.unsqueeze(-2) @ vh).reshape(b, d)
        x = self.norm1(q + self.drop1(self.w_o(fused)))
        x = self.norm2(x + self.drop2(self.ff(x)))
        return x, w


class CrossAttentionStack(nn.Module):
    """N cross-attention layers; each layer's output is the next layer's query."""

    def __init__(self, d_model: int, n_heads: int, n_layers: int, hidden: int, dropout: float, mode: str = "softmax"):
        super().__init__()
        self.layers = nn.ModuleList(
            CrossAttentionLayer(d_model, n_heads, hidden, dropout, mode) for _ in range(n_layers)
        )

    def forward(self, q, keys, values, mask=None):
        trace = AttentionTrace()
        for layer in self.layers:
            q, w = layer(q, keys, values, mask)
            trace.layers.append(w)
        return q, trace


class DAActor(nn.Module):
    def __init__(self, obs_dim: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.obs_dim = obs_dim
        d, hid, drop = cfg.d_model, cfg.hidden_width, cfg.dropout
        # shared between expert states and the visited state by construction
        self.state_encoder = SequenceEncoder(obs_dim, d, cfg.enc_layers_actor, hid, drop)
        self.action_encoder = SequenceEncoder(ACTION_DIM, d, cfg.enc_layers_actor, hid, drop)
        self.attention = CrossAttentionStack(d, cfg.n_heads, cfg.attn_layers_actor, hid, drop, cfg.attention_mode)
        self.head = nn.Sequential(nn.Linear(d, hid), nn.GELU(), nn.Linear(hid, 2 * ACTION_DIM))

    def encode_demo(self, demo_obs: torch.Tensor, demo_actions: torch.Tensor):
        """(M, T, obs_dim), (M, T, 2) -> keys, values (M, T, d)."""
        add_t = self.cfg.timestep_encoding
        keys = self.state_encoder(demo_obs, add_timestep=add_t)
        values = self.action_encoder(demo_actions, add_timestep=add_t)
        return keys, values

    def forward(self, obs: torch.Tensor, keys: torch.Tensor, values: torch.Tensor, mask=None):
        """Returns (mean, log_std, AttentionTrace) for a batch of observations."""
        if not torch.isfinite(obs).all():
            raise ValueError("non-finite observation")
        q = self.state_encoder(obs)
        fused, trace = self.attention(q, keys, values, mask)
        out = self.head(fused)
        mean, log_std = out.chunk(2, dim=-1)
        log_std = torch.clamp(log_std, self.cfg.log_std_min, self.cfg.log_std_max)
        return mean, log_std, trace

    def sample(self, obs, keys, values, mask=None, generator: torch.Generator | None = None):
        """Reparameterized squashed-Gaussian sample with log probability."""
        mean, log_std, trace = self(obs, keys, values, mask)
        std = log_std.exp()
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
        u = mean + std * noise
        action = torch.tanh(u)
        log_prob = (-0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * math.log(2 * math.pi)).sum(-1)
        # tanh change of variables, in the softplus form that avoids log(1 - a^2)
        log_prob = log_prob - (2.0 * (math.log(2.0) - u - torch.nn.functional.softplus(-2.0 * u))).sum(-1)
        return action, log_prob, trace

    def deterministic(self, obs, keys, values, mask=None):
        mean, _, trace = self(obs, keys, values, mask)
        return torch.tanh(mean), trace


class DACritic(nn.Module):
    """Q(s, a; demo, goal) with keys from expert states and values from the
    expert's and current policy's actions on those states."""

    def __init__(self, obs_dim: int, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d, hid, drop = cfg.d_model, cfg.hidden_width, cfg.dropout
        self.state_encoder = SequenceEncoder(obs_dim, d, cfg.enc_layers_critic, hid, drop)
        self.action_encoder = SequenceEncoder(2 * ACTION_DIM, d, cfg.enc_layers_critic, hid, drop)
        self.query_encoder = SequenceEncoder(obs_dim + ACTION_DIM + GOAL_DIM, d, cfg.enc_layers_critic, hid, drop)
        self.attention = CrossAttentionStack(d, cfg.n_heads, cfg.attn_layers_critic, hid, drop, cfg.attention_mode)
        self.head = nn.Sequential(nn.Linear(d, hid), nn.GELU(), nn.Linear(hid, 1))

    def encode_demo(self, demo_obs: torch.Tensor, expert_actions: torch.Tensor, policy_actions: torch.Tensor):
        add_t = self.cfg.timestep_encoding
        keys = self.state_encoder(demo_obs, add_timestep=add_t)
        values = self.action_encoder(torch.cat([expert_actions, policy_actions], dim=-1), add_timestep=add_t)
        return keys, values

    def forward(self, obs, action, goal, keys, values, mask=None):
        q = self.query_encoder(torch.cat([obs, action, goal], dim=-1))
        fused, _ = self.attention(q, keys, values, mask)
        return self.head(fused).squeeze(-1)


class TwinCritic(nn.Module):
    def __init__(self, obs_dim: int, cfg: ModelConfig):
        super().__init__()
        self.q1 = DACritic(obs_dim, cfg)
        self.q2 = DACritic(obs_dim, cfg)

    def encode_demo(self, demo_obs, expert_actions, policy_actions):
        return (
            self.q1.encode_demo(demo_obs, expert_actions, policy_actions),
            self.q2.encode_demo(demo_obs, expert_actions, policy_actions),
        )

    def forward(self, obs, action, goal, memories, mask=None):
        (k1, v1), (k2, v2) = memories
        return (
            self.q1(obs, action, goal, k1, v1, mask),
            self.q2(obs, action, goal, k2, v2, mask),
        )


def polyak_update_params(target_params: list, main_params: list, polyak: float) -> None:
    """target <- polyak * target + (1 - polyak) * main, elementwise.

    Fused multi-tensor ops; a python loop over hundreds of small tensors
    dominates the update step otherwise.
    """
    with torch.no_grad():
        torch._foreach_mul_(target_params, polyak)
        torch._foreach_add_(target_params, main_params, alpha=1.0 - polyak)


def polyak_update(target: nn.Module, main: nn.Module, polyak: float) -> None:
    polyak_update_params(list(target.parameters()), list(main.parameters()), polyak)


def make_target(module: nn.Module) -> nn.Module:
    tgt = copy.deepcopy(module)
    for p in tgt.parameters():
        p.requires_grad_(False)
    return tgt


def save_checkpoint(
    path,
    *,
    kind: str,
    model_cfg: ModelConfig,
    obs_dim: int,
    actor_state: dict,
    normalizer: dict,
    critic_state: dict | None = None,
    target_state: dict | None = None,
    rng_state: dict | None = None,
    extra: dict | None = None,
) -> None:
    """Single self-describing checkpoint container, written atomically."""
    import os
    import tempfile

    payload = {
        "format": CHECKPOINT_FORMAT,
        "kind": kind,
        "model_cfg": model_cfg.to_dict(),
        "obs_dim": int(obs_dim),
        "actor_state": actor_state,
        "critic_state": critic_state,
        "target_state": target_state,
        "normalizer": normalizer,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            torch.save(payload, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {payload.get('format')!r}")
    return payload
