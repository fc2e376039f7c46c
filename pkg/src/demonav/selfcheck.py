"""Independent verification oracles: ray marching, finite-difference gradients,
and trace-back-policy success sweeps.

These deliberately avoid the code paths they check: the ray marcher classifies
sample points against the maze's cell structure instead of intersecting
segments, and the gradient checker compares autograd against central
differences coordinate by coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .demos import generate_demos
from .env import NavEnv, Status, spawn_obstacles
from .geometry import Obstacle, points_in_obstacles
from .maze import MazeMap, generate_maze
from .oracle import OraclePolicy, OracleStuck

__all__ = [
    "boundary_tables",
    "ray_march_distances",
    "fd_gradient_check",
    "GradScene",
    "oracle_success_sweep",
]


# ------------------------------------------------------------------ ray marching
def boundary_tables(maze: MazeMap) -> tuple[np.ndarray, np.ndarray]:
    """Cell-boundary openness recovered by matching wall rows arithmetically.

    Returns (open_v, open_h): open_v[i, j] is the boundary between cells
    (i, j) and (i+1, j); open_h[i, j] between (i, j) and (i, j+1). Only valid
    for generator-produced mazes (walls are exact cell boundaries).
    """
    n = maze.n_cells
    pw = float(maze.path_width)
    m = maze.margin
    open_v = np.ones((max(n - 1, 0), n), dtype=bool)
    open_h = np.ones((n, max(n - 1, 0)), dtype=bool)
    for x1, y1, x2, y2 in maze.walls:
        if abs(x1 - x2) < 1e-9 and abs(abs(y2 - y1) - pw) < 1e-9:  # vertical, cell-sized
            i = int(round((x1 - m) / pw)) - 1
            j = int(round((min(y1, y2) - m) / pw))
            if 0 <= i < n - 1 and 0 <= j < n:
                open_v[i, j] = False
        elif abs(y1 - y2) < 1e-9 and abs(abs(x2 - x1) - pw) < 1e-9:  # horizontal
            j = int(round((y1 - m) / pw)) - 1
            i = int(round((min(x1, x2) - m) / pw))
            if 0 <= j < n - 1 and 0 <= i < n:
                open_h[i, j] = False
    return open_v, open_h


def ray_march_distances(
    maze: MazeMap,
    obstacles: list[Obstacle],
    origins: np.ndarray,
    n_rays: int = 8,
    ray_len: float = 5.0,
    h: float = 1e-3,
) -> np.ndarray:
    """Brute-force marching distances, (P, n_rays).

    Walks each ray in steps of ``h``; a hit is the first step whose point is
    blocked (outside the path region or inside an obstacle) or whose cell
    transition crosses a closed boundary. Reported distance is the midpoint of
    the straddling step, so the absolute error is at most h/2.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    p_total = len(origins)
    angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    k_max = int(np.ceil(ray_len / h))
    ks = np.arange(k_max + 1) * h

    n = maze.n_cells
    pw = float(maze.path_width)
    m = maze.margin
    hi = maze.grid_size - m
    open_v, open_h = boundary_tables(maze)

    def v_open(ia, ja):  # boundary (ia,ja)-(ia+1,ja)
        val = np.zeros(ia.shape, dtype=bool)
        ok = (ia >= 0) & (ia < n - 1) & (ja >= 0) & (ja < n)
        if open_v.size:
            val[ok] = open_v[ia[ok], ja[ok]]
        return val

    def h_open(ia, ja):  # boundary (ia,ja)-(ia,ja+1)
        val = np.zeros(ia.shape, dtype=bool)
        ok = (ia >= 0) & (ia < n) & (ja >= 0) & (ja < n - 1)
        if open_h.size:
            val[ok] = open_h[ia[ok], ja[ok]]
        return val

    out = np.full((p_total, n_rays), ray_len)
    ksf = ks.astype(np.float32)
    chunk = max(1, int(8e6 // (n_rays * (k_max + 1))))
    for lo_i in range(0, p_total, chunk):
        org = origins[lo_i : lo_i + chunk].astype(np.float32)
        x = org[:, None, None, 0] + dirs[None, :, None, 0].astype(np.float32) * ksf
        y = org[:, None, None, 1] + dirs[None, :, None, 1].astype(np.float32) * ksf
        blocked_pt = (x <= m) | (x >= hi) | (y <= m) | (y >= hi)
        if obstacles:
            flat = np.stack([x.ravel(), y.ravel()], axis=1)
            blocked_pt |= points_in_obstacles(flat, obstacles).reshape(x.shape)

        # truncation instead of floor is safe: out-of-bounds points are
        # already blocked, and in-bounds coordinates are positive after -m
        ci = ((x - m) * (1.0 / pw)).astype(np.int32)
        cj = ((y - m) * (1.0 / pw)).astype(np.int32)
        event = blocked_pt[..., 1:].copy()

        changed = (ci[..., 1:] != ci[..., :-1]) | (cj[..., 1:] != cj[..., :-1])
        changed &= ~event  # only resolve transitions between free points
        if changed.any():
            idx = np.nonzero(changed)
            i0, j0 = ci[..., :-1][idx], cj[..., :-1][idx]
            i1, j1 = ci[..., 1:][idx], cj[..., 1:][idx]
            di, dj = i1 - i0, j1 - j0
            opened = np.zeros(len(i0), dtype=bool)
            mv = (np.abs(di) == 1) & (dj == 0)
            opened[mv] = v_open(np.minimum(i0, i1), j0)[mv]
            mh = (di == 0) & (np.abs(dj) == 1)
            opened[mh] = h_open(i0, np.minimum(j0, j1))[mh]
            md = (np.abs(di) == 1) & (np.abs(dj) == 1)
            if md.any():
                # corner crossing: open if either two-boundary route is open
                via_x = v_open(np.minimum(i0, i1), j0) & h_open(i1, np.minimum(j0, j1))
                via_y = h_open(i0, np.minimum(j0, j1)) & v_open(np.minimum(i0, i1), j1)
                opened[md] = (via_x | via_y)[md]
            event[idx] |= ~opened

        any_event = event.any(axis=-1)
        first = np.argmax(event, axis=-1)  # index k of the straddling step
        dist = (first + 0.5) * h
        res = np.where(any_event, np.minimum(dist, ray_len), ray_len)
        out[lo_i : lo_i + chunk] = res
    return out


# ------------------------------------------------------------------ gradients
@dataclass
class GradCheckReport:
    max_rel_err: float
    n_coords: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= 1e-4


def fd_gradient_check(loss_fn, params: list[torch.Tensor], n_coords: int, h: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Central finite differences vs autograd on randomly sampled coordinates.

    Parameters with no influence on the loss must have exactly zero gradient.
    Relative error uses max(|fd|, |autograd|, 1) as denominator so near-zero
    coordinates are judged on absolute error.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise ValueError("loss is not finite")
    loss.backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    sizes = np.array([p.numel() for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(total, size=min(n_coords, total), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    with torch.no_grad():
        for fi in flat_idx:
            pi = int(np.searchsorted(bounds, fi, side="right"))
            local = int(fi - (bounds[pi - 1] if pi else 0))
            p = params[pi]
            flat = p.view(-1)
            old = flat[local].item()
            flat[local] = old + h
            lp = float(loss_fn())
            flat[local] = old - h
            lm = float(loss_fn())
            flat[local] = old
            fd = (lp - lm) / (2.0 * h)
            g = float(grads[pi].view(-1)[local])
            rel = abs(fd - g) / max(abs(fd), abs(g), 1.0)
            worst = max(worst, rel)
    return GradCheckReport(max_rel_err=worst, n_coords=len(flat_idx))


class GradScene:
    """Small double-precision scene exposing the four training losses."""

    def __init__(self, seed: int = 0, obs_dim: int = 10, batch: int = 8, demo_len: int = 6):
        from .nets import ACTION_DIM, DAActor, ModelConfig, TwinCritic, make_target

        torch.manual_seed(seed)
        cfg = ModelConfig(
            d_model=16,
            n_heads=2,
            enc_layers_actor=2,
            attn_layers_actor=2,
            enc_layers_critic=2,
            attn_layers_critic=2,
            hidden_width=32,
            dropout=0.0,
        )
        self.cfg = cfg
        self.actor = DAActor(obs_dim, cfg).double()
        self.critic = TwinCritic(obs_dim, cfg).double()
        self.target_critic = make_target(self.critic).double()
        g = torch.Generator().manual_seed(seed + 1)
        dt = torch.float64
        m = 2
        self.demo_obs = torch.randn(m, demo_len, obs_dim, generator=g, dtype=dt)
        self.demo_act = torch.rand(m, demo_len, ACTION_DIM, generator=g, dtype=dt) * 2 - 1
        self.mask = torch.ones(m, demo_len, dtype=torch.bool)
        self.rows = torch.arange(batch) % m
        self.obs = torch.randn(batch, obs_dim, generator=g, dtype=dt)
        self.next_obs = torch.randn(batch, obs_dim, generator=g, dtype=dt)
        self.act = torch.rand(batch, ACTION_DIM, generator=g, dtype=dt) * 2 - 1
        self.rew = torch.randn(batch, generator=g, dtype=dt)
        self.done = (torch.rand(batch, generator=g, dtype=dt) < 0.25).double()
        self.goal = torch.randn(batch, 2, generator=g, dtype=dt)
        self.bc_target = torch.rand(batch, ACTION_DIM, generator=g, dtype=dt) * 2 - 1
        self.head_w = torch.randn(batch, ACTION_DIM, generator=g, dtype=dt)
        self.alpha = 0.2
        self.gamma = 0.99

        with torch.no_grad():
            t = demo_len
            keys, values = self.actor.encode_demo(self.demo_obs, self.demo_act)
            rep_k = keys.unsqueeze(1).expand(m, t, t, -1).reshape(m * t, t, -1)
            rep_v = values.unsqueeze(1).expand(m, t, t, -1).reshape(m * t, t, -1)
            mean, _, _ = self.actor(self.demo_obs.reshape(m * t, obs_dim), rep_k, rep_v)
            self.a_pi = torch.tanh(mean).reshape(m, t, ACTION_DIM)

            next_a, next_logp, _ = self.actor.sample(
                self.next_obs, keys[self.rows], values[self.rows], generator=torch.Generator().manual_seed(7)
            )
            tmem = self.target_critic.encode_demo(self.demo_obs, self.demo_act, self.a_pi)
            tq1, tq2 = self.target_critic(
                self.next_obs,
                next_a,
                self.goal,
                ((tmem[0][0][self.rows], tmem[0][1][self.rows]), (tmem[1][0][self.rows], tmem[1][1][self.rows])),
            )
            v = torch.min(tq1, tq2) - self.alpha * next_logp
            self.q_target = self.rew + self.gamma * (1.0 - self.done) * v
            cmem = self.critic.encode_demo(self.demo_obs, self.demo_act, self.a_pi)
            self.critic_mem_const = (
                (cmem[0][0][self.rows].clone(), cmem[0][1][self.rows].clone()),
                (cmem[1][0][self.rows].clone(), cmem[1][1][self.rows].clone()),
            )

    def _actor_memory(self):
        keys, values = self.actor.encode_demo(self.demo_obs, self.demo_act)
        return keys[self.rows], values[self.rows]

    def actor_forward_loss(self) -> torch.Tensor:
        keys, values = self._actor_memory()
        mean, log_std, _ = self.actor(self.obs, keys, values)
        return (torch.tanh(mean) * self.head_w).sum() + 0.1 * log_std.sum()

    def critic_loss(self) -> torch.Tensor:
        cmem = self.critic.encode_demo(self.demo_obs, self.demo_act, self.a_pi)
        mems = ((cmem[0][0][self.rows], cmem[0][1][self.rows]), (cmem[1][0][self.rows], cmem[1][1][self.rows]))
        q1, q2 = self.critic(self.obs, self.act, self.goal, mems)
        return 0.5 * ((q1 - self.q_target) ** 2).mean() + 0.5 * ((q2 - self.q_target) ** 2).mean()

    def actor_objective_loss(self) -> torch.Tensor:
        keys, values = self._actor_memory()
        a, logp, _ = self.actor.sample(self.obs, keys, values, generator=torch.Generator().manual_seed(13))
        q1, q2 = self.critic(self.obs, a, self.goal, self.critic_mem_const)
        return (self.alpha * logp - torch.min(q1, q2)).mean()

    def bc_loss(self) -> torch.Tensor:
        keys, values = self._actor_memory()
        mean, _, _ = self.actor(self.obs, keys, values)
        return ((torch.tanh(mean) - self.bc_target) ** 2).mean()


# ------------------------------------------------------------------ oracle sweep
def oracle_success_sweep(
    n_tasks: int,
    with_obstacles: bool,
    seed: int = 0,
    grid_size: int = 24,
    demos_per_map: int = 10,
    max_step: float = 0.8,
) -> dict:
    """Roll the trace-back policy from the map start over generated tasks."""
    results = {"success": 0, "dead": 0, "timeout": 0, "stuck": 0, "episodes": 0}
    n_maps = max(1, n_tasks // demos_per_map)
    made = 0
    for mi in range(n_maps):
        maze = generate_maze(seed + mi, grid_size, 2)
        demos = generate_demos(maze, min(demos_per_map, n_tasks - made), seed=seed + 1000 + mi)
        for k, demo in enumerate(demos):
            obstacles = []
            if with_obstacles:
                obstacles = spawn_obstacles(maze, demo, seed=seed + 7919 * (made + k), p=0.1, max_n=4)
            env = NavEnv(task=demo.task(maze), obstacles=obstacles)
            state = env.reset(evaluation=True)
            policy = OraclePolicy(env, demo, max_step=max_step)
            status = Status.RUNNING
            try:
                while status == Status.RUNNING:
                    outcome = env.step(state, policy.act(state))
                    state, status = outcome.next_state, outcome.status
                results[status.value] += 1
            except OracleStuck:
                results["stuck"] += 1
            results["episodes"] += 1
        made += len(demos)
    results["rate"] = results["success"] / max(results["episodes"], 1)
    return results
