"""Continuous maze navigation environment.

The agent is a point moving by bounded (dx, dy) displacements. An episode ends
Dead (reward -c) when the motion segment touches a wall or obstacle, Success
(reward +c) when the end position is within ``goal_radius`` of the goal, and
Timeout (reward 0) when the horizon is exhausted. Observations are the agent
position (optional, per task setting) plus 8 ray-cast distances.

Collision detection uses the continuous motion segment, not just endpoints,
so unit-length actions cannot tunnel through thin walls.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Obstacle,
    points_in_obstacles,
    ray_hit_distance,
    segment_hits_any,
    segments_of_obstacles,
)
from .maze import MazeMap
from .rng import stream

__all__ = [
    "TaskParams",
    "EnvState",
    "Action",
    "Status",
    "StepOutcome",
    "NavEnv",
    "ray_cast",
    "spawn_obstacles",
    "RAY_COUNT",
    "RAY_LEN_NEAR",
    "RAY_LEN_FAR",
]

RAY_COUNT = 8
RAY_LEN_NEAR = 1.5  # simplest setting: coordinates given, no obstacles
RAY_LEN_FAR = 5.0
# obstacles never spawn this close to the goal, so success stays reachable
GOAL_CLEARANCE = 1.5

# start disturbance resampling attempts before falling back
_RESET_RETRIES = 16


class Status(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    DEAD = "dead"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class TaskParams:
    map: MazeMap
    goal: np.ndarray
    goal_radius: float = 0.5
    horizon: int = 50
    obstacle_prob: float = 0.1
    max_obstacles: int = 4

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.map.in_bounds(self.goal):
            raise ValueError("goal must lie inside the path region")


@dataclass(frozen=True)
class EnvState:
    position: np.ndarray
    local_view: np.ndarray
    t: int


Action = np.ndarray  # (dx, dy) with each component in [-1, 1]


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    ending_reward: float
    status: Status


def ray_cast(
    maze: MazeMap,
    obstacles: list[Obstacle],
    pos: np.ndarray,
    n_rays: int = RAY_COUNT,
    ray_len: float = RAY_LEN_FAR,
) -> np.ndarray:
    """Distances to the nearest geometry along evenly spaced rays.

    Ray k points at angle k * 2pi / n_rays from east, counterclockwise.
    Distances clamp at ``ray_len``. ``pos`` must be in free space.
    """
    pos = np.asarray(pos, dtype=float)
    if not _position_free(maze, obstacles, pos):
        raise ValueError(f"ray_cast origin {pos} is inside geometry")
    segs = np.vstack([maze.walls, segments_of_obstacles(obstacles)])
    out = np.empty(n_rays)
    for k in range(n_rays):
        ang = 2.0 * np.pi * k / n_rays
        d = ray_hit_distance(pos, np.array([np.cos(ang), np.sin(ang)]), segs)
        out[k] = min(d, ray_len)
    return out


def _position_free(maze: MazeMap, obstacles: list[Obstacle], pos: np.ndarray) -> bool:
    if not maze.in_bounds(pos):
        return False
    if obstacles and points_in_obstacles(pos, obstacles)[0]:
        return False
    return True


def spawn_obstacles(
    maze: MazeMap,
    demo,
    seed: int,
    p: float,
    max_n: int,
) -> list[Obstacle]:
    """Per-episode rectangular obstacles straddling the demonstration path.

    Each interior demo step triggers a spawn with probability ``p`` (in step
    order, until ``max_n``). The obstacle is centered on that step's state and
    aligned with the local path direction. The start state and states within
    GOAL_CLEARANCE of the goal never spawn obstacles, which keeps the episode
    winnable.
    """
    rng = stream(seed, "obstacles")
    positions = demo.positions
    goal = np.asarray(demo.goal, dtype=float)
    out: list[Obstacle] = []
    for i in range(1, len(positions)):
        if len(out) >= max_n:
            break
        if np.linalg.norm(positions[i] - goal) <= GOAL_CLEARANCE:
            continue
        if rng.random() >= p:
            continue
        direction = positions[i] - positions[i - 1]
        norm = np.linalg.norm(direction)
        if norm < 1e-9:
            direction = np.array([1.0, 0.0])
            norm = 1.0
        angle = float(np.arctan2(direction[1], direction[0]))
        length = float(rng.uniform(1.1, 1.3))
        out.append(
            Obstacle(center=(float(positions[i][0]), float(positions[i][1])), length=length, width=1.35, orientation=angle)
        )
    return out


@dataclass
class NavEnv:
    """One navigation task instance; step/reset are pure in (state, geometry)."""

    task: TaskParams
    obstacles: list[Obstacle] = field(default_factory=list)
    ray_len: float = RAY_LEN_FAR
    include_coords: bool = True
    c: float = 1.0

    def __post_init__(self):
        self._segments = np.vstack([self.task.map.walls, segments_of_obstacles(self.obstacles)])

    # -- observation --------------------------------------------------------
    def local_view(self, pos: np.ndarray) -> np.ndarray:
        return ray_cast(self.task.map, self.obstacles, pos, RAY_COUNT, self.ray_len)

    def observation(self, state: EnvState) -> np.ndarray:
        if self.include_coords:
            return np.concatenate([state.position, state.local_view])
        return np.array(state.local_view, dtype=float)

    @property
    def obs_dim(self) -> int:
        return RAY_COUNT + (2 if self.include_coords else 0)

    # -- reset ---------------------------------------------------------------
    def reset(
        self,
        demo=None,
        start_index_rng: np.random.Generator | None = None,
        disturbance_rng: np.random.Generator | None = None,
        evaluation: bool = False,
        disturbance_scale: float = 0.1,
    ) -> EnvState:
        maze = self.task.map
        if evaluation or demo is None:
            pos = np.array(maze.start, dtype=float)
        else:
            idx = int(start_index_rng.integers(len(demo.positions)))
            base = demo.positions[idx]
            pos = None
            for _ in range(_RESET_RETRIES):
                cand = base + disturbance_scale * disturbance_rng.standard_normal(2)
                if _position_free(maze, self.obstacles, cand):
                    pos = cand
                    break
            if pos is None:
                # fall back to the undisturbed demo state; an obstacle sitting
                # exactly on it pushes us to the map start instead
                pos = base if _position_free(maze, self.obstacles, base) else np.array(maze.start, dtype=float)
        return EnvState(position=pos, local_view=self.local_view(pos), t=0)

    # -- step ----------------------------------------------------------------
    def step(self, state: EnvState, action: Action) -> StepOutcome:
        a = np.asarray(action, dtype=float)
        if a.shape != (2,) or not np.all(np.isfinite(a)) or np.any(np.abs(a) > 1.0 + 1e-9):
            raise ValueError(f"action must be finite and within [-1,1]^2, got {a}")
        pos = state.position
        candidate = pos + a
        t_next = state.t + 1

        if segment_hits_any(pos, candidate, self._segments):
            view = state.local_view  # agent died mid-motion; keep last valid view
            return StepOutcome(EnvState(candidate, view, t_next), -self.c, Status.DEAD)

        if np.linalg.norm(candidate - self.task.goal) <= self.task.goal_radius:
            return StepOutcome(
                EnvState(candidate, self.local_view(candidate), t_next), self.c, Status.SUCCESS
            )

        next_state = EnvState(candidate, self.local_view(candidate), t_next)
        if t_next >= self.task.horizon:
            return StepOutcome(next_state, 0.0, Status.TIMEOUT)
        return StepOutcome(next_state, 0.0, Status.RUNNING)

    # -- queries used by the oracle and tests --------------------------------
    def position_free(self, pos: np.ndarray) -> bool:
        return _position_free(self.task.map, self.obstacles, np.asarray(pos, dtype=float))

    def segment_blocked(self, p: np.ndarray, q: np.ndarray) -> bool:
        return segment_hits_any(np.asarray(p, float), np.asarray(q, float), self._segments)
