"""Expert demonstrations: path planning, synthesis, dataset splits, JSONL I/O.

Demonstrations are synthesized obstacle-free by walking the unique corridor
path between start and goal in bounded steps, recording (state, action) pairs
that replay to Success in the environment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import RAY_LEN_FAR, NavEnv, Status, TaskParams
from .geometry import segment_hits_any
from .maze import MazeMap
from .rng import stream

__all__ = [
    "Demonstration",
    "DatasetSplit",
    "DemoTooLongError",
    "PlanningError",
    "plan_path",
    "synthesize_demo",
    "sample_goal",
    "generate_demos",
    "split_dataset",
    "save_demos",
    "load_demos",
    "verify_demo",
]

DEFAULT_MAX_STEP = 0.8
MIN_GOAL_CELL_DIST = 4


class PlanningError(RuntimeError):
    pass


class DemoTooLongError(RuntimeError):
    pass


@dataclass
class Demonstration:
    demo_id: str
    map_id: str
    goal: np.ndarray
    goal_radius: float
    positions: np.ndarray  # (T+1, 2)
    views: np.ndarray  # (T+1, n_rays)
    actions: np.ndarray  # (T+1, 2); final row is the zero stop action
    _obs_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.positions)

    def observations(self, include_coords: bool) -> np.ndarray:
        key = bool(include_coords)
        if key not in self._obs_cache:
            if include_coords:
                self._obs_cache[key] = np.hstack([self.positions, self.views])
            else:
                self._obs_cache[key] = np.array(self.views, dtype=float)
        return self._obs_cache[key]

    def to_dict(self) -> dict:
        return {
            "demo_id": self.demo_id,
            "map_id": self.map_id,
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "goal_radius": float(self.goal_radius),
            "pairs": [
                {
                    "s": {"pos": [float(p[0]), float(p[1])], "view": [float(v) for v in view]},
                    "a": [float(a[0]), float(a[1])],
                }
                for p, view, a in zip(self.positions, self.views, self.actions)
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "Demonstration":
        pairs = d["pairs"]
        return Demonstration(
            demo_id=str(d["demo_id"]),
            map_id=str(d["map_id"]),
            goal=np.asarray(d["goal"], dtype=float),
            goal_radius=float(d["goal_radius"]),
            positions=np.asarray([p["s"]["pos"] for p in pairs], dtype=float),
            views=np.asarray([p["s"]["view"] for p in pairs], dtype=float),
            actions=np.asarray([p["a"] for p in pairs], dtype=float),
        )

    def task(self, maze: MazeMap, **kwargs) -> TaskParams:
        return TaskParams(map=maze, goal=self.goal, goal_radius=self.goal_radius, **kwargs)


@dataclass
class DatasetSplit:
    train: list[Demonstration]
    eval_new_demo: list[Demonstration]
    eval_new_map: list[Demonstration]

    def to_manifest(self) -> dict:
        return {
            "train": [d.demo_id for d in self.train],
            "eval_new_demo": [d.demo_id for d in self.eval_new_demo],
            "eval_new_map": [d.demo_id for d in self.eval_new_map],
        }


def plan_path(maze: MazeMap, start, goal) -> list[np.ndarray]:
    """Collision-free waypoint polyline from start to goal.

    Straight line when the goal is in direct line of sight, otherwise the
    (unique, on tree mazes) corridor path through cell centers.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if not maze.in_bounds(start) or not maze.in_bounds(goal):
        raise PlanningError("start and goal must be inside the path region")
    if np.allclose(start, goal):
        return [start]
    if not segment_hits_any(start, goal, maze.walls):
        return [start, goal]
    try:
        cells = maze.cell_path(maze.cell_of(start), maze.cell_of(goal))
    except KeyError as e:
        raise PlanningError(str(e)) from e
    waypoints = [start]
    for cell in cells:
        center = maze.cell_center(cell)
        if np.linalg.norm(center - waypoints[-1]) > 1e-9:
            waypoints.append(center)
    if np.linalg.norm(goal - waypoints[-1]) > 1e-9:
        waypoints.append(goal)
    return waypoints


def synthesize_demo(
    maze: MazeMap,
    path: list[np.ndarray],
    demo_id: str,
    goal_radius: float = 0.5,
    max_step: float = DEFAULT_MAX_STEP,
    horizon: int = 50,
    ray_len: float = RAY_LEN_FAR,
) -> Demonstration:
    """Walk the polyline in steps of at most ``max_step``; truncate at the first
    position within ``goal_radius`` of the goal and append the zero stop action."""
    if max_step <= 0 or max_step > 1.0:
        raise ValueError("max_step must be in (0, 1]")
    goal = np.asarray(path[-1], dtype=float)
    points = [np.asarray(path[0], dtype=float)]
    for a, b in zip(path[:-1], path[1:]):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        seg = b - a
        dist = float(np.linalg.norm(seg))
        if dist < 1e-12:
            continue
        n_steps = int(np.ceil(dist / max_step))
        for k in range(1, n_steps + 1):
            points.append(a + seg * (k / n_steps))
    positions = np.asarray(points)

    within = np.linalg.norm(positions - goal, axis=1) <= goal_radius
    stop = int(np.argmax(within)) if within.any() else len(positions) - 1
    positions = positions[: stop + 1]
    if len(positions) > horizon:
        raise DemoTooLongError(f"demo needs {len(positions)} steps, horizon is {horizon}")

    actions = np.zeros_like(positions)
    actions[:-1] = positions[1:] - positions[:-1]
    views = np.stack([_view(maze, p, ray_len) for p in positions])
    return Demonstration(
        demo_id=demo_id,
        map_id=maze.map_id,
        goal=goal,
        goal_radius=goal_radius,
        positions=positions,
        views=views,
        actions=actions,
    )


def _view(maze: MazeMap, pos: np.ndarray, ray_len: float) -> np.ndarray:
    from .env import ray_cast

    return ray_cast(maze, [], pos, ray_len=ray_len)


def sample_goal(
    maze: MazeMap,
    rng: np.random.Generator,
    min_cell_dist: int = MIN_GOAL_CELL_DIST,
    margin_frac: float = 0.2,
) -> np.ndarray:
    """Uniform goal over path cells at graph distance >= min_cell_dist from start.

    The returned point is uniform inside the chosen cell interior (with a small
    margin), so repeated draws give distinct tasks.
    """
    start_cell = maze.cell_of(maze.start)
    dist = maze.graph_distances(start_cell)
    eligible = sorted(c for c, d in dist.items() if d >= min_cell_dist)
    if not eligible:
        raise PlanningError(f"no cells at graph distance >= {min_cell_dist}")
    cell = eligible[int(rng.integers(len(eligible)))]
    center = maze.cell_center(cell)
    half = maze.path_width * (0.5 - margin_frac)
    return center + rng.uniform(-half, half, size=2)


def generate_demos(
    maze: MazeMap,
    n: int,
    seed: int,
    goal_radius: float = 0.5,
    max_step: float = DEFAULT_MAX_STEP,
    horizon: int = 50,
    ray_len: float = RAY_LEN_FAR,
    min_cell_dist: int = MIN_GOAL_CELL_DIST,
) -> list[Demonstration]:
    demos = []
    attempt = 0
    while len(demos) < n:
        rng = stream(seed, "goals", maze.seed, attempt)
        attempt += 1
        if attempt > 50 * n:
            raise PlanningError("could not synthesize enough demos within the horizon")
        goal = sample_goal(maze, rng, min_cell_dist=min_cell_dist)
        path = plan_path(maze, maze.start, goal)
        demo_id = f"{maze.map_id}-d{len(demos):04d}"
        try:
            demo = synthesize_demo(
                maze, path, demo_id, goal_radius=goal_radius, max_step=max_step, horizon=horizon, ray_len=ray_len
            )
        except DemoTooLongError:
            continue
        demos.append(demo)
    return demos


def split_dataset(
    demos: list[Demonstration],
    train_fraction: float,
    held_out_maps: list[str] | None = None,
    seed: int = 0,
) -> DatasetSplit:
    """Per-map deterministic split; held-out maps go entirely to eval_new_map."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must be in (0,1), got {train_fraction}")
    held = set(held_out_maps or [])
    by_map: dict[str, list[Demonstration]] = {}
    for d in demos:
        by_map.setdefault(d.map_id, []).append(d)

    train, new_demo, new_map = [], [], []
    for map_id in sorted(by_map):
        group = sorted(by_map[map_id], key=lambda d: d.demo_id)
        if map_id in held:
            new_map.extend(group)
            continue
        order = stream(seed, "split", _stable_id(map_id)).permutation(len(group))
        n_train = int(np.floor(train_fraction * len(group)))
        for rank, idx in enumerate(order):
            (train if rank < n_train else new_demo).append(group[idx])
    return DatasetSplit(train=train, eval_new_demo=new_demo, eval_new_map=new_map)


def _stable_id(map_id: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(map_id.encode()).digest()[:8], "little")


def save_demos(demos: list[Demonstration], path) -> None:
    with open(path, "w") as f:
        for d in demos:
            f.write(json.dumps(d.to_dict()) + "\n")


def load_demos(path) -> list[Demonstration]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(Demonstration.from_dict(json.loads(line)))
    return out


def verify_demo(maze: MazeMap, demo: Demonstration, horizon: int = 50, ray_len: float = RAY_LEN_FAR, atol: float = 1e-6):
    """Closed-loop replay check: actions reproduce the stored states and reach Success.

    Returns (ok, message).
    """
    env = NavEnv(task=demo.task(maze, horizon=horizon), obstacles=[], ray_len=ray_len)
    state = None
    from .env import EnvState

    state = EnvState(position=demo.positions[0].copy(), local_view=demo.views[0].copy(), t=0)
    if len(demo) == 1:
        ok = np.linalg.norm(state.position - demo.goal) <= demo.goal_radius
        return ok, "single-state demo" if ok else "single-state demo not at goal"
    for i in range(len(demo) - 1):
        outcome = env.step(state, demo.actions[i])
        state = outcome.next_state
        if np.linalg.norm(state.position - demo.positions[i + 1]) > atol:
            return False, f"state {i + 1} diverged"
        if outcome.status == Status.DEAD:
            return False, f"collision at step {i}"
        if outcome.status == Status.SUCCESS:
            return (i == len(demo) - 2), f"early success at step {i}" if i != len(demo) - 2 else "ok"
    return False, "replay ended without success"
