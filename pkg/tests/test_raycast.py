import numpy as np
import pytest

from demonav.demos import generate_demos
from demonav.env import ray_cast, spawn_obstacles
from demonav.geometry import Obstacle, points_in_obstacles
from demonav.maze import MazeMap, generate_maze
from demonav.rng import stream
from demonav.selfcheck import ray_march_distances


def _room(side=40.0):
    walls = np.array(
        [
            [0.0, 0.0, side, 0.0],
            [side, 0.0, side, side],
            [side, side, 0.0, side],
            [0.0, side, 0.0, 0.0],
        ]
    )
    return MazeMap(
        grid_size=int(side) + 2, path_width=2, walls=walls, start=np.array([side / 2, side / 2]),
        seed=0, map_id="room",
    )


def test_axis_aligned_wall_east():
    m = _room()
    pos = np.array([20.0, 20.0])
    with_wall = MazeMap(
        grid_size=m.grid_size, path_width=2,
        walls=np.vstack([m.walls, [[23.0, 10.0, 23.0, 30.0]]]),
        start=m.start, seed=0, map_id="room+wall",
    )
    d = ray_cast(with_wall, [], pos, ray_len=5.0)
    assert d[0] == pytest.approx(3.0, abs=1e-12)  # ray 0 points east


def test_clamp_when_nothing_in_range():
    m = _room()
    d = ray_cast(m, [], np.array([20.0, 20.0]), ray_len=5.0)
    assert np.all(d == 5.0)


def test_diagonal_ray_hits_at_sqrt2_scaled():
    m = _room()
    with_wall = MazeMap(
        grid_size=m.grid_size, path_width=2,
        walls=np.vstack([m.walls, [[22.0, 10.0, 22.0, 30.0]]]),
        start=m.start, seed=0, map_id="room+wall",
    )
    d = ray_cast(with_wall, [], np.array([20.0, 20.0]), ray_len=5.0)
    assert d[1] == pytest.approx(2.0 * np.sqrt(2.0), abs=1e-9)  # ray 1 at 45 degrees


def test_origin_inside_geometry_rejected():
    m = _room()
    ob = Obstacle(center=(20.0, 20.0), length=1.2, width=1.35, orientation=0.3)
    with pytest.raises(ValueError):
        ray_cast(m, [ob], np.array([20.0, 20.0]))
    with pytest.raises(ValueError):
        ray_cast(m, [], np.array([100.0, 100.0]))  # outside the room


def test_distances_clamped_and_nonnegative(maze24):
    rng = stream(0, "raycast-fuzz")
    for _ in range(50):
        p = rng.uniform(1.05, 22.95, size=2)
        d = ray_cast(maze24, [], p, ray_len=5.0)
        assert np.all(d >= 0.0) and np.all(d <= 5.0)


def test_agrees_with_marching_oracle_sample(maze24):
    demos = generate_demos(maze24, 2, seed=5)
    obstacles = spawn_obstacles(maze24, demos[0], seed=4, p=0.4, max_n=4)
    rng = stream(1, "raycast-oracle")
    poses = []
    while len(poses) < 250:
        p = rng.uniform(1.05, 22.95, size=2)
        if not points_in_obstacles(p, obstacles)[0]:
            poses.append(p)
    poses = np.asarray(poses)
    march = ray_march_distances(maze24, obstacles, poses, ray_len=5.0, h=1e-3)
    for i, p in enumerate(poses):
        analytic = ray_cast(maze24, obstacles, p, ray_len=5.0)
        assert np.abs(analytic - march[i]).max() <= 2e-3
