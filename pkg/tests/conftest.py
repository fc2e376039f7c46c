import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def maze24():
    from demonav.maze import generate_maze

    return generate_maze(7, 24, 2)


@pytest.fixture(scope="session")
def maze12():
    from demonav.maze import generate_maze

    return generate_maze(3, 12, 2)


@pytest.fixture(scope="session")
def demos24(maze24):
    from demonav.demos import generate_demos

    return generate_demos(maze24, 8, seed=11)


@pytest.fixture(scope="session")
def open_room():
    """Hand-built 4-cell open room (no interior walls), path_width 2."""
    from demonav.maze import MazeMap

    walls = np.array(
        [[1.0, 1.0, 5.0, 1.0], [5.0, 1.0, 5.0, 5.0], [5.0, 5.0, 1.0, 5.0], [1.0, 5.0, 1.0, 1.0]]
    )
    return MazeMap(
        grid_size=6,
        path_width=2,
        walls=walls,
        start=np.array([3.0, 3.0]),
        seed=0,
        map_id="open-room",
    )


@pytest.fixture(scope="session")
def big_room():
    """Huge open room so short rollouts can never hit a wall."""
    from demonav.maze import MazeMap

    walls = np.array(
        [
            [1.0, 1.0, 199.0, 1.0],
            [199.0, 1.0, 199.0, 199.0],
            [199.0, 199.0, 1.0, 199.0],
            [1.0, 199.0, 1.0, 1.0],
        ]
    )
    return MazeMap(
        grid_size=200,
        path_width=2,
        walls=walls,
        start=np.array([100.0, 100.0]),
        seed=0,
        map_id="big-room",
    )
