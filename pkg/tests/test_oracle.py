import numpy as np
import pytest

from demonav.demos import synthesize_demo
from demonav.env import EnvState, NavEnv, Status, spawn_obstacles
from demonav.maze import generate_maze
from demonav.oracle import OraclePolicy
from demonav.selfcheck import oracle_success_sweep


def test_on_path_action_matches_demo_step(big_room):
    # straight corridor case: from demo state i the furthest visible target is
    # dead ahead, so the clipped step equals the stored demo action
    goal = big_room.start + np.array([8.0, 0.0])
    demo = synthesize_demo(big_room, [big_room.start, goal], "straight", max_step=0.8)
    env = NavEnv(task=demo.task(big_room), obstacles=[])
    policy = OraclePolicy(env, demo, max_step=0.8)
    i = 2
    state = EnvState(position=demo.positions[i].copy(), local_view=demo.views[i], t=i)
    action = policy.act(state)
    assert np.allclose(action, demo.actions[i], atol=1e-9)


def test_zero_action_at_goal(big_room):
    goal = big_room.start + np.array([6.0, 0.0])
    demo = synthesize_demo(big_room, [big_room.start, goal], "terminal", max_step=0.8)
    env = NavEnv(task=demo.task(big_room), obstacles=[])
    policy = OraclePolicy(env, demo, max_step=0.8)
    state = EnvState(position=demo.positions[-1].copy(), local_view=demo.views[-1], t=0)
    assert np.array_equal(policy.act(state), np.zeros(2))


def test_obstacle_free_success_sample():
    sweep = oracle_success_sweep(n_tasks=20, with_obstacles=False, seed=42)
    assert sweep["rate"] == 1.0


def test_obstacle_success_sample():
    sweep = oracle_success_sweep(n_tasks=30, with_obstacles=True, seed=7)
    assert sweep["rate"] >= 0.95
    assert sweep["episodes"] == 30


def test_detour_around_blocking_obstacle(maze24, demos24):
    # force an obstacle onto the demo path and confirm the oracle still finishes
    demo = max(demos24, key=len)
    obstacles = spawn_obstacles(maze24, demo, seed=12, p=1.0, max_n=2)
    assert obstacles
    env = NavEnv(task=demo.task(maze24), obstacles=obstacles)
    state = env.reset(evaluation=True)
    policy = OraclePolicy(env, demo)
    status = Status.RUNNING
    while status == Status.RUNNING:
        out = env.step(state, policy.act(state))
        state, status = out.next_state, out.status
    assert status == Status.SUCCESS
