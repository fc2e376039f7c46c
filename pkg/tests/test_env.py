import numpy as np
import pytest

from demonav.demos import generate_demos, synthesize_demo
from demonav.env import EnvState, NavEnv, Status, spawn_obstacles
from demonav.maze import generate_maze
from demonav.rng import stream


@pytest.fixture(scope="module")
def simple_task(maze24, demos24):
    demo = demos24[0]
    env = NavEnv(task=demo.task(maze24), obstacles=[], ray_len=5.0)
    return env, demo


def test_wall_crossing_kills(simple_task):
    env, demo = simple_task
    state = env.reset(evaluation=True)
    # walk straight into the nearest wall: from a cell center any unit move
    # crosses the boundary if that direction is closed; find one such direction
    for a in ([1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]):
        probe = state.position + np.asarray(a) * 1.0
        if env.segment_blocked(state.position, probe):
            out = env.step(state, np.asarray(a))
            assert out.status == Status.DEAD
            assert out.ending_reward == -env.c
            return
    pytest.skip("start cell has all four neighbors open")


def test_success_within_goal_radius(simple_task):
    env, demo = simple_task
    near_goal = demo.positions[-2]
    state = EnvState(position=near_goal.copy(), local_view=env.local_view(near_goal), t=0)
    out = env.step(state, demo.actions[len(demo) - 2])
    assert out.status == Status.SUCCESS
    assert out.ending_reward == env.c


def test_timeout_at_horizon(big_room):
    from demonav.demos import plan_path

    goal = big_room.start + np.array([80.0, 0.0])
    demo = synthesize_demo(big_room, [big_room.start, goal], "bigroom-demo", horizon=200)
    env = NavEnv(task=demo.task(big_room, horizon=50), obstacles=[], ray_len=5.0)
    state = env.reset(evaluation=True)
    status = Status.RUNNING
    steps = 0
    while status == Status.RUNNING:
        out = env.step(state, np.array([0.0, 0.5]))  # wander, never reach goal or wall
        state, status = out.next_state, out.status
        steps += 1
    assert status == Status.TIMEOUT
    assert steps == 50
    assert out.ending_reward == 0.0


def test_action_bounds_validated(simple_task):
    env, _ = simple_task
    state = env.reset(evaluation=True)
    with pytest.raises(ValueError):
        env.step(state, np.array([1.5, 0.0]))
    with pytest.raises(ValueError):
        env.step(state, np.array([np.nan, 0.0]))


def test_no_tunneling_through_thin_walls(maze24):
    # a unit action whose endpoint lands in the next corridor still dies,
    # because the continuous motion segment crosses the zero-thickness wall
    demo = generate_demos(maze24, 1, seed=3)[0]
    env = NavEnv(task=demo.task(maze24), obstacles=[], ray_len=5.0)
    rng = stream(5, "tunnel")
    checked = 0
    for _ in range(300):
        p = rng.uniform(1.2, 22.8, size=2)
        if not env.position_free(p):
            continue
        a = rng.uniform(-1, 1, size=2)
        q = p + a
        state = EnvState(position=p, local_view=np.zeros(8), t=0)
        blocked = env.segment_blocked(p, q)
        out = env.step(state, a)
        if blocked:
            assert out.status == Status.DEAD
            checked += 1
    assert checked > 10


def test_step_deterministic(simple_task):
    env, demo = simple_task
    state = env.reset(evaluation=True)
    a = np.array([0.3, -0.2])
    o1 = env.step(state, a)
    o2 = env.step(state, a)
    assert np.array_equal(o1.next_state.position, o2.next_state.position)
    assert np.array_equal(o1.next_state.local_view, o2.next_state.local_view)
    assert o1.status == o2.status


def test_reset_evaluation_mode(simple_task):
    env, demo = simple_task
    state = env.reset(demo=demo, evaluation=True)
    assert np.array_equal(state.position, env.task.map.start)
    assert state.t == 0


def test_reset_zero_disturbance_lands_on_demo_state(simple_task):
    env, demo = simple_task
    state = env.reset(
        demo=demo,
        start_index_rng=stream(0, "idx"),
        disturbance_rng=stream(0, "noise"),
        disturbance_scale=0.0,
    )
    dists = np.linalg.norm(demo.positions - state.position, axis=1)
    assert dists.min() < 1e-12


def test_reset_disturbance_std_matches_scale(maze24, demos24):
    # Monte-Carlo estimate of the per-axis std of the applied noise; rejection
    # inside walls barely truncates it at scale 0.1 in a width-2 corridor
    demo = demos24[0]
    env = NavEnv(task=demo.task(maze24), obstacles=[], ray_len=5.0)
    idx_rng = stream(1, "idx")
    noise_rng = stream(1, "noise")
    offsets = []
    for _ in range(4000):
        state = env.reset(demo=demo, start_index_rng=idx_rng, disturbance_rng=noise_rng)
        d = np.linalg.norm(demo.positions - state.position, axis=1)
        offsets.append(state.position - demo.positions[int(np.argmin(d))])
    std = np.asarray(offsets).std(axis=0)
    assert np.all(np.abs(std - 0.1) < 0.01)


def test_same_seed_same_reset(maze24, demos24):
    demo = demos24[0]
    env = NavEnv(task=demo.task(maze24), obstacles=[], ray_len=5.0)
    s1 = env.reset(demo=demo, start_index_rng=stream(3, "i"), disturbance_rng=stream(3, "n"))
    s2 = env.reset(demo=demo, start_index_rng=stream(3, "i"), disturbance_rng=stream(3, "n"))
    assert np.array_equal(s1.position, s2.position)


# ---------------------------------------------------------------- obstacles
def test_spawn_zero_probability(maze24, demos24):
    assert spawn_obstacles(maze24, demos24[0], seed=0, p=0.0, max_n=4) == []


def test_spawn_cap_binds_at_first_steps(maze24, demos24):
    demo = demos24[2]
    obs = spawn_obstacles(maze24, demo, seed=0, p=1.0, max_n=4)
    assert len(obs) == 4
    # with p=1 the cap binds at the first four eligible steps
    for k, ob in enumerate(obs):
        assert np.linalg.norm(np.asarray(ob.center) - demo.positions[k + 1]) < 1e-9


def test_spawn_deterministic(maze24, demos24):
    a = spawn_obstacles(maze24, demos24[1], seed=9, p=0.3, max_n=4)
    b = spawn_obstacles(maze24, demos24[1], seed=9, p=0.3, max_n=4)
    assert [o.to_dict() for o in a] == [o.to_dict() for o in b]


def test_spawn_dimensions_and_overlap(maze24, demos24):
    for k in range(len(demos24)):
        for ob in spawn_obstacles(maze24, demos24[k], seed=k, p=0.5, max_n=4):
            assert 1.1 <= ob.length <= 1.3
            assert ob.width == pytest.approx(1.35)
            dmin = np.linalg.norm(demos24[k].positions - np.asarray(ob.center), axis=1).min()
            assert dmin < 1e-9  # centered on a demo state, so it straddles the path


def test_spawn_count_matches_capped_binomial(maze24, demos24):
    from math import comb

    demo = demos24[3]
    goal = demo.goal
    eligible = sum(
        1 for i in range(1, len(demo)) if np.linalg.norm(demo.positions[i] - goal) > 1.5
    )
    p, cap, n_trials = 0.1, 4, 10_000
    counts = np.array(
        [len(spawn_obstacles(maze24, demo, seed=s, p=p, max_n=cap)) for s in range(n_trials)]
    )
    # exact capped-binomial moments by enumeration
    pmf = [comb(eligible, k) * p**k * (1 - p) ** (eligible - k) for k in range(eligible + 1)]
    capped = np.minimum(np.arange(eligible + 1), cap)
    mean = float(np.sum(np.asarray(pmf) * capped))
    var = float(np.sum(np.asarray(pmf) * (capped - mean) ** 2))
    assert abs(counts.mean() - mean) <= 3.0 * np.sqrt(var / n_trials)
