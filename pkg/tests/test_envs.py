import math

import numpy as np
import pytest

from mppo.envs import MazeEnv, SparseCartPoleSwingupEnv, VisitationLog
from mppo.envs.maze import MOVES, default_layout, parse_layout
from mppo.errors import InputError, StateError

UP, DOWN, LEFT, RIGHT = range(4)


def test_shipped_layout_shape():
    walls, start, goal = parse_layout(default_layout())
    assert walls.shape == (21, 21)
    assert start == (20, 0) and goal == (20, 20)
    assert walls[4:, 10].all()


def test_reset_observes_start():
    env = MazeEnv()
    np.testing.assert_array_equal(env.reset(), [1.0, 0.0])


def test_goal_adjacent_step_pays_and_terminates():
    env = MazeEnv()
    env.reset()
    env.pos = (20, 19)
    obs, r, term, tout = env.step(RIGHT)
    assert (r, term, tout) == (1.0, True, False)
    np.testing.assert_array_equal(obs, [1.0, 1.0])
    with pytest.raises(StateError):
        env.step(LEFT)


def test_walls_and_boundary_block():
    env = MazeEnv()
    obs = env.reset()
    assert env.step(LEFT)[:2] == (pytest.approx(obs), 0.0)
    env.pos = (15, 9)
    obs, r, _, _ = env.step(RIGHT)
    assert env.pos == (15, 9) and r == 0.0


def test_timeout_at_cap():
    env = MazeEnv()
    env.reset()
    for t in range(999):
        assert env.step(LEFT)[3] is False
    _, r, term, tout = env.step(LEFT)
    assert (r, term, tout) == (0.0, False, True)


def test_bad_action():
    env = MazeEnv()
    env.reset()
    with pytest.raises(InputError):
        env.step(4)


@pytest.mark.parametrize("text", ["S.G", "\n".join(["." * 21] * 21), "\n".join(["S" + "x" * 19 + "G"] + ["." * 21] * 20)])
def test_bad_layouts(text):
    with pytest.raises(InputError):
        parse_layout(text)


def test_maze_determinism_and_encoding():
    env = MazeEnv()
    free = np.argwhere(~env.walls)
    obs = {tuple(env.observe(tuple(p))) for p in free}
    assert len(obs) == len(free)
    for p in free[::7]:
        for a in range(4):
            assert env.move(tuple(p), a) == env.move(tuple(p), a)
            q = env.move(tuple(p), a)
            assert not env.walls[q]


def test_visitation_accounting():
    log = VisitationLog()
    log.add((3, 4))
    assert log.total == 1
    env = MazeEnv()
    env.reset()
    log = VisitationLog()
    rng = np.random.default_rng(0)
    done = False
    while not done:
        _, _, term, tout = env.step(int(rng.integers(4)))
        log.add(env.visit_cell())
        done = term or tout
    assert log.total == env.t
    assert sum(n for _, _, n in log.rows()) == log.total


def expected_occupancy(env, steps):
    """Exact expected visit counts of a uniform random walk, by propagating the cell distribution."""
    dist = np.zeros(env.walls.shape)
    dist[env.start] = 1.0
    total = np.zeros_like(dist)
    for _ in range(steps):
        nxt = np.zeros_like(dist)
        for r, c in np.argwhere(dist > 0):
            if (r, c) == env.goal:
                continue
            for a in range(4):
                nxt[env.move((r, c), a)] += dist[r, c] / 4
        dist = nxt
        total += dist
    return total


def test_random_walk_visits_match_markov_chain():
    env = MazeEnv(max_episode_steps=200)
    rng = np.random.default_rng(5)
    log = VisitationLog()
    episodes = 300
    for _ in range(episodes):
        env.reset()
        done = False
        while not done:
            _, _, term, tout = env.step(int(rng.integers(4)))
            log.add(env.visit_cell())
            done = term or tout
    emp = log.counts / episodes
    exact = expected_occupancy(env, 200)
    # densest cells lie next to S, and the empirical map tracks the exact one
    assert np.unravel_index(np.argmax(exact), exact.shape)[1] <= 3
    assert np.abs(emp - exact).sum() / exact.sum() < 0.1


def test_swingup_reset():
    env = SparseCartPoleSwingupEnv(reset_noise=0.0)
    obs = env.reset(np.random.default_rng(0))
    assert obs[2] == -1.0 and env.state[2] == math.pi
    noisy = SparseCartPoleSwingupEnv()
    a = noisy.reset(np.random.default_rng(3))
    b = noisy.reset(np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(noisy.state - [0, 0, math.pi, 0]) <= 0.01)


def test_swingup_reward_rule():
    env = SparseCartPoleSwingupEnv()
    env.set_state([0.0, 0.0, 0.0, 0.0])
    assert env.step(np.zeros(1))[1] == 1.0
    assert env.reward_at(math.acos(0.8) + 1e-6) == 0.0
    assert env.reward_at(math.acos(0.8) - 1e-6) == 1.0


def test_swingup_timeout_only():
    env = SparseCartPoleSwingupEnv()
    env.reset(np.random.default_rng(0))
    flags = [env.step(np.array([1.0]))[2:] for _ in range(500)]
    assert not any(t for t, _ in flags)
    assert [o for _, o in flags].index(True) == 499
    with pytest.raises(StateError):
        env.step(np.zeros(1))


def test_swingup_zero_action_bounded():
    env = SparseCartPoleSwingupEnv(max_episode_steps=10 ** 5, reset_noise=0.0)
    env.reset()
    env.set_state([0.0, 0.0, math.pi - 0.5, 0.0])
    peak = 0.0
    for _ in range(10 ** 5):
        env.step(np.zeros(1))
        peak = max(peak, float(np.max(np.abs(env.state))))
    assert peak < 20.0
