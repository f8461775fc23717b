import math

import numpy as np
import pytest

from resetgame import envs
from resetgame.envs import (GOAL_THRESHOLD, MazeEnv, PointMassEnv,
                            WaypointsEnv, in_hazard, load_maze_layout,
                            make_env, oracle_reset, task_reward,
                            waypoint_reward)


class TestTaskReward:
    def test_goal_bonus_on_first_hit(self):
        env = PointMassEnv()
        env.set_state((0.05, 0.0), (0.0, 0.0))
        res = env.step([0.0, 0.0])
        d = np.linalg.norm(env.pos)
        assert res.goal_hits == 1
        assert res.reward == pytest.approx(math.exp(-0.5 * d * d) + 1.0)
        # bonus persists but does not re-trigger
        res2 = env.step([0.0, 0.0])
        assert res2.goal_hits == 0
        assert res2.reward > 1.0

    def test_unit_distance(self):
        assert task_reward((1.0, 0.0), 0) == pytest.approx(math.exp(-0.5))

    def test_vanishes_far_away(self):
        assert task_reward((9.0, 9.0), 0) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_decreasing_in_distance(self):
        ds = np.linspace(0.0, 10.0, 50)
        vals = [task_reward((d, 0.0), 0) for d in ds]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(0.0 < v <= 1.0 for v in vals)


class TestDynamics:
    def test_zero_action_zero_velocity_stays(self):
        env = PointMassEnv()
        env.set_state((2.0, -3.0))
        res = env.step([0.0, 0.0])
        assert np.array_equal(env.pos, [2.0, -3.0])
        assert res.reward == pytest.approx(task_reward((2.0, -3.0), 0))

    def test_hand_integration(self):
        env = PointMassEnv()
        env.set_state((0.0, 0.0))
        env.step([1.0, 0.0])
        assert np.allclose(env.vel, [0.1, 0.0])
        assert np.allclose(env.pos, [0.1, 0.0])

    def test_velocity_cap(self):
        env = PointMassEnv()
        for _ in range(200):
            env.step([1.0, 1.0])
        assert np.linalg.norm(env.vel) <= env.spec.v_max + 1e-12

    def test_position_clipped_to_workspace(self):
        env = PointMassEnv()
        env.set_state((9.9, 0.0))
        for _ in range(50):
            env.step([1.0, 0.0])
        assert env.pos[0] <= env.spec.half_width

    def test_deterministic_bit_exact(self):
        a = PointMassEnv()
        b = PointMassEnv()
        for e in (a, b):
            e.set_state((1.0, 2.0), (0.1, -0.2))
        for _ in range(20):
            ra = a.step([0.3, -0.7])
            rb = b.step([0.3, -0.7])
            assert np.array_equal(ra.obs, rb.obs)
            assert ra.reward == rb.reward

    def test_nan_action_rejected(self):
        env = PointMassEnv()
        with pytest.raises(ValueError):
            env.step([np.nan, 0.0])


class TestHazard:
    def test_penalty_applied_once_and_terminates(self):
        env = PointMassEnv()
        env.set_state((9.0, 9.6))  # inside the top-right strip after any step
        res = env.step([0.0, 0.0])
        assert res.terminated
        base = task_reward(env.pos, 0)
        assert res.reward == pytest.approx(base + envs.FLIP_PENALTY)
        assert np.array_equal(env.vel, [0.0, 0.0])  # continue, no teleport

    def test_hazard_geometry(self):
        assert in_hazard((9.0, 9.7))
        assert in_hazard((-9.0, -9.7))
        assert not in_hazard((0.0, 0.0))
        assert not in_hazard((4.0, 4.0))


class TestWaypoints:
    def test_reward_at_first_waypoint(self):
        env = WaypointsEnv()
        env.set_state((0.0, 4.95))
        res = env.step([0.0, 0.0])
        d = np.linalg.norm(env.pos - np.array([0.0, 5.0]))
        assert res.goal_hits == 1
        assert res.reward == pytest.approx(math.exp(-0.5 * d * d) + 1.0)
        assert env.waypoint_index == 1

    def test_far_from_waypoint(self):
        assert waypoint_reward((5.0, 5.0), 0, 0) == \
            pytest.approx(math.exp(-12.5), abs=1e-9)

    def test_all_waypoints_flags_solved(self):
        env = WaypointsEnv()
        for wp in envs.WAYPOINTS:
            env.set_state(np.asarray(wp) + [0.0, 0.01])
            env.step([0.0, 0.0])
        assert env.solved
        assert env.waypoint_index == 3

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            waypoint_reward((0.0, 0.0), 7, 0)

    def test_observation_contains_waypoint_onehot(self):
        env = WaypointsEnv()
        obs = env.observe()
        assert obs.shape == (7,)
        assert np.array_equal(obs[4:], [1.0, 0.0, 0.0])


class TestMaze:
    def test_layout_loads(self):
        rows = load_maze_layout()
        assert len({len(r) for r in rows}) == 1
        assert sum(r.count("G") for r in rows) == 1

    def test_goal_and_start_corners(self):
        env = MazeEnv()
        assert env.goal[0] > 0 and env.goal[1] > 0        # top right
        assert env.start[0] < 0 and env.start[1] < 0      # bottom left
        assert np.array_equal(env.pos, env.start)

    def test_reward_zero_at_goal(self):
        env = MazeEnv()
        env.set_state(env.goal)
        res = env.step([0.0, 0.0])
        assert res.reward == pytest.approx(0.0, abs=1e-12)

    def test_negative_distance_reward(self):
        env = MazeEnv()
        res = env.step([0.0, 0.0])
        assert res.reward == pytest.approx(
            -np.linalg.norm(env.pos - env.goal))

    def test_wall_blocks_axis(self):
        env = MazeEnv()
        # drive straight left from the start cell into the border wall
        for _ in range(100):
            env.step([-1.0, 0.0])
        assert not env.is_wall(env.pos)
        r, c = env.cell_of(env.pos)
        assert env.rows[r][c] != "#"

    def test_walls_impermeable_random_walk(self):
        env = MazeEnv()
        rng = np.random.default_rng(0)
        for _ in range(2000):
            env.step(rng.uniform(-1, 1, size=2))
            assert not env.is_wall(env.pos)

    def test_no_hazard_termination(self):
        env = MazeEnv()
        env.set_state((9.0, 9.6))
        assert not env.step([0.0, 0.0]).terminated

    def test_malformed_layouts_rejected(self, tmp_path):
        def load_rows(rows):
            path = tmp_path / "layout.txt"
            path.write_text("\n".join(rows))
            return load_maze_layout(str(path))

        with pytest.raises(ValueError, match="rectangular"):
            load_rows(["###", "#G"])
        with pytest.raises(ValueError, match="'G'"):
            load_rows(["###", "#.#", "###"])


class TestOracleReset:
    def test_guarded_in_reset_free_context(self):
        env = PointMassEnv(resets_allowed=False)
        with pytest.raises(RuntimeError):
            oracle_reset(env, np.random.default_rng(0))
        assert env.oracle_reset_count == 0

    def test_ring_radii(self):
        env = PointMassEnv(resets_allowed=True)
        rng = np.random.default_rng(1)
        radii = []
        for _ in range(10_000):
            oracle_reset(env, rng)
            radii.append(np.linalg.norm(env.pos))
        radii = np.asarray(radii)
        assert radii.min() >= 3.0 and radii.max() <= 5.0
        assert env.oracle_reset_count == 10_000

    def test_seeded_determinism(self):
        samples = []
        for _ in range(2):
            env = PointMassEnv(resets_allowed=True)
            rng = np.random.default_rng(7)
            samples.append([oracle_reset(env, rng).copy()
                            for _ in range(5)])
        assert np.array_equal(samples[0], samples[1])


def test_make_env_names():
    for name in ("pointmass", "waypoints", "maze"):
        assert make_env(name).name == name
    with pytest.raises(ValueError):
        make_env("mujoco")


def test_clone_is_independent():
    env = PointMassEnv()
    env.set_state((1.0, 1.0), (0.2, 0.0))
    twin = env.clone()
    env.step([1.0, 1.0])
    assert np.array_equal(twin.pos, [1.0, 1.0])
    assert np.array_equal(twin.vel, [0.2, 0.0])
