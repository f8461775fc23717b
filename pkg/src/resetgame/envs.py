"""Reset-free continuous-control environments.

A damped double-integrator point mass replaces articulated physics: the
forward task is "drive to the origin", with a goal bonus and a harsh penalty
strip standing in for catastrophic states. Waypoints and MediumMaze are the
downstream tasks for the hierarchical controller. None of the environments
ever reset themselves; restoring the initial-state distribution is a
privileged operation (oracle_reset) reserved for baselines and evaluation.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

GOAL_THRESHOLD = 0.5
FLIP_PENALTY = -300.0

# thin strips near two workspace corners; entering one terminates the
# current phase (the "catastrophic state" analog)
HAZARD_BOXES = (
    (8.0, 10.0, 9.4, 10.0),     # (x0, x1, y0, y1) top-right edge
    (-10.0, -8.0, -10.0, -9.4),  # bottom-left edge
)

WAYPOINTS = ((0.0, 5.0), (5.0, 5.0), (5.0, 0.0))


@dataclass
class EnvSpec:
    obs_dim: int
    action_dim: int = 2
    half_width: float = 10.0
    dt: float = 0.1
    v_max: float = 1.0
    drag: float = 0.9


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool
    goal_hits: int = 0


def task_reward(position, goals_completed):
    """exp(-d^2/2) toward the origin plus the running goal count."""
    d = float(np.linalg.norm(position))
    return float(np.exp(-0.5 * d * d)) + goals_completed


def waypoint_reward(position, waypoint_index, completed):
    if not 0 <= waypoint_index < len(WAYPOINTS):
        raise ValueError(f"waypoint index {waypoint_index} out of range")
    d = float(np.linalg.norm(np.asarray(position) - WAYPOINTS[waypoint_index]))
    return float(np.exp(-0.5 * d * d)) + completed


def in_hazard(position):
    x, y = position
    return any(x0 <= x <= x1 and y0 <= y <= y1
               for x0, x1, y0, y1 in HAZARD_BOXES)


class PointMassEnv:
    """Point mass in a [-hw, hw]^2 box; task reward pulls toward the origin.

    The environment is a plain value type: clone() gives an independent copy,
    and stepping is deterministic given (state, action).
    """

    name = "pointmass"

    def __init__(self, resets_allowed=False):
        self.spec = EnvSpec(obs_dim=4)
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goals_completed = 0
        self.resets_allowed = resets_allowed
        self.oracle_reset_count = 0

    # -- state access ------------------------------------------------------

    def observe(self):
        return np.concatenate([self.pos, self.vel])

    def set_state(self, pos, vel=(0.0, 0.0)):
        """Direct state injection, used by evaluation only."""
        self.pos = np.asarray(pos, dtype=np.float64).copy()
        self.vel = np.asarray(vel, dtype=np.float64).copy()

    def begin_segment(self):
        """Start a new reward segment (phase boundary): the goal bonus can be
        earned again."""
        self.goals_completed = 0

    def clone(self):
        env = self.__class__.__new__(self.__class__)
        env.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v)
                             for k, v in self.__dict__.items()})
        return env

    # -- dynamics ----------------------------------------------------------

    def _integrate(self, action):
        action = np.asarray(action, dtype=np.float64)
        if not np.all(np.isfinite(action)):
            raise ValueError("non-finite action")
        action = np.clip(action, -1.0, 1.0)
        s = self.spec
        vel = s.drag * self.vel + s.dt * action
        speed = np.linalg.norm(vel)
        if speed > s.v_max:
            vel = vel * (s.v_max / speed)
        self.vel = vel
        self.pos = np.clip(self.pos + vel, -s.half_width, s.half_width)

    def step(self, action):
        self._integrate(action)
        hits = 0
        if self.goals_completed == 0 and \
                np.linalg.norm(self.pos) < GOAL_THRESHOLD:
            self.goals_completed = 1
            hits = 1
        reward = task_reward(self.pos, self.goals_completed)
        terminated = in_hazard(self.pos)
        if terminated:
            reward += FLIP_PENALTY
            # reset-free even after catastrophe: continue from the same
            # position with velocity zeroed
            self.vel = np.zeros(2)
        return StepResult(self.observe(), reward, terminated, hits)


class WaypointsEnv(PointMassEnv):
    """Visit (0,5), (5,5), (5,0) in order; reward is the origin task shifted
    to the active waypoint. No hazards."""

    name = "waypoints"

    def __init__(self, resets_allowed=False):
        super().__init__(resets_allowed)
        self.spec = EnvSpec(obs_dim=4 + len(WAYPOINTS))
        self.waypoint_index = 0
        self.solved = False

    def observe(self):
        onehot = np.zeros(len(WAYPOINTS))
        onehot[min(self.waypoint_index, len(WAYPOINTS) - 1)] = 1.0
        return np.concatenate([self.pos, self.vel, onehot])

    def begin_segment(self):
        self.waypoint_index = 0
        self.solved = False

    def step(self, action):
        self._integrate(action)
        hits = 0
        idx = min(self.waypoint_index, len(WAYPOINTS) - 1)
        d = np.linalg.norm(self.pos - WAYPOINTS[idx])
        if not self.solved and d < GOAL_THRESHOLD:
            hits = 1
            self.waypoint_index += 1
            if self.waypoint_index == len(WAYPOINTS):
                self.solved = True
        # reward against the waypoint that was active this step; the bonus
        # counts a hit on the step it happens
        reward = waypoint_reward(self.pos, idx, self.waypoint_index)
        return StepResult(self.observe(), reward, False, hits)


def load_maze_layout(path=None):
    """Plain-text grid, one char per cell: '#' wall, 'G' goal, 'S' start.
    Must be rectangular with exactly one 'G'."""
    if path is None:
        text = (importlib.resources.files("resetgame.data")
                / "medium_maze.txt").read_text()
    else:
        with open(path) as f:
            text = f.read()
    rows = [line for line in text.splitlines() if line]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("maze layout is not rectangular")
    if sum(r.count("G") for r in rows) != 1:
        raise ValueError("maze layout must contain exactly one 'G'")
    return rows


class MazeEnv(PointMassEnv):
    """Point mass in a walled grid maze; reward is the negative l2 distance
    to the goal cell center. Collisions resolve per axis: a move into a wall
    leaves that position component unchanged."""

    name = "maze"

    def __init__(self, resets_allowed=False, layout=None):
        super().__init__(resets_allowed)
        self.rows = layout if layout is not None else load_maze_layout()
        self.n_rows = len(self.rows)
        self.n_cols = len(self.rows[0])
        self.cell = 2.0 * self.spec.half_width / max(self.n_rows, self.n_cols)
        for r, row in enumerate(self.rows):
            for c, ch in enumerate(row):
                if ch == "G":
                    self.goal = self.cell_center(r, c)
                elif ch == "S":
                    self.start = self.cell_center(r, c)
        self.pos = self.start.copy()

    def cell_center(self, row, col):
        hw = self.spec.half_width
        return np.array([-hw + (col + 0.5) * self.cell,
                         hw - (row + 0.5) * self.cell])

    def cell_of(self, pos):
        hw = self.spec.half_width
        col = int(np.clip((pos[0] + hw) / self.cell, 0, self.n_cols - 1))
        row = int(np.clip((hw - pos[1]) / self.cell, 0, self.n_rows - 1))
        return row, col

    def is_wall(self, pos):
        r, c = self.cell_of(pos)
        return self.rows[r][c] == "#"

    def step(self, action):
        action = np.asarray(action, dtype=np.float64)
        if not np.all(np.isfinite(action)):
            raise ValueError("non-finite action")
        action = np.clip(action, -1.0, 1.0)
        s = self.spec
        vel = s.drag * self.vel + s.dt * action
        speed = np.linalg.norm(vel)
        if speed > s.v_max:
            vel = vel * (s.v_max / speed)
        # axis-separated clipping against wall cells
        pos = self.pos.copy()
        nx = np.clip(pos[0] + vel[0], -s.half_width, s.half_width)
        if self.is_wall((nx, pos[1])):
            vel[0] = 0.0
        else:
            pos[0] = nx
        ny = np.clip(pos[1] + vel[1], -s.half_width, s.half_width)
        if self.is_wall((pos[0], ny)):
            vel[1] = 0.0
        else:
            pos[1] = ny
        self.pos = pos
        self.vel = vel
        reward = -float(np.linalg.norm(self.pos - self.goal))
        return StepResult(self.observe(), reward, False, 0)


def oracle_reset(env, rng):
    """Privileged restore to the initial-state distribution: uniform ring of
    radius [3, 5] around the origin. Forbidden during reset-free training."""
    if not env.resets_allowed:
        raise RuntimeError(
            "oracle_reset called from a reset-free training context")
    env.oracle_reset_count += 1
    radius = rng.uniform(3.0, 5.0)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    env.set_state(radius * np.array([np.cos(angle), np.sin(angle)]))
    env.begin_segment()
    return env.observe()


def make_env(name, resets_allowed=False):
    envs = {"pointmass": PointMassEnv, "waypoints": WaypointsEnv,
            "maze": MazeEnv}
    if name not in envs:
        raise ValueError(f"unknown environment {name!r}")
    return envs[name](resets_allowed=resets_allowed)
