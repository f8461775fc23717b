"""Downstream hierarchical control: a Double-DQN meta-controller picks one
frozen reset skill per macro-step. Also provides the hand-coded solver and
random-skill references used to normalize returns."""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nn
from .envs import WAYPOINTS, MazeEnv, WaypointsEnv
from .sac import ReplayBuffer, SacAgent, Transition


def renormalize_obs(obs, anchor=None):
    """Shift the position coordinates so the skill sees itself at the origin.
    anchor defaults to the observation's own position (idempotent)."""
    obs = np.asarray(obs, dtype=np.float64).copy()
    if anchor is None:
        anchor = obs[:2].copy()
    obs[:2] -= anchor
    return obs


class SkillLibrary:
    """Frozen snapshot of the skill-conditioned reset actor, queried in
    deterministic mode."""

    def __init__(self, reset_agent: SacAgent):
        self.k = reset_agent.skill_dim
        self.obs_dim = reset_agent.obs_dim
        self.actor = reset_agent.actor.copy()
        self.action_dim = reset_agent.action_dim

    def action(self, obs, z):
        from .sac import one_hot
        x = np.concatenate([np.asarray(obs, dtype=np.float64),
                            one_hot(z, self.k)[0]])
        out = nn.mlp_forward(self.actor, x)
        return np.tanh(out[:self.action_dim])

    def params_hash(self):
        h = hashlib.sha256()
        for w, b in zip(self.actor.weights, self.actor.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


def macro_step(env, library, z, horizon):
    """Execute skill z for `horizon` low-level steps; the macro reward is the
    sum of environment rewards over the rollout.

    The skill input is renormalized at every low-level step, so the skill
    always sees itself at the origin and acts as a translation-invariant
    controller; the meta-controller keeps absolute coordinates."""
    if not 0 <= z < library.k:
        raise ValueError("skill out of range")
    meta_obs = env.observe()
    total = 0.0
    for _ in range(horizon):
        skill_obs = renormalize_obs(env.observe()[:library.obs_dim])
        result = env.step(library.action(skill_obs, z))
        total += result.reward
    return Transition(meta_obs, np.array([float(z)]), total, env.observe(),
                      False, z)


def double_dqn_target(agent, reward, next_obs, done, gamma_hi):
    """y = r + g*(1-done)*Q_target(s', argmax_z Q_online(s', z))."""
    q_online = nn.mlp_forward(agent.net, next_obs)
    q_target = nn.mlp_forward(agent.target, next_obs)
    best = np.argmax(q_online, axis=-1)
    if np.ndim(next_obs) == 1:
        return reward + gamma_hi * (1.0 - done) * q_target[best]
    picked = q_target[np.arange(len(best)), best]
    return reward + gamma_hi * (1.0 - done) * picked


@dataclass
class HrlConfig:
    epochs: int = 500
    max_macro_steps: int = 30
    macro_horizon: int = 50
    hidden: tuple = (128,)
    lr: float = 1e-4
    gamma_hi: float = 0.99
    batch_size: int = 256
    buffer_capacity: int = 10_000
    eps_start: float = 1.0
    eps_final: float = 0.0
    exploration_fraction: float = 0.3
    updates_per_epoch: int = 100
    update_freq: int = 1
    target_tau: float = 0.005
    reward_scale: float = 0.1
    eval_every: int = 10


class DqnAgent:
    def __init__(self, obs_dim, k, cfg: HrlConfig, rng):
        self.k = k
        self.cfg = cfg
        self.net = nn.init_mlp([obs_dim, *cfg.hidden, k], rng)
        self.target = self.net.copy()
        self.opt = nn.adam_init(self.net)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim, 1)
        self.updates = 0

    def epsilon(self, epoch):
        cfg = self.cfg
        frac = min(1.0, epoch / max(1, cfg.exploration_fraction * cfg.epochs))
        return cfg.eps_start + frac * (cfg.eps_final - cfg.eps_start)

    def act(self, obs, epsilon, rng):
        if rng is not None and rng.random() < epsilon:
            return int(rng.integers(0, self.k))
        return int(np.argmax(nn.mlp_forward(self.net, obs)))

    def update(self, rng):
        cfg = self.cfg
        if self.buffer.size < cfg.batch_size:
            return float("nan")
        batch = self.buffer.sample(cfg.batch_size, rng)
        y = double_dqn_target(self, batch["reward"], batch["next_obs"],
                              batch["done"], cfg.gamma_hi)
        q = nn.mlp_forward(self.net, batch["obs"])
        acts = batch["action"][:, 0].astype(np.int64)
        b = cfg.batch_size
        err = q[np.arange(b), acts] - y
        upstream = np.zeros_like(q)
        upstream[np.arange(b), acts] = 2.0 * err / b
        grad, _ = nn.mlp_backward(self.net, batch["obs"], upstream)
        nn.adam_step(self.net, self.opt, grad, cfg.lr)
        self.updates += 1
        if self.updates % cfg.update_freq == 0:
            nn.polyak_update(self.target, self.net, cfg.target_tau)
        return float(np.mean(err ** 2))


def _episode_start(env):
    env.set_state((0.0, 0.0) if not isinstance(env, MazeEnv) else env.start)
    env.begin_segment()


def run_macro_episode(env, library, cfg, policy):
    """policy(obs, step_index) -> skill. Returns raw (unscaled) return."""
    _episode_start(env)
    total = 0.0
    transitions = []
    for step in range(cfg.max_macro_steps):
        obs = env.observe()
        z = policy(obs, step)
        t = macro_step(env, library, z, cfg.macro_horizon)
        total += t.reward
        transitions.append(t)
    return total, transitions


def random_reference(env, library, cfg, rng, episodes=5):
    returns = []
    for _ in range(episodes):
        r, _ = run_macro_episode(
            env, library, cfg,
            lambda obs, step: int(rng.integers(0, library.k)))
        returns.append(r)
    return float(np.mean(returns))


def solver_reference(env, cfg):
    """Hand-coded low-level controller with privileged task knowledge; its
    return anchors normalized_return = 1."""
    _episode_start(env)
    total = 0.0
    steps = cfg.max_macro_steps * cfg.macro_horizon
    if isinstance(env, MazeEnv):
        path = _maze_cell_path(env)
        path_idx = 0
        for _ in range(steps):
            while path_idx < len(path) - 1 and \
                    np.linalg.norm(env.pos - path[path_idx]) < 0.6 * env.cell:
                path_idx += 1
            total += env.step(_steer(env, path[path_idx])).reward
    else:
        for _ in range(steps):
            idx = min(env.waypoint_index, len(WAYPOINTS) - 1)
            total += env.step(_steer(env, np.asarray(WAYPOINTS[idx]))).reward
    return total


def _steer(env, target):
    # proportional controller with velocity damping
    err = target - env.pos
    return np.clip(4.0 * err - 6.0 * env.vel, -1.0, 1.0)


def _maze_cell_path(env):
    """BFS over free cells from start to goal; returns cell centers."""
    start = env.cell_of(env.start)
    goal = env.cell_of(env.goal)
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            break
        r, c = cell
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if 0 <= nr < env.n_rows and 0 <= nc < env.n_cols and \
                    env.rows[nr][nc] != "#" and (nr, nc) not in prev:
                prev[(nr, nc)] = cell
                queue.append((nr, nc))
    if goal not in prev:
        raise ValueError("maze has no path from start to goal")
    path = []
    cell = goal
    while cell is not None:
        path.append(env.cell_center(*cell))
        cell = prev[cell]
    return path[::-1]


def train_hierarchy(env, library, cfg: HrlConfig, rng, r_random, r_solver,
                    greedy_env=None):
    """Epsilon-greedy macro-episodes with Double-DQN updates. Returns the
    per-epoch learning curve."""
    agent = DqnAgent(env.spec.obs_dim, library.k, cfg, rng)
    before = library.params_hash()
    span = r_solver - r_random
    curve = []
    for epoch in range(cfg.epochs):
        eps = agent.epsilon(epoch)
        raw, transitions = run_macro_episode(
            env, library, cfg,
            lambda obs, step: agent.act(obs, eps, rng))
        for t in transitions:
            t.reward *= cfg.reward_scale
            agent.buffer.push(t)
        q_loss = float("nan")
        for _ in range(cfg.updates_per_epoch):
            q_loss = agent.update(rng)
        row = {"epoch": epoch, "return": raw,
               "normalized_return": (raw - r_random) / span,
               "epsilon": eps, "q_loss": q_loss,
               "greedy_normalized_return": float("nan")}
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            eval_env = (greedy_env or env).clone()
            greedy, _ = run_macro_episode(
                eval_env, library, cfg,
                lambda obs, step: agent.act(obs, 0.0, None))
            row["greedy_normalized_return"] = (greedy - r_random) / span
        curve.append(row)
    assert library.params_hash() == before, "skill library was mutated"
    return agent, curve
