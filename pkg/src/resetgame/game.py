"""The alternating reset/forward training loop.

Each iteration: sample a skill, let the skill-conditioned reset policy
perturb the environment, let the forward policy attempt the task from
wherever that left it, then fold the negated forward return into the reset
trajectory's final reward. Both policies train off-policy at their own
learning rates, with the reset (leader) side deliberately slower.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import envs as env_mod
from .sac import ReplayBuffer, SacAgent, Transition, set_two_timescale
from .skills import (Discriminator, LabeledObsBuffer, RndPair, SkillPrior,
                     pseudo_reward, sample_skill)

VARIANTS = ("lsr", "diayn_only", "single_adversary", "no_diversity",
            "oracle_reset", "r3l_perturb")


@dataclass
class GameConfig:
    variant: str = "lsr"
    lam: float = 0.5
    t_reset: int = 200
    t_forward: int = 200
    gamma: float = 0.99
    k: int = 10
    lr_forward: float = 1e-3
    lr_reset: float = 2e-4
    r_skill_scale: float = 2.0
    updates_per_phase: int = 200
    iterations: int = 7000
    rnd_enabled: bool = True
    alpha: float = 0.1
    autotune_alpha: bool = False
    hidden: tuple = (64, 64)
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    disc_steps: int = 5
    disc_batch_size: int = 256
    disc_lr: float = 3e-4
    disc_final_state_only: bool = False
    disc_xy_only: bool = False
    omit_entropy: bool = False
    rnd_embed_dim: int = 64
    rnd_lr: float = 3e-4
    rnd_scale: float = 1.0
    dispersion_window: int = 50

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lam < 0:
            raise ValueError("game.lambda must be >= 0")
        if self.t_reset < 1 or self.t_forward < 1:
            raise ValueError("horizons must be >= 1")
        if self.k < 1:
            raise ValueError("game.k must be >= 1")
        if self.variant == "single_adversary" and self.k != 1:
            raise ValueError("single_adversary requires k = 1")
        if self.variant == "r3l_perturb":
            if self.k != 1:
                raise ValueError("r3l_perturb requires k = 1")
            if not self.rnd_enabled:
                raise ValueError("r3l_perturb requires the novelty bonus")
        if self.variant == "diayn_only" and self.lam != 0.0:
            raise ValueError("diayn_only requires lambda = 0")
        if self.variant == "no_diversity" and self.k < 2:
            raise ValueError("no_diversity requires k >= 2")
        return self

    @property
    def uses_discriminator(self):
        return self.variant in ("lsr", "diayn_only", "single_adversary")

    @property
    def uses_reset_agent(self):
        return self.variant != "oracle_reset"

    @property
    def uses_game_reward(self):
        # diayn_only keeps the exact lsr code path (its lambda is pinned to
        # 0, which makes the coupling a bit-exact no-op)
        return self.variant in ("lsr", "diayn_only", "single_adversary",
                                "no_diversity")


@dataclass
class PhaseTrajectory:
    phase: str                      # "reset" | "forward"
    skill: int | None
    transitions: list = field(default_factory=list)
    terminated: bool = False

    def __len__(self):
        return len(self.transitions)

    def discounted_return(self, gamma):
        return float(sum(t.reward * gamma ** i
                         for i, t in enumerate(self.transitions)))

    def reward_sum(self):
        return float(sum(t.reward for t in self.transitions))

    def final_position(self):
        return self.transitions[-1].next_obs[:2]


def reset_state_dispersion(final_states):
    """Mean pairwise l2 distance between reset-phase final positions."""
    pts = np.asarray(final_states, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("dispersion needs at least 2 states")
    diffs = pts[:, None, :] - pts[None, :, :]
    dists = np.sqrt(np.sum(diffs ** 2, axis=-1))
    n = len(pts)
    return float(dists.sum() / (n * (n - 1)))


def couple_game_reward(reset_traj, forward_return, lam):
    """Add -lambda * (forward discounted return) to the last reset step.
    The last step stays a truncation (done=False), not a terminal."""
    if not reset_traj.transitions:
        raise ValueError("cannot couple an empty reset trajectory")
    last = reset_traj.transitions[-1]
    last.reward = last.reward + (-lam * forward_return)
    return reset_traj


class ResetGameTrainer:
    """Owns the environment, both SAC agents, the skill classifier and the
    novelty nets, and runs game iterations. Strictly single-threaded."""

    def __init__(self, env, cfg: GameConfig, streams):
        cfg.validate()
        self.env = env
        self.cfg = cfg
        self.streams = streams
        init = streams["init"]
        obs_dim = env.spec.obs_dim
        act_dim = env.spec.action_dim

        self.prior = SkillPrior(cfg.k)
        self.forward_agent = SacAgent(
            obs_dim, act_dim, skill_dim=0, hidden=cfg.hidden,
            alpha=cfg.alpha, gamma=cfg.gamma, autotune_alpha=cfg.autotune_alpha,
            rng=init)
        self.reset_agent = SacAgent(
            obs_dim, act_dim, skill_dim=cfg.k, hidden=cfg.hidden,
            alpha=cfg.alpha, gamma=cfg.gamma, autotune_alpha=cfg.autotune_alpha,
            rng=init)
        set_two_timescale(self.forward_agent, self.reset_agent,
                          cfg.lr_forward, cfg.lr_reset)
        self.disc = Discriminator(obs_dim, cfg.k, hidden=cfg.hidden,
                                  lr=cfg.disc_lr,
                                  batch_size=cfg.disc_batch_size,
                                  xy_only=cfg.disc_xy_only, rng=init)
        self.rnd = RndPair(obs_dim, embed_dim=cfg.rnd_embed_dim,
                           hidden=cfg.hidden, lr=cfg.rnd_lr, rng=init)

        self.forward_buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim,
                                           act_dim)
        self.reset_buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim,
                                         act_dim)
        self.disc_buffer = LabeledObsBuffer(cfg.buffer_capacity, obs_dim)
        self.final_positions = deque(maxlen=cfg.dispersion_window)
        self.iteration = 0

    # -- phases --------------------------------------------------------

    def _reset_step_reward(self, logpi, next_obs, z):
        cfg = self.cfg
        if cfg.variant == "r3l_perturb" or cfg.variant == "no_diversity":
            r = 0.0
        else:
            r = pseudo_reward(self.disc, self.prior, logpi, next_obs, z,
                              scale=cfg.r_skill_scale,
                              include_entropy=not cfg.omit_entropy)
        if cfg.rnd_enabled:
            r += cfg.rnd_scale * self.rnd.bonus(next_obs)
        return r

    def run_reset_phase(self, z):
        cfg = self.cfg
        traj = PhaseTrajectory("reset", z)
        rng = self.streams["actor"]
        obs = self.env.observe()
        for _ in range(cfg.t_reset):
            action, logpi = self.reset_agent.sample_action(obs, z, rng)
            result = self.env.step(action)
            reward = self._reset_step_reward(logpi, result.obs, z)
            if result.terminated:
                reward += env_mod.FLIP_PENALTY
            traj.transitions.append(Transition(
                obs, action, reward, result.obs, result.terminated, z))
            obs = result.obs
            if result.terminated:
                traj.terminated = True
                break
        return traj

    def run_forward_phase(self):
        cfg = self.cfg
        traj = PhaseTrajectory("forward", None)
        rng = self.streams["actor"]
        self.env.begin_segment()
        obs = self.env.observe()
        for _ in range(cfg.t_forward):
            action, _ = self.forward_agent.sample_action(obs, None, rng)
            result = self.env.step(action)
            reward = result.reward
            if cfg.rnd_enabled:
                reward += cfg.rnd_scale * self.rnd.bonus(result.obs)
            traj.transitions.append(Transition(
                obs, action, reward, result.obs, result.terminated, None))
            obs = result.obs
            if result.terminated:
                traj.terminated = True
                break
        return traj

    # -- one full game iteration ----------------------------------------

    def game_iteration(self):
        cfg = self.cfg
        z = sample_skill(self.prior, self.streams["skill"])

        reset_traj = None
        forward_traj = None
        forward_return = float("nan")
        reset_reward_sum = float("nan")

        if cfg.variant == "oracle_reset":
            env_mod.oracle_reset(self.env, self.streams["env"])
        else:
            reset_traj = self.run_reset_phase(z)
            reset_reward_sum = reset_traj.reward_sum()
            self.final_positions.append(reset_traj.final_position().copy())

        if reset_traj is None or not reset_traj.terminated:
            forward_traj = self.run_forward_phase()
            forward_return = forward_traj.discounted_return(cfg.gamma)
            if reset_traj is not None and cfg.uses_game_reward:
                couple_game_reward(reset_traj, forward_return, cfg.lam)

        if reset_traj is not None:
            for t in reset_traj.transitions:
                self.reset_buffer.push(t)
            if cfg.uses_discriminator:
                if cfg.disc_final_state_only:
                    self.disc_buffer.push(reset_traj.transitions[-1].next_obs,
                                          z)
                else:
                    for t in reset_traj.transitions:
                        self.disc_buffer.push(t.next_obs, z)
        if forward_traj is not None:
            for t in forward_traj.transitions:
                self.forward_buffer.push(t)

        replay = self.streams["replay"]
        for _ in range(cfg.updates_per_phase):
            self.forward_agent.update(self.forward_buffer, cfg.batch_size,
                                      replay)
        disc_loss = float("nan")
        if cfg.uses_reset_agent:
            for _ in range(cfg.updates_per_phase):
                self.reset_agent.update(self.reset_buffer, cfg.batch_size,
                                        replay)
            if cfg.uses_discriminator and \
                    self.disc_buffer.size >= cfg.disc_batch_size:
                for _ in range(cfg.disc_steps):
                    obs_b, lab_b = self.disc_buffer.sample(
                        cfg.disc_batch_size, replay)
                    disc_loss = self.disc.update(obs_b, lab_b)
        if cfg.rnd_enabled:
            fresh = [t.next_obs for t in
                     (reset_traj.transitions if reset_traj else []) +
                     (forward_traj.transitions if forward_traj else [])]
            if fresh:
                self.rnd.update(np.asarray(fresh))

        self.iteration += 1
        row = {
            "iteration": self.iteration,
            "variant": cfg.variant,
            "skill": z,
            "reset_return": (reset_traj.reward_sum() if reset_traj
                             else float("nan")),
            "reset_step_reward_sum": reset_reward_sum,
            "forward_return": forward_return,
            "disc_loss": disc_loss,
            "dispersion": (reset_state_dispersion(self.final_positions)
                           if len(self.final_positions) >= 2
                           else float("nan")),
        }
        return row

    def dispersion(self):
        if len(self.final_positions) < 2:
            return float("nan")
        return reset_state_dispersion(self.final_positions)
