"""Soft actor-critic on the numpy MLP core.

One instance serves as the forward task policy, a second (skill-conditioned,
via a one-hot appended to the observation) as the perturbing reset policy.
Twin soft critics with Polyak-averaged targets, tanh-squashed Gaussian actor,
fixed or auto-tuned temperature.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    skill: int | None = None


class ReplayBuffer:
    """Fixed-capacity ring buffer over flat transition arrays."""

    def __init__(self, capacity, obs_dim, action_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.skill = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.size = 0

    def push(self, t: Transition):
        i = self.cursor
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = float(t.done)
        self.skill[i] = -1 if t.skill is None else t.skill
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.integers(0, self.size, size=batch_size)
        return {"obs": self.obs[idx], "action": self.action[idx],
                "reward": self.reward[idx], "next_obs": self.next_obs[idx],
                "done": self.done[idx], "skill": self.skill[idx]}


def one_hot(indices, k):
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.zeros((len(indices), k))
    out[np.arange(len(indices)), indices] = 1.0
    return out


class SacAgent:
    def __init__(self, obs_dim, action_dim, skill_dim=0, hidden=(64, 64),
                 alpha=0.1, gamma=0.99, tau=0.005, lr_actor=3e-4,
                 lr_critic=3e-4, autotune_alpha=False, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.skill_dim = skill_dim
        self.gamma = gamma
        self.tau = tau
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.autotune_alpha = autotune_alpha
        self.log_alpha = float(np.log(alpha))
        self.target_entropy = -float(action_dim)

        in_dim = obs_dim + skill_dim
        sizes = [in_dim, *hidden, 2 * action_dim]
        self.actor = nn.init_mlp(sizes, rng, out_scale=1e-2)
        q_sizes = [in_dim + action_dim, *hidden, 1]
        self.q1 = nn.init_mlp(q_sizes, rng)
        self.q2 = nn.init_mlp(q_sizes, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.actor_opt = nn.adam_init(self.actor)
        self.q1_opt = nn.adam_init(self.q1)
        self.q2_opt = nn.adam_init(self.q2)

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha))

    # -- policy --------------------------------------------------------

    def _augment(self, obs, skill):
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        obs2 = obs[None, :] if single else obs
        if self.skill_dim > 0:
            if skill is None:
                raise ValueError("skill-conditioned agent needs a skill")
            z = np.asarray(skill, dtype=np.int64)
            z = np.full(len(obs2), int(z)) if z.ndim == 0 else z
            obs2 = np.concatenate([obs2, one_hot(z, self.skill_dim)], axis=1)
        elif skill is not None:
            raise ValueError("unconditioned agent given a skill")
        if obs2.shape[1] != self.obs_dim + self.skill_dim:
            raise ValueError(
                f"obs dim {obs2.shape[1]} != {self.obs_dim + self.skill_dim}")
        return obs2, single

    def _policy_head(self, x):
        out = nn.mlp_forward(self.actor, x)
        a = self.action_dim
        mean, log_std_raw = out[..., :a], out[..., a:]
        log_std = np.clip(log_std_raw, nn.LOG_STD_MIN, nn.LOG_STD_MAX)
        return mean, log_std, log_std_raw

    def sample_action(self, obs, skill=None, rng=None, deterministic=False):
        """Returns (action in [-1,1]^d, log-prob of that action)."""
        x, single = self._augment(obs, skill)
        mean, log_std, _ = self._policy_head(x)
        if deterministic:
            u = mean
        else:
            u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        action = np.tanh(u)
        logp = nn.gaussian_tanh_logprob(mean, log_std, u)
        if single:
            return action[0], float(logp[0])
        return action, logp

    # -- learning --------------------------------------------------------

    def critic_targets(self, batch, rng):
        """Soft Bellman backup: y = r + g*(1-done)*(min Qbar(s',a') - a*logpi)."""
        next_obs, _ = self._augment(batch["next_obs"],
                                    batch["skill"] if self.skill_dim else None)
        mean, log_std, _ = self._policy_head(next_obs)
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        a2 = np.tanh(u)
        logp = nn.gaussian_tanh_logprob(mean, log_std, u)
        qin = np.concatenate([next_obs, a2], axis=1)
        q1 = nn.mlp_forward(self.q1_target, qin)[:, 0]
        q2 = nn.mlp_forward(self.q2_target, qin)[:, 0]
        soft_v = np.minimum(q1, q2) - self.alpha * logp
        return batch["reward"] + self.gamma * (1.0 - batch["done"]) * soft_v

    def update(self, buffer, batch_size, rng):
        """One critic step, one actor step, one Polyak step."""
        if buffer.size < batch_size:
            return {"status": "skipped", "reason": "buffer underfull"}
        batch = buffer.sample(batch_size, rng)
        obs, _ = self._augment(batch["obs"],
                               batch["skill"] if self.skill_dim else None)
        b = batch_size

        # critics: MSE toward the frozen soft target
        y = self.critic_targets(batch, rng)
        qin = np.concatenate([obs, batch["action"]], axis=1)
        q_losses = []
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            q = nn.mlp_forward(net, qin)[:, 0]
            err = q - y
            q_losses.append(float(np.mean(err ** 2)))
            grad, _ = nn.mlp_backward(net, qin, (2.0 * err / b)[:, None])
            nn.adam_step(net, opt, grad, self.lr_critic)

        # actor: maximize min-Q(s, a) - alpha*logpi via the reparam trick
        mean, log_std, log_std_raw = self._policy_head(obs)
        xi = rng.standard_normal(mean.shape)
        std = np.exp(log_std)
        u = mean + std * xi
        a = np.tanh(u)
        sech2 = 1.0 - a * a
        qin_pi = np.concatenate([obs, a], axis=1)
        ones = np.ones((b, 1))
        q1v = nn.mlp_forward(self.q1, qin_pi)[:, 0]
        q2v = nn.mlp_forward(self.q2, qin_pi)[:, 0]
        _, dx1 = nn.mlp_backward(self.q1, qin_pi, ones)
        _, dx2 = nn.mlp_backward(self.q2, qin_pi, ones)
        use1 = (q1v <= q2v)[:, None]
        dq_da = np.where(use1, dx1[:, -self.action_dim:],
                         dx2[:, -self.action_dim:])

        logp = nn.gaussian_tanh_logprob(mean, log_std, u)
        actor_loss = float(np.mean(self.alpha * logp - np.minimum(q1v, q2v)))
        dlogp_du = 2.0 * a * sech2 / (sech2 + nn.TANH_EPS)
        du_dls = std * xi  # d(u)/d(log_std) under the reparameterization
        alpha = self.alpha
        g_mean = (alpha * dlogp_du - dq_da * sech2) / b
        g_ls = (alpha * (-1.0 + dlogp_du * du_dls)
                - dq_da * sech2 * du_dls) / b
        clamp_mask = ((log_std_raw > nn.LOG_STD_MIN)
                      & (log_std_raw < nn.LOG_STD_MAX))
        upstream = np.concatenate([g_mean, g_ls * clamp_mask], axis=1)
        grad, _ = nn.mlp_backward(self.actor, obs, upstream)
        nn.adam_step(self.actor, self.actor_opt, grad, self.lr_actor)

        if self.autotune_alpha:
            self.log_alpha += self.lr_actor * float(
                np.mean(logp + self.target_entropy))

        nn.polyak_update(self.q1_target, self.q1, self.tau)
        nn.polyak_update(self.q2_target, self.q2, self.tau)
        return {"status": "ok", "q1_loss": q_losses[0],
                "q2_loss": q_losses[1], "actor_loss": actor_loss,
                "entropy": float(-np.mean(logp))}

    # -- persistence -------------------------------------------------------

    def save(self, directory, prefix="agent"):
        os.makedirs(directory, exist_ok=True)
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            nn.save_mlp(getattr(self, name),
                        os.path.join(directory, f"{prefix}_{name}.lsrn"))
        header = {"alpha": self.alpha, "gamma": self.gamma,
                  "skill_dim": self.skill_dim, "obs_dim": self.obs_dim,
                  "action_dim": self.action_dim}
        with open(os.path.join(directory, f"{prefix}_header.json"), "w") as f:
            json.dump(header, f, indent=1)

    def load(self, directory, prefix="agent"):
        with open(os.path.join(directory, f"{prefix}_header.json")) as f:
            header = json.load(f)
        if (header["obs_dim"], header["action_dim"], header["skill_dim"]) != \
                (self.obs_dim, self.action_dim, self.skill_dim):
            raise ValueError("checkpoint dimensions do not match agent")
        self.log_alpha = float(np.log(header["alpha"]))
        self.gamma = header["gamma"]
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            setattr(self, name, nn.load_mlp(
                os.path.join(directory, f"{prefix}_{name}.lsrn")))
        return self


def set_two_timescale(forward_agent, reset_agent, forward_lr, reset_lr):
    """The perturbing (leader) policy must move slower than the task policy.
    Misordered rates are allowed but warned about."""
    if forward_lr <= 0 or reset_lr <= 0:
        raise ValueError("learning rates must be > 0")
    if reset_lr >= forward_lr:
        warnings.warn(
            f"reset lr {reset_lr} >= forward lr {forward_lr}; the leader "
            "should learn at the smaller rate", stacklevel=2)
    for agent, lr in ((forward_agent, forward_lr), (reset_agent, reset_lr)):
        agent.lr_actor = lr
        agent.lr_critic = lr
