"""Diversity machinery: the categorical skill prior, the skill classifier
whose log-likelihood rewards distinguishable behavior, and the
random-network-distillation novelty bonus."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass
class SkillPrior:
    """Uniform categorical prior over k skills."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one skill")

    @property
    def log_p(self):
        return -float(np.log(self.k))


def sample_skill(prior, rng):
    if prior.k == 1:
        return 0
    return int(rng.integers(0, prior.k))


class Discriminator:
    """Classifier from observation (or its position slice) to skill logits."""

    def __init__(self, obs_dim, k, hidden=(64, 64), lr=3e-4, batch_size=128,
                 xy_only=False, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.k = k
        self.xy_only = xy_only
        self.in_dim = 2 if xy_only else obs_dim
        self.net = nn.init_mlp([self.in_dim, *hidden, k], rng)
        self.opt = nn.adam_init(self.net)
        self.lr = lr
        self.batch_size = batch_size

    def _inputs(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        return obs[..., :2] if self.xy_only else obs

    def log_probs(self, obs):
        return nn.log_softmax(nn.mlp_forward(self.net, self._inputs(obs)))

    def update(self, obs, labels):
        """One Adam step on the mean negative log-likelihood; returns the
        pre-step loss."""
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            raise ValueError("empty discriminator batch")
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValueError("skill label out of range")
        x = self._inputs(np.atleast_2d(obs))
        logp = nn.log_softmax(nn.mlp_forward(self.net, x))
        b = len(labels)
        loss = -float(np.mean(logp[np.arange(b), labels]))
        upstream = np.exp(logp)  # softmax
        upstream[np.arange(b), labels] -= 1.0
        grad, _ = nn.mlp_backward(self.net, x, upstream / b)
        nn.adam_step(self.net, self.opt, grad, self.lr)
        return loss

    def accuracy(self, obs, labels):
        pred = np.argmax(self.log_probs(np.atleast_2d(obs)), axis=1)
        return float(np.mean(pred == np.asarray(labels)))

    def confusion(self, obs, labels):
        pred = np.argmax(self.log_probs(np.atleast_2d(obs)), axis=1)
        mat = np.zeros((self.k, self.k), dtype=np.int64)
        for t, p in zip(np.asarray(labels, dtype=np.int64), pred):
            mat[t, p] += 1
        return mat


def pseudo_reward(disc, prior, logpi, obs, z, scale=1.0,
                  include_entropy=True):
    """Variational diversity reward: log q(z|s) - log p(z) - log pi(a|s,z),
    times the configured scale. include_entropy=False drops the action
    log-density term."""
    if not 0 <= z < prior.k:
        raise ValueError("skill out of range")
    r = float(disc.log_probs(np.asarray(obs))[int(z)]) - prior.log_p
    if include_entropy:
        r -= logpi
    return scale * r


class LabeledObsBuffer:
    """Ring buffer of (observation, skill label) for classifier training."""

    def __init__(self, capacity, obs_dim):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.labels = np.zeros(capacity, dtype=np.int64)
        self.cursor = 0
        self.size = 0

    def push(self, obs, label):
        self.obs[self.cursor] = obs
        self.labels[self.cursor] = label
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.labels[idx]


class RndPair:
    """Frozen random target net plus a trained predictor; the normalized
    prediction error is the novelty bonus."""

    def __init__(self, obs_dim, embed_dim=64, hidden=(64, 64), lr=3e-4,
                 rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        if embed_dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.target = nn.init_mlp([obs_dim, *hidden, embed_dim], rng)
        self.predictor = nn.init_mlp([obs_dim, *hidden, embed_dim], rng)
        self.opt = nn.adam_init(self.predictor)
        self.lr = lr
        # Welford running stats of the raw squared error
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def _errors(self, obs):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        diff = nn.mlp_forward(self.predictor, obs) - \
            nn.mlp_forward(self.target, obs)
        return np.sum(diff * diff, axis=1)

    def _observe(self, errs):
        for e in errs:
            self.count += 1
            delta = e - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (e - self.mean)

    @property
    def std(self):
        if self.count < 2:
            return 1.0
        return float(np.sqrt(max(self.m2 / (self.count - 1), 1e-12)))

    def bonus(self, obs):
        """Squared prediction error over the running std; updates the
        running statistics as a side effect."""
        errs = self._errors(obs)
        std = self.std
        self._observe(errs)
        out = errs / std
        return float(out[0]) if np.asarray(obs).ndim == 1 else out

    def update(self, obs):
        """One Adam step shrinking the predictor's error on the batch."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        pred = nn.mlp_forward(self.predictor, obs)
        targ = nn.mlp_forward(self.target, obs)
        diff = pred - targ
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        grad, _ = nn.mlp_backward(self.predictor, obs,
                                  2.0 * diff / len(obs))
        nn.adam_step(self.predictor, self.opt, grad, self.lr)
        return loss
