"""Minimal dense-network numerics.

Everything downstream (policies, critics, the skill classifier, the novelty
nets) is built from the same ingredients: an MLP with exact reverse-mode
gradients, Adam, Polyak averaging, and the squashed-Gaussian / softmax
probability math. All arrays are float64.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh")

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
TANH_EPS = 1e-6  # inside log(1 - tanh(u)^2 + eps); keeps the density finite

MAGIC = b"LSRN"
FORMAT_VERSION = 1


@dataclass
class Mlp:
    """Layer list of (W: (out, in), b: (out,)) with one activation tag per
    hidden layer. The output layer is affine."""

    weights: list
    biases: list
    activations: tuple

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def copy(self):
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases],
                   self.activations)


@dataclass
class Grad:
    """Shape tree mirroring an Mlp's parameters."""

    weights: list
    biases: list


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_mlp(sizes, rng, activation="relu", out_scale=1.0):
    """Uniform +-1/sqrt(fan_in) init; policy output layers pass out_scale=1e-2
    so initial actions start near zero."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(sizes[i + 1], fan_in))
        b = rng.uniform(-bound, bound, size=sizes[i + 1])
        if i == len(sizes) - 2 and out_scale != 1.0:
            w *= out_scale
            b *= out_scale
        weights.append(w)
        biases.append(b)
    acts = tuple(activation for _ in range(len(sizes) - 2))
    return Mlp(weights, biases, acts)


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.in_dim:
        raise ValueError(
            f"layer 0 expects input dim {net.in_dim}, got {x.shape[-1]}")
    return x


def mlp_forward(net, x):
    x = _check_input(net, x)
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < net.n_layers - 1:
            act = net.activations[i]
            h = np.maximum(h, 0.0) if act == "relu" else np.tanh(h)
    return h


def _forward_cached(net, x):
    """Returns (output, pre-activation inputs per layer)."""
    inputs = [x]
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i < net.n_layers - 1:
            act = net.activations[i]
            h = np.maximum(h, 0.0) if act == "relu" else np.tanh(h)
            inputs.append(h)
    return h, inputs


def mlp_backward(net, x, upstream):
    """Exact reverse-mode gradients of mlp_forward.

    x may be a single vector or a batch (rows); gradients are summed over the
    batch. Returns (Grad, gradient w.r.t. x)."""
    x = _check_input(net, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != x.shape[:-1] + (net.out_dim,):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match output dim "
            f"{net.out_dim}")
    single = x.ndim == 1
    xb = x[None, :] if single else x
    ub = upstream[None, :] if single else upstream

    _, inputs = _forward_cached(net, xb)
    dws = [None] * net.n_layers
    dbs = [None] * net.n_layers
    delta = ub
    for i in range(net.n_layers - 1, -1, -1):
        dws[i] = delta.T @ inputs[i]
        dbs[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
        if i > 0:
            h = inputs[i]  # post-activation of layer i-1
            act = net.activations[i - 1]
            delta = delta * ((h > 0.0) if act == "relu" else (1.0 - h * h))
    dx = delta[0] if single else delta
    return Grad(dws, dbs), dx


def adam_init(net, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState(
        m_w=[np.zeros_like(w) for w in net.weights],
        v_w=[np.zeros_like(w) for w in net.weights],
        m_b=[np.zeros_like(b) for b in net.biases],
        v_b=[np.zeros_like(b) for b in net.biases],
        t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(net, state, grad, lr):
    """Bias-corrected Adam update, in place on net and state."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    for g in grad.weights + grad.biases:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; no update applied")
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for params, grads, ms, vs in (
            (net.weights, grad.weights, state.m_w, state.v_w),
            (net.biases, grad.biases, state.m_b, state.v_b)):
        for p, g, m, v in zip(params, grads, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net, state


def polyak_update(target, online, tau):
    """target' = online + (1-tau)*(target-online), in place on target.

    Written in this form so that (target' - online) is exactly
    (1-tau)*(target - online) elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    for tp, op in zip(target.weights + target.biases,
                      online.weights + online.biases):
        if tp.shape != op.shape:
            raise ValueError("target/online shape mismatch")
        tp[...] = op + (1.0 - tau) * (tp - op)
    return target


def gaussian_tanh_logprob(mean, log_std, pre_tanh):
    """log-density of a = tanh(u), u ~ N(mean, exp(log_std)), summed over the
    last axis. pre_tanh is u."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    u = np.asarray(pre_tanh, dtype=np.float64)
    std = np.exp(log_std)
    log_n = -0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)
    t = np.tanh(u)
    correction = np.log(1.0 - t * t + TANH_EPS)
    return np.sum(log_n - correction, axis=-1)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 0:
        raise ValueError("log_softmax of empty vector")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def save_mlp(net, path):
    """Flat little-endian binary snapshot: magic, version, layer count, then
    per layer (out, in) dims, row-major weights, biases."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, net.n_layers))
        for w, b in zip(net.weights, net.biases):
            f.write(struct.pack("<II", w.shape[0], w.shape[1]))
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path, activation="relu"):
    """Inverse of save_mlp. Activation tags are not stored in the file and
    must be supplied by the caller."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a network snapshot")
        version, n_layers = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        weights, biases = [], []
        for _ in range(n_layers):
            out_d, in_d = struct.unpack("<II", f.read(8))
            w = np.frombuffer(f.read(8 * out_d * in_d), dtype="<f8")
            weights.append(w.reshape(out_d, in_d).astype(np.float64))
            biases.append(np.frombuffer(f.read(8 * out_d), dtype="<f8")
                          .astype(np.float64))
    acts = tuple(activation for _ in range(n_layers - 1))
    return Mlp(weights, biases, acts)
