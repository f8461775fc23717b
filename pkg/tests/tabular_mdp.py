"""Two-state, two-action MDP plus an independent soft-value oracle.

The MDP: states {s0, s1}, one continuous action a in [-1, 1]; the discrete
action is sign(a), and taking discrete action i moves the system to state i.
Rewards: s0 pays +1 for the negative half, s1 pays +1 for the positive half.

The oracle is brute-force soft policy iteration over the same tanh-Gaussian
policy class the agent uses: per state, grid-search (mu, sigma), evaluating
the expected soft backup by Gauss-Hermite quadrature. It shares no code with
the gradient-based learner beyond the log-density constant TANH_EPS.
"""
import math

import numpy as np

from resetgame.nn import TANH_EPS

# rewards[state, discrete action]; discrete action d leads to state d
REWARDS = np.array([[1.0, 0.0],
                    [0.0, 1.0]])
GAMMA = 0.9
ALPHA = 0.1

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(96)
_NODES = math.sqrt(2.0) * _GH_NODES          # standard-normal nodes
_WEIGHTS = _GH_WEIGHTS / math.sqrt(math.pi)  # standard-normal weights


def state_obs(state):
    """Scalar observation embedding: s0 -> -1, s1 -> +1."""
    return np.array([2.0 * state - 1.0])


def mdp_step(state, action):
    d = 0 if action < 0 else 1
    return float(REWARDS[state, d]), d


def _policy_stats(mus, sigmas):
    """For every (mu, sigma) pair: P(a > 0) and the squashed entropy
    E[-log pi(a)], with the same epsilon the learner's density uses."""
    mus = np.asarray(mus)[:, None]
    sigmas = np.asarray(sigmas)[:, None]
    u = mus + sigmas * _NODES[None, :]
    jac = np.log(1.0 - np.tanh(u) ** 2 + TANH_EPS)
    entropy = (0.5 * math.log(2.0 * math.pi * math.e)
               + np.log(sigmas[:, 0])
               + jac @ _WEIGHTS)
    z = mus[:, 0] / sigmas[:, 0]
    p_pos = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
    return p_pos, entropy


def _grid(mu_lo, mu_hi, sig_lo, sig_hi, n_mu=161, n_sig=81):
    mus = np.linspace(mu_lo, mu_hi, n_mu)
    sigmas = np.geomspace(sig_lo, sig_hi, n_sig)
    mm, ss = np.meshgrid(mus, sigmas, indexing="ij")
    return mm.ravel(), ss.ravel()


def soft_values(rewards=REWARDS, gamma=GAMMA, alpha=ALPHA, tol=1e-10):
    """Returns (Q[2,2], V[2], policies[(mu, sigma)] per state) at the soft
    fixed point over the tanh-Gaussian policy class."""
    # coarse grid, then a refined grid around each state's argmax
    stages = [_grid(-4.0, 4.0, 1e-2, 3.0)]
    mus, sigmas = stages[0]
    p_pos, entropy = _policy_stats(mus, sigmas)

    V = np.zeros(2)
    for _ in range(2000):
        Q = rewards + gamma * V[None, :]
        score = (Q[:, [0]] * (1.0 - p_pos)[None, :]
                 + Q[:, [1]] * p_pos[None, :]
                 + alpha * entropy[None, :])
        V_new = score.max(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new

    # one refinement pass per state around the coarse argmax
    policies = []
    for s in range(2):
        Q = rewards + gamma * V[None, :]
        best = np.argmax(Q[s, 0] * (1.0 - p_pos) + Q[s, 1] * p_pos
                         + alpha * entropy)
        mu0, sig0 = mus[best], sigmas[best]
        fm, fs = _grid(mu0 - 0.1, mu0 + 0.1, sig0 * 0.8, sig0 * 1.25,
                       n_mu=201, n_sig=101)
        fp, fe = _policy_stats(fm, fs)
        fscore = Q[s, 0] * (1.0 - fp) + Q[s, 1] * fp + alpha * fe
        j = np.argmax(fscore)
        policies.append((float(fm[j]), float(fs[j])))
        V[s] = float(fscore[j])

    # a couple more sweeps with refined policies to settle V
    for _ in range(2000):
        Q = rewards + gamma * V[None, :]
        V_new = V.copy()
        for s, (mu, sig) in enumerate(policies):
            p, e = _policy_stats([mu], [sig])
            V_new[s] = (Q[s, 0] * (1.0 - p[0]) + Q[s, 1] * p[0]
                        + alpha * e[0])
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = rewards + gamma * V[None, :]
    return Q, V, policies
