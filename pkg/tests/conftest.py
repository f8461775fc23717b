"""Session-scoped fixtures shared between module tests and the acceptance
suite, so the expensive training runs happen once."""
import time

import numpy as np
import pytest

import tabular_mdp
from resetgame import nn
from resetgame.sac import ReplayBuffer, SacAgent, Transition


@pytest.fixture(scope="session")
def tabular_sac():
    """Train SAC on the two-state MDP and read out its Q table alongside the
    independent soft-value oracle. Returns a dict with both tables, the
    sup-norm error, and the wall-clock seconds spent."""
    start = time.monotonic()
    q_oracle, v_oracle, policies = tabular_mdp.soft_values()

    rng = np.random.default_rng(0)
    agent = SacAgent(1, 1, hidden=(32, 32), alpha=tabular_mdp.ALPHA,
                     gamma=tabular_mdp.GAMMA, rng=rng)
    n_fill = 20_000
    buf = ReplayBuffer(n_fill, 1, 1)
    for _ in range(n_fill):
        s = int(rng.integers(2))
        a = rng.uniform(-1.0, 1.0)
        r, s_next = tabular_mdp.mdp_step(s, a)
        buf.push(Transition(tabular_mdp.state_obs(s), np.array([a]), r,
                            tabular_mdp.state_obs(s_next), False))
    # anneal the step size so the stochastic-target noise floor shrinks
    for lr, n_updates in ((1e-3, 20_000), (2e-4, 10_000)):
        agent.lr_actor = agent.lr_critic = lr
        for _ in range(n_updates):
            agent.update(buf, 256, rng)

    # read the learned Q per (state, action half), averaged over actions
    # away from the sign boundary the MLP has to smooth over
    grid = np.linspace(0.15, 0.95, 9)
    q_learned = np.zeros((2, 2))
    for s in range(2):
        for d, actions in ((0, -grid), (1, grid)):
            x = np.concatenate(
                [np.repeat(tabular_mdp.state_obs(s)[None], len(grid), 0),
                 actions[:, None]], axis=1)
            q_min = np.minimum(nn.mlp_forward(agent.q1, x)[:, 0],
                               nn.mlp_forward(agent.q2, x)[:, 0])
            q_learned[s, d] = q_min.mean()

    return {
        "q_oracle": q_oracle,
        "v_oracle": v_oracle,
        "policies": policies,
        "q_learned": q_learned,
        "sup_error": float(np.abs(q_learned - q_oracle).max()),
        "seconds": time.monotonic() - start,
    }
