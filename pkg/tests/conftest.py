from __future__ import annotations

import numpy as np
import pytest

from riskgrad import BoltzmannPolicy, FiniteMdp, PolicyParams, TabularFeatures


def make_mdp(transition, cost, dcost=None, gamma=0.5, horizon=10, initial=0, target=None):
    transition = np.asarray(transition, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m, _ = transition.shape
    return FiniteMdp(
        n_states=n,
        n_actions=m,
        cost=cost,
        dcost=cost.copy() if dcost is None else np.asarray(dcost, dtype=float),
        transition=transition,
        initial_state=initial,
        target_state=n - 1 if target is None else target,
        gamma=gamma,
        horizon=horizon,
    )


def chain_mdp(costs, gamma=0.5, dcosts=None, horizon=None):
    """Deterministic single-action chain x0 -> x1 -> ... -> target."""
    L = len(costs)
    n = L + 1
    P = np.zeros((n, 1, n))
    for x in range(L):
        P[x, 0, x + 1] = 1.0
    P[L, 0, L] = 1.0
    cost = np.zeros((n, 1))
    cost[:L, 0] = costs
    dcost = None
    if dcosts is not None:
        dcost = np.zeros((n, 1))
        dcost[:L, 0] = dcosts
    return make_mdp(P, cost, dcost=dcost, gamma=gamma, horizon=horizon or (L + 2))


def layered_mdp(rng, n_states=4, n_actions=2, gamma=0.5, cost_lo=-0.5, cost_hi=1.5):
    """Random MDP whose transitions only move to strictly higher ids.

    Forward-only transitions absorb within n_states - 1 steps on every path,
    so the bounded first-hitting-time contract holds by construction.
    """
    n = n_states
    P = np.zeros((n, n_actions, n))
    for x in range(n - 1):
        for a in range(n_actions):
            raw = rng.random(n - x - 1) + 0.05
            P[x, a, x + 1 :] = raw / raw.sum()
    P[n - 1, :, n - 1] = 1.0
    cost = rng.uniform(cost_lo, cost_hi, size=(n, n_actions))
    dcost = rng.uniform(cost_lo, cost_hi, size=(n, n_actions))
    cost[n - 1] = 0.0
    dcost[n - 1] = 0.0
    return make_mdp(P, cost, dcost=dcost, gamma=gamma, horizon=n + 1)


def uniform_policy(mdp):
    return BoltzmannPolicy(
        TabularFeatures(mdp.n_states),
        PolicyParams.zeros(mdp.n_actions, mdp.n_states),
    )


def random_policy(mdp, rng, scale=0.8):
    params = PolicyParams(
        theta=rng.normal(scale=scale, size=(mdp.n_actions, mdp.n_states))
    )
    return BoltzmannPolicy(TabularFeatures(mdp.n_states), params)


class AugmentedView:
    """Budget-blind adapter: expose a base-state policy on (x, s) states."""

    def __init__(self, policy):
        self.policy = policy

    def probs(self, state):
        return self.policy.probs(int(state[0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
