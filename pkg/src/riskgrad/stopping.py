"""Optimal-stopping benchmark: buy now or wait on a binomially moving cost.

The state is the pair (price level, time). Each wait step the price is
multiplied by ``f_u`` with probability ``p`` or by ``f_d`` otherwise and a
holding cost ``p_h`` accrues; accepting pays the current price capped at the
threshold ``K`` and ends the episode; at the last period acceptance is forced.
Price levels live on the multiplicative lattice ``c0 * f_u^i * f_d^(k-i)``
indexed by ``(k, i)``, so the state space is quadratic in the horizon and
simulated prices always land exactly on precomputed lattice nodes. Cost and
constraint cost coincide, which makes the episode's discounted total both the
objective and the constrained quantity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid
from .mdp import FiniteMdp

WAIT, ACCEPT = 0, 1


@dataclass(frozen=True)
class StoppingEnvConfig:
    f_u: float = 2.0
    f_d: float = 0.5
    p: float = 0.65
    p_h: float = 0.1
    cost_cap: float = 5.0  # K: the most a purchase can cost
    horizon: int = 20  # T: forced acceptance period
    gamma: float = 0.95
    initial_cost: float = 1.0

    def validate(self) -> "StoppingEnvConfig":
        if not (self.f_u > 1.0 > self.f_d > 0.0):
            raise ConfigInvalid("need f_u > 1 > f_d > 0")
        if not 0.0 < self.p < 1.0:
            raise ConfigInvalid("up-probability must lie in (0, 1)")
        if self.horizon < 1:
            raise ConfigInvalid("horizon must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigInvalid("gamma must lie in (0, 1]")
        if self.initial_cost <= 0.0 or self.cost_cap <= 0.0 or self.p_h < 0.0:
            raise ConfigInvalid("costs must be positive (holding cost nonnegative)")
        return self


def node_id(k: int, i: int) -> int:
    """Flat id of lattice node (time k, i up-moves so far)."""
    return k * (k + 1) // 2 + i


def n_lattice_nodes(horizon: int) -> int:
    return (horizon + 1) * (horizon + 2) // 2


def lattice_costs(config: StoppingEnvConfig) -> np.ndarray:
    """Price at every lattice node, built multiplicatively once."""
    c = np.empty(n_lattice_nodes(config.horizon))
    for k in range(config.horizon + 1):
        for i in range(k + 1):
            c[node_id(k, i)] = config.initial_cost * config.f_u**i * config.f_d ** (k - i)
    return c


def build_stopping_mdp(config: StoppingEnvConfig) -> FiniteMdp:
    """Assemble the finite MDP for the stopping problem.

    States are lattice nodes plus the absorbing target; action 1 accepts
    (pays ``min(K, c)``), action 0 waits (pays the holding cost). At the final
    period both actions accept.
    """
    config.validate()
    T = config.horizon
    n_nodes = n_lattice_nodes(T)
    n = n_nodes + 1
    target = n_nodes
    prices = lattice_costs(config)
    cost = np.zeros((n, 2))
    transition = np.zeros((n, 2, n))
    transition[target, :, target] = 1.0
    for k in range(T + 1):
        for i in range(k + 1):
            sid = node_id(k, i)
            accept_cost = min(config.cost_cap, prices[sid])
            cost[sid, ACCEPT] = accept_cost
            transition[sid, ACCEPT, target] = 1.0
            if k < T:
                cost[sid, WAIT] = config.p_h
                transition[sid, WAIT, node_id(k + 1, i + 1)] = config.p
                transition[sid, WAIT, node_id(k + 1, i)] = 1.0 - config.p
            else:
                # forced acceptance at the last period: waiting is acceptance
                cost[sid, WAIT] = accept_cost
                transition[sid, WAIT, target] = 1.0
    return FiniteMdp(
        n_states=n,
        n_actions=2,
        cost=cost,
        dcost=cost.copy(),
        transition=transition,
        initial_state=node_id(0, 0),
        target_state=target,
        gamma=config.gamma,
        horizon=T + 1,
    )


def node_coordinates(config: StoppingEnvConfig, state: int) -> tuple[int, float]:
    """Recover (time, price) of a lattice state id."""
    k = 0
    while node_id(k + 1, 0) <= state:
        k += 1
    i = state - node_id(k, 0)
    return k, config.initial_cost * config.f_u**i * config.f_d ** (k - i)
