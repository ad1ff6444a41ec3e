"""Augmented state space (x, s) for the constrained Lagrangian.

The budget coordinate follows ``s' = (s - D(x, a)) / gamma``, which telescopes
so that the terminal value ``s_T = (s_0 - sum_k gamma^k D_k) / gamma^T`` turns
the running constraint total into a terminal quantity. Interior costs equal
the base MDP's costs; the only multiplier-dependent quantity is the terminal
cost, charged once at the target:

* cvar variant:   ``lam * max(-s, 0) / (1 - alpha)``
* chance variant: ``lam * 1{s <= 0}`` (ties count as violation)

``lam`` lives on the wrapper and is read at cost-evaluation time, so one
wrapper serves every multiplier iterate. Concurrent readers should pass the
multiplier by value via the ``lam=`` overrides instead of mutating it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NotTerminal, TerminalStep
from .mdp import FiniteMdp, PolicyHandle, discounted_total


class AugState(NamedTuple):
    x: int
    s: float


@dataclass
class AugmentedMdp:
    """Wrapper turning a FiniteMdp into its (x, s) augmentation.

    ``initial_s`` is the quantile iterate for the cvar variant and the
    constraint threshold for the chance variant.
    """

    base: FiniteMdp
    variant: str  # "cvar" | "chance"
    initial_s: float = 0.0
    alpha: float | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.variant not in ("cvar", "chance"):
            raise ValueError("variant must be 'cvar' or 'chance'")
        if self.variant == "cvar":
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError("cvar variant needs alpha in (0, 1)")

    @property
    def gamma(self) -> float:
        return self.base.gamma

    def initial_state(self, s0: float | None = None) -> AugState:
        return AugState(self.base.initial_state, self.initial_s if s0 is None else s0)

    def shift_s(self, s: float, x: int, a: int) -> float:
        # single shared expression so simulation and the oracle's grid closure
        # produce bit-identical s values
        return (s - self.base.dcost[x, a]) / self.base.gamma

    def terminal_cost(self, s: float, lam: float | None = None) -> float:
        lam = self.lam if lam is None else lam
        if self.variant == "cvar":
            return lam * max(-s, 0.0) / (1.0 - self.alpha)
        return lam if s <= 0.0 else 0.0


def augmented_step(
    aug: AugmentedMdp, state: AugState, action: int, rng: np.random.Generator
) -> tuple[AugState, float]:
    """One interior transition; returns the successor and the base cost."""
    x, s = state
    if x == aug.base.target_state:
        raise TerminalStep("cannot step the augmented MDP from its target state")
    x2 = int(rng.choice(aug.base.n_states, p=aug.base.transition[x, action]))
    return AugState(x2, aug.shift_s(s, x, action)), float(aug.base.cost[x, action])


@dataclass
class AugmentedTrajectory:
    """An episode through the augmented MDP, ending at the target.

    ``s_path`` has one more entry than the step arrays; its last element is
    the terminal budget value.
    """

    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    dcosts: np.ndarray
    s_path: np.ndarray
    terminal_state: int
    g_total: float
    j_total: float
    score: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def terminal_s(self) -> float:
        return float(self.s_path[-1])


def simulate_augmented_episode(
    aug: AugmentedMdp,
    policy: PolicyHandle,
    rng: np.random.Generator,
    s0: float | None = None,
) -> AugmentedTrajectory:
    """Roll out one augmented episode from ``(x0, s0)`` under ``policy``.

    The policy is queried with ``(x, s)`` tuples; horizon enforcement matches
    the base simulator.
    """
    from .errors import HorizonExceeded

    state = aug.initial_state(s0)
    states, actions, s_vals = [], [], [state.s]
    for _ in range(aug.base.horizon):
        if state.x == aug.base.target_state:
            break
        p = policy.probs((state.x, state.s))
        a = int(rng.choice(aug.base.n_actions, p=p))
        states.append(state.x)
        actions.append(a)
        state, _ = augmented_step(aug, state, a, rng)
        s_vals.append(state.s)
    if state.x != aug.base.target_state:
        raise HorizonExceeded(f"target not reached within horizon={aug.base.horizon}")
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    costs = aug.base.cost[states, actions]
    dcosts = aug.base.dcost[states, actions]
    return AugmentedTrajectory(
        states=states,
        actions=actions,
        costs=costs,
        dcosts=dcosts,
        s_path=np.asarray(s_vals, dtype=float),
        terminal_state=state.x,
        g_total=discounted_total(costs, aug.base.gamma),
        j_total=discounted_total(dcosts, aug.base.gamma),
    )


def augmented_trajectory_cost(
    aug: AugmentedMdp, traj: AugmentedTrajectory, lam: float | None = None
) -> float:
    """Discounted total of the augmented costs, terminal step included.

    For the cvar variant this equals
    ``g_total + (lam / (1 - alpha)) * (j_total - s0)^+`` — the identity that
    makes the augmented value function's policy gradient equal the
    Lagrangian's.
    """
    if traj.terminal_state != aug.base.target_state:
        raise NotTerminal("trajectory does not end at the target state")
    interior = discounted_total(traj.costs, aug.base.gamma)
    t = len(traj)
    return float(
        interior + aug.base.gamma**t * aug.terminal_cost(traj.terminal_s, lam)
    )


def sample_augmented_occupation(
    aug: AugmentedMdp,
    policy: PolicyHandle,
    rng: np.random.Generator,
    s0: float | None = None,
) -> tuple[AugState, int]:
    """One draw from the gamma-discounted occupation measure over (x, s).

    Follows the augmented chain (target loops to ``(x_tar, 0)``), terminating
    each step with probability ``1 - gamma``.
    """
    from .errors import InvalidDiscount

    if aug.base.gamma >= 1.0:
        raise InvalidDiscount("occupation sampling requires gamma < 1")
    state = aug.initial_state(s0)
    k = 0
    stop = 1.0 - aug.base.gamma
    while True:
        if rng.random() < stop:
            return state, k
        if state.x == aug.base.target_state:
            state = AugState(state.x, 0.0)
        else:
            a = int(rng.choice(aug.base.n_actions, p=policy.probs((state.x, state.s))))
            state, _ = augmented_step(aug, state, a, rng)
        k += 1
