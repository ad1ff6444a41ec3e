"""Finite-MDP representation, trajectory simulation, and occupation-measure sampling.

States and actions are dense integer ids. By convention the recurrent target
state is the last id. Costs and constraint costs are zero at the target, the
target is absorbing under every action, and every episode must reach it within
``horizon`` steps (enforced at runtime with :class:`HorizonExceeded`).

MDP and policy values are immutable after construction and can be shared
across threads; every sampling call owns its RNG stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import BudgetExceeded, EmptyBatch, HorizonExceeded, InvalidDiscount

_ROW_TOL = 1e-12


class PolicyHandle(Protocol):
    """Anything that maps a state to a probability vector over actions."""

    def probs(self, state) -> np.ndarray: ...


@dataclass(frozen=True)
class FiniteMdp:
    """A finite MDP with a recurrent target state and bounded first-hitting time.

    Attributes:
        cost: per-(state, action) cost table, shape ``(n_states, n_actions)``.
        dcost: per-(state, action) constraint-cost table, same shape.
        transition: ``transition[x, a]`` is a probability vector over successor
            states, shape ``(n_states, n_actions, n_states)``.
        initial_state: the single initial state id.
        target_state: the absorbing target id (conventionally ``n_states - 1``).
        gamma: discount factor in ``(0, 1]``.
        horizon: hard bound on episode length; simulation raises
            :class:`HorizonExceeded` if the target is not reached in time.
    """

    n_states: int
    n_actions: int
    cost: np.ndarray
    dcost: np.ndarray
    transition: np.ndarray
    initial_state: int
    target_state: int
    gamma: float
    horizon: int

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        dcost = np.asarray(self.dcost, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "dcost", dcost)
        object.__setattr__(self, "transition", transition)
        n, m = self.n_states, self.n_actions
        if cost.shape != (n, m) or dcost.shape != (n, m):
            raise ValueError(f"cost tables must have shape {(n, m)}")
        if transition.shape != (n, m, n):
            raise ValueError(f"transition must have shape {(n, m, n)}")
        if not (0 <= self.initial_state < n and 0 <= self.target_state < n):
            raise ValueError("initial/target state out of range")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if np.any(transition < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        rows = transition.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > _ROW_TOL:
            raise ValueError("every transition row must sum to 1 within 1e-12")
        tgt = self.target_state
        if np.any(np.abs(transition[tgt, :, tgt] - 1.0) > _ROW_TOL):
            raise ValueError("target state must be absorbing under every action")
        if np.any(cost[tgt] != 0.0) or np.any(dcost[tgt] != 0.0):
            raise ValueError("cost and constraint cost must vanish at the target")

    @property
    def c_max(self) -> float:
        return float(np.max(np.abs(self.cost)))

    @property
    def d_max(self) -> float:
        return float(np.max(np.abs(self.dcost)))

    @property
    def transition_cdf(self) -> np.ndarray:
        """Cumulative transition table, cached for vectorized sampling."""
        cached = _CDF_CACHE.get(id(self))
        if cached is None:
            cached = np.cumsum(self.transition, axis=2)
            _CDF_CACHE[id(self)] = cached
        return cached

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteMdp":
        """Build an MDP from the JSON document schema.

        Expected keys: n_states, n_actions, gamma, horizon, cost, dcost,
        transition (row-major nested lists), initial, target.
        """
        return cls(
            n_states=int(doc["n_states"]),
            n_actions=int(doc["n_actions"]),
            cost=np.asarray(doc["cost"], dtype=float),
            dcost=np.asarray(doc["dcost"], dtype=float),
            transition=np.asarray(doc["transition"], dtype=float),
            initial_state=int(doc["initial"]),
            target_state=int(doc["target"]),
            gamma=float(doc["gamma"]),
            horizon=int(doc["horizon"]),
        )

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "horizon": self.horizon,
            "cost": self.cost.tolist(),
            "dcost": self.dcost.tolist(),
            "transition": self.transition.tolist(),
            "initial": self.initial_state,
            "target": self.target_state,
        }


_CDF_CACHE: dict[int, np.ndarray] = {}


def load_mdp(path: str | Path) -> FiniteMdp:
    with open(path) as fh:
        return FiniteMdp.from_dict(json.load(fh))


def discounted_total(values: np.ndarray, gamma: float) -> float:
    """Sum of gamma^k * values[k]; the one canonical accumulation order."""
    values = np.asarray(values, dtype=float)
    return float(np.dot(gamma ** np.arange(len(values)), values))


@dataclass
class Trajectory:
    """One simulated episode ending at the target state.

    ``states[k]``/``actions[k]`` are the k-th step's source state and action;
    ``terminal_state`` is where the episode ended. ``score`` is an optional
    hook holding the summed policy log-gradient of the trajectory (filled by
    the policy module).
    """

    states: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    dcosts: np.ndarray
    terminal_state: int
    g_total: float
    j_total: float
    score: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def recompute_totals(self, gamma: float) -> tuple[float, float]:
        return discounted_total(self.costs, gamma), discounted_total(self.dcosts, gamma)


def sample_trajectory(
    mdp: FiniteMdp, policy: PolicyHandle, rng: np.random.Generator
) -> Trajectory:
    """Roll out one episode from the initial state under ``policy``.

    Raises:
        HorizonExceeded: if the target is not reached within ``mdp.horizon``
            steps (the supplied MDP violates the bounded-hitting-time contract).
    """
    x = mdp.initial_state
    states, actions = [], []
    for _ in range(mdp.horizon):
        if x == mdp.target_state:
            break
        p = policy.probs(x)
        a = int(rng.choice(mdp.n_actions, p=p))
        states.append(x)
        actions.append(a)
        x = int(rng.choice(mdp.n_states, p=mdp.transition[x, a]))
    if x != mdp.target_state:
        raise HorizonExceeded(
            f"target not reached within horizon={mdp.horizon}"
        )
    states = np.asarray(states, dtype=np.int64)
    actions = np.asarray(actions, dtype=np.int64)
    costs = mdp.cost[states, actions]
    dcosts = mdp.dcost[states, actions]
    return Trajectory(
        states=states,
        actions=actions,
        costs=costs,
        dcosts=dcosts,
        terminal_state=x,
        g_total=discounted_total(costs, mdp.gamma),
        j_total=discounted_total(dcosts, mdp.gamma),
    )


@dataclass
class BatchRollout:
    """Vectorized batch of episodes, padded to the longest episode.

    ``states``/``actions`` have shape ``(n, L)`` with ``-1`` padding past each
    episode's end; ``lengths[i]`` is episode i's step count. ``g``/``j`` hold
    the discounted cost and constraint-cost totals.
    """

    states: np.ndarray
    actions: np.ndarray
    lengths: np.ndarray
    g: np.ndarray
    j: np.ndarray

    def __len__(self) -> int:
        return len(self.lengths)

    def trajectories(self, mdp: FiniteMdp) -> list[Trajectory]:
        out = []
        for i in range(len(self)):
            L = self.lengths[i]
            states = self.states[i, :L].copy()
            actions = self.actions[i, :L].copy()
            costs = mdp.cost[states, actions]
            dcosts = mdp.dcost[states, actions]
            out.append(
                Trajectory(
                    states=states,
                    actions=actions,
                    costs=costs,
                    dcosts=dcosts,
                    terminal_state=mdp.target_state,
                    g_total=discounted_total(costs, mdp.gamma),
                    j_total=discounted_total(dcosts, mdp.gamma),
                )
            )
        return out


def sample_trajectory_batch(
    mdp: FiniteMdp,
    prob_table: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> BatchRollout:
    """Simulate ``n`` episodes in lockstep using a per-state action-prob table.

    ``prob_table`` has shape ``(n_states, n_actions)``. All episodes share one
    RNG stream, so results are deterministic given the generator state.
    """
    if n < 1:
        raise EmptyBatch("batch size must be >= 1")
    action_cdf = np.cumsum(prob_table, axis=1)
    trans_cdf = mdp.transition_cdf
    x = np.full(n, mdp.initial_state, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    states_cols, actions_cols = [], []
    g = np.zeros(n)
    j = np.zeros(n)
    lengths = np.zeros(n, dtype=np.int64)
    disc = 1.0
    for _ in range(mdp.horizon):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        xs = x[idx]
        u = rng.random(len(idx))
        acts = (action_cdf[xs] < u[:, None]).sum(axis=1)
        u2 = rng.random(len(idx))
        nxt = (trans_cdf[xs, acts] < u2[:, None]).sum(axis=1)
        col_s = np.full(n, -1, dtype=np.int64)
        col_a = np.full(n, -1, dtype=np.int64)
        col_s[idx] = xs
        col_a[idx] = acts
        states_cols.append(col_s)
        actions_cols.append(col_a)
        g[idx] += disc * mdp.cost[xs, acts]
        j[idx] += disc * mdp.dcost[xs, acts]
        lengths[idx] += 1
        x[idx] = nxt
        alive[idx] = nxt != mdp.target_state
        disc *= mdp.gamma
    if alive.any():
        raise HorizonExceeded(
            f"{int(alive.sum())} of {n} episodes missed the target within "
            f"horizon={mdp.horizon}"
        )
    states = np.stack(states_cols, axis=1) if states_cols else np.zeros((n, 0), np.int64)
    actions = np.stack(actions_cols, axis=1) if actions_cols else np.zeros((n, 0), np.int64)
    return BatchRollout(states=states, actions=actions, lengths=lengths, g=g, j=j)


def sample_occupation_state(
    mdp: FiniteMdp, policy: PolicyHandle, rng: np.random.Generator
) -> tuple[int, int]:
    """Draw one state from the gamma-discounted occupation measure.

    Simulates the chain from the initial state, terminating each step
    independently with probability ``1 - gamma``; the state at termination is
    distributed as ``d_gamma(. | x0)``. Returns ``(state, step_index)``.

    Raises:
        InvalidDiscount: when ``gamma == 1`` (the measure is not normalizable).
    """
    if mdp.gamma >= 1.0:
        raise InvalidDiscount("occupation sampling requires gamma < 1")
    x = mdp.initial_state
    k = 0
    stop = 1.0 - mdp.gamma
    while True:
        if rng.random() < stop:
            return x, k
        if x != mdp.target_state:
            a = int(rng.choice(mdp.n_actions, p=policy.probs(x)))
            x = int(rng.choice(mdp.n_states, p=mdp.transition[x, a]))
        k += 1


def sample_occupation_states(
    mdp: FiniteMdp,
    prob_table: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized batch version of :func:`sample_occupation_state`."""
    if mdp.gamma >= 1.0:
        raise InvalidDiscount("occupation sampling requires gamma < 1")
    action_cdf = np.cumsum(prob_table, axis=1)
    trans_cdf = mdp.transition_cdf
    x = np.full(n, mdp.initial_state, dtype=np.int64)
    out = np.full(n, -1, dtype=np.int64)
    pending = np.ones(n, dtype=bool)
    stop = 1.0 - mdp.gamma
    while pending.any():
        idx = np.flatnonzero(pending)
        stopping = rng.random(len(idx)) < stop
        out[idx[stopping]] = x[idx[stopping]]
        pending[idx[stopping]] = False
        idx = idx[~stopping]
        if len(idx) == 0:
            continue
        xs = x[idx]
        movable = xs != mdp.target_state
        mv = idx[movable]
        if len(mv):
            xs_mv = x[mv]
            u = rng.random(len(mv))
            acts = (action_cdf[xs_mv] < u[:, None]).sum(axis=1)
            u2 = rng.random(len(mv))
            x[mv] = (trans_cdf[xs_mv, acts] < u2[:, None]).sum(axis=1)
    return out


def enumerate_trajectories(
    mdp: FiniteMdp,
    policy: PolicyHandle,
    max_len: int,
    budget: int = 1_000_000,
) -> list[tuple[Trajectory, float]]:
    """Exhaustively enumerate absorbed trajectories with exact probabilities.

    Walks every positive-probability path of length <= ``max_len``; paths that
    reach the target are returned with their exact path probability (product
    of policy and transition factors). Paths still alive at ``max_len`` are
    dropped, so the returned probabilities sum to 1 only when every path
    absorbs in time.

    Raises:
        BudgetExceeded: once more than ``budget`` leaves have been expanded.
    """
    out: list[tuple[Trajectory, float]] = []
    leaves = 0
    prob_rows = {x: policy.probs(x) for x in range(mdp.n_states)}
    stack: list[tuple[int, float, tuple, tuple]] = [(mdp.initial_state, 1.0, (), ())]
    while stack:
        x, prob, path_s, path_a = stack.pop()
        if x == mdp.target_state:
            leaves += 1
            if leaves > budget:
                raise BudgetExceeded(f"enumeration exceeded {budget} leaves")
            states = np.asarray(path_s, dtype=np.int64)
            actions = np.asarray(path_a, dtype=np.int64)
            costs = mdp.cost[states, actions] if len(states) else np.zeros(0)
            dcosts = mdp.dcost[states, actions] if len(states) else np.zeros(0)
            out.append(
                (
                    Trajectory(
                        states=states,
                        actions=actions,
                        costs=costs,
                        dcosts=dcosts,
                        terminal_state=x,
                        g_total=discounted_total(costs, mdp.gamma),
                        j_total=discounted_total(dcosts, mdp.gamma),
                    ),
                    prob,
                )
            )
            continue
        if len(path_s) >= max_len:
            leaves += 1
            if leaves > budget:
                raise BudgetExceeded(f"enumeration exceeded {budget} leaves")
            continue
        mu = prob_rows[x]
        for a in range(mdp.n_actions):
            if mu[a] <= 0.0:
                continue
            row = mdp.transition[x, a]
            for x2 in np.flatnonzero(row > 0.0):
                stack.append(
                    (int(x2), prob * mu[a] * row[x2], path_s + (x,), path_a + (a,))
                )
    return out
