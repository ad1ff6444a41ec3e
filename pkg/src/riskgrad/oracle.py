"""Exact small-instance ground truth for the estimators and critics.

Three oracles live here:

* exhaustive trajectory enumeration of the constrained Lagrangian and its
  closed-form gradients (both endpoints of the quantile sub-differential);
* value iteration on the exactly-discretized augmented MDP, realizing the
  discounted and undiscounted policy Bellman operators with target-state
  values pinned to the terminal cost;
* occupation measures by direct linear solve, from which the multiplier
  gradient is evaluated without sampling.

Everything here is deliberately desk-scale: enumeration and dense linear
algebra, exact to float precision, used by the test suite to certify the
sampling-based code paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augmented import AugmentedMdp
from .errors import BudgetExceeded, InvalidDiscount, NoConvergence
from .mdp import FiniteMdp, PolicyHandle, enumerate_trajectories
from .policies import BoltzmannPolicy

_S_DEDUP = 1e-12
_S_LOOKUP = 1e-9


# ---------------------------------------------------------------------------
# trajectory-space oracle
# ---------------------------------------------------------------------------


def exact_lagrangian(
    mdp: FiniteMdp,
    policy: PolicyHandle,
    nu: float,
    lam: float,
    alpha: float,
    beta: float,
    budget: int = 1_000_000,
) -> float:
    """Constrained Lagrangian by exhaustive enumeration.

    ``L = E[G] + lam * (nu + E[(J - nu)^+]/(1 - alpha) - beta)`` with the
    expectations expanded over every positive-probability trajectory.
    """
    trajs = enumerate_trajectories(mdp, policy, mdp.horizon, budget=budget)
    eg = sum(p * t.g_total for t, p in trajs)
    excess = sum(p * max(t.j_total - nu, 0.0) for t, p in trajs)
    return float(eg + lam * (nu + excess / (1.0 - alpha) - beta))


@dataclass(frozen=True)
class ExactGradients:
    """Closed-form gradients; ``d_nu`` carries both sub-differential endpoints."""

    d_nu_closed: float  # indicator convention 1{J >= nu}
    d_nu_open: float  # indicator convention 1{J > nu}
    d_theta: np.ndarray
    d_lambda: float


def exact_gradients(
    mdp: FiniteMdp,
    policy: BoltzmannPolicy,
    nu: float,
    lam: float,
    alpha: float,
    beta: float,
    budget: int = 1_000_000,
) -> ExactGradients:
    trajs = enumerate_trajectories(mdp, policy, mdp.horizon, budget=budget)
    inv = 1.0 / (1.0 - alpha)
    d_theta = np.zeros_like(policy.params.theta)
    p_ge = 0.0
    p_gt = 0.0
    excess = 0.0
    for traj, p in trajs:
        j = traj.j_total
        if j >= nu:
            p_ge += p
            excess += p * (j - nu)
        if j > nu:
            p_gt += p
        weight = traj.g_total + lam * inv * max(j - nu, 0.0) * (1.0 if j >= nu else 0.0)
        if weight != 0.0:
            d_theta += p * weight * policy.score(traj)
    return ExactGradients(
        d_nu_closed=float(lam * (1.0 - inv * p_ge)),
        d_nu_open=float(lam * (1.0 - inv * p_gt)),
        d_theta=d_theta,
        d_lambda=float(nu - beta + inv * excess),
    )


def exact_chance_lagrangian(
    mdp: FiniteMdp,
    policy: PolicyHandle,
    lam: float,
    threshold: float,
    beta: float,
    budget: int = 1_000_000,
) -> float:
    """``E[G] + lam * (P(J >= threshold) - beta)`` by enumeration."""
    trajs = enumerate_trajectories(mdp, policy, mdp.horizon, budget=budget)
    eg = sum(p * t.g_total for t, p in trajs)
    viol = sum(p for t, p in trajs if t.j_total >= threshold)
    return float(eg + lam * (viol - beta))


def exact_chance_gradients(
    mdp: FiniteMdp,
    policy: BoltzmannPolicy,
    lam: float,
    threshold: float,
    beta: float,
    budget: int = 1_000_000,
) -> tuple[np.ndarray, float]:
    trajs = enumerate_trajectories(mdp, policy, mdp.horizon, budget=budget)
    d_theta = np.zeros_like(policy.params.theta)
    viol = 0.0
    for traj, p in trajs:
        hit = 1.0 if traj.j_total >= threshold else 0.0
        viol += p * hit
        d_theta += p * (traj.g_total + lam * hit) * policy.score(traj)
    return d_theta, float(viol - beta)


# ---------------------------------------------------------------------------
# discretized augmentation
# ---------------------------------------------------------------------------


@dataclass
class DiscretizedAugmentation:
    """Exact forward closure of the reachable (x, s) pairs.

    Built by breadth-first expansion from ``(x0, s0)`` under *all* actions, so
    the grid is policy-independent. Budget values are deduplicated at 1e-12;
    no interpolation ever happens because the closure uses the same float
    recursion as the simulator.
    """

    aug: AugmentedMdp
    xs: np.ndarray  # pair -> base state id
    ss: np.ndarray  # pair -> budget value
    initial_id: int
    succ_id: np.ndarray  # (n_pairs, n_actions, n_states) successor pair ids
    succ_p: np.ndarray  # matching probabilities

    @property
    def n_pairs(self) -> int:
        return len(self.xs)

    def is_target(self) -> np.ndarray:
        return self.xs == self.aug.base.target_state

    def pair_id(self, x: int, s: float) -> int:
        """Locate a pair, matching s within 1e-9."""
        hits = np.flatnonzero(
            (self.xs == x) & (np.abs(self.ss - s) <= _S_LOOKUP * (1.0 + np.abs(s)))
        )
        if len(hits) == 0:
            raise KeyError(f"({x}, {s}) not on the discretized grid")
        return int(hits[0])

    def s_grid(self, x: int) -> np.ndarray:
        return np.sort(self.ss[self.xs == x])


def discretize(
    aug: AugmentedMdp, s0: float | None = None, budget: int = 200_000
) -> DiscretizedAugmentation:
    base = aug.base
    s_init = aug.initial_s if s0 is None else s0
    key = lambda x, s: (x, round(s, 12))
    first = (base.initial_state, float(s_init))
    index = {key(*first): 0}
    pairs = [first]
    frontier = [first]
    while frontier:
        nxt = []
        for x, s in frontier:
            if x == base.target_state:
                succs = [(base.target_state, 0.0)]
            else:
                succs = []
                for a in range(base.n_actions):
                    s2 = aug.shift_s(s, x, a)
                    row = base.transition[x, a]
                    succs.extend((int(x2), s2) for x2 in np.flatnonzero(row > 0.0))
            for x2, s2 in succs:
                k = key(x2, s2)
                if k not in index:
                    index[k] = len(pairs)
                    pairs.append((x2, s2))
                    nxt.append((x2, s2))
                    if len(pairs) > budget:
                        raise BudgetExceeded(
                            f"augmented closure exceeded {budget} pairs"
                        )
        frontier = nxt
    xs = np.asarray([p[0] for p in pairs], dtype=np.int64)
    ss = np.asarray([p[1] for p in pairs], dtype=float)
    n_pairs = len(pairs)
    succ_id = np.zeros((n_pairs, base.n_actions, base.n_states), dtype=np.int64)
    succ_p = np.zeros((n_pairs, base.n_actions, base.n_states))
    for i, (x, s) in enumerate(pairs):
        for a in range(base.n_actions):
            if x == base.target_state:
                succ_id[i, a, 0] = index[key(base.target_state, 0.0)]
                succ_p[i, a, 0] = 1.0
                continue
            s2 = aug.shift_s(s, x, a)
            row = base.transition[x, a]
            for slot, x2 in enumerate(np.flatnonzero(row > 0.0)):
                succ_id[i, a, slot] = index[key(int(x2), s2)]
                succ_p[i, a, slot] = row[x2]
    return DiscretizedAugmentation(
        aug=aug, xs=xs, ss=ss, initial_id=0, succ_id=succ_id, succ_p=succ_p
    )


class AugmentedTabularFeatures:
    """One-hot features over the discretized (x, s) pairs."""

    kind = "tabular"

    def __init__(self, disc: DiscretizedAugmentation):
        self.disc = disc
        self.dimension = disc.n_pairs
        self._eye = np.eye(self.dimension)

    def __call__(self, state) -> np.ndarray:
        x, s = state
        return self._eye[self.disc.pair_id(int(x), float(s))]


def _policy_matrix(disc: DiscretizedAugmentation, policy: PolicyHandle) -> np.ndarray:
    mu = np.zeros((disc.n_pairs, disc.aug.base.n_actions))
    for i in range(disc.n_pairs):
        mu[i] = policy.probs((int(disc.xs[i]), float(disc.ss[i])))
    return mu


def value_iteration(
    disc: DiscretizedAugmentation,
    policy: PolicyHandle,
    lam: float,
    tol: float = 1e-10,
    max_sweeps: int = 200_000,
) -> np.ndarray:
    """Fixed point of the policy Bellman backup on the discretized grid.

    Target pairs are boundary conditions pinned to the terminal cost; sweeps
    update transient pairs only. For ``gamma < 1`` successive sweep
    differences are asserted to contract at rate ``gamma``; for ``gamma = 1``
    convergence relies on transience and the sweep cap guards the rest.
    """
    aug, base = disc.aug, disc.aug.base
    gamma = base.gamma
    target = disc.is_target()
    v = np.zeros(disc.n_pairs)
    v[target] = [aug.terminal_cost(s, lam) for s in disc.ss[target]]
    mu = _policy_matrix(disc, policy)
    cost = base.cost[disc.xs]  # (n_pairs, n_actions); zero rows at target
    prev_diff = None
    for _ in range(max_sweeps):
        succ_v = v[disc.succ_id]  # (n_pairs, n_actions, n_states)
        backup = (mu * (cost + gamma * np.sum(disc.succ_p * succ_v, axis=2))).sum(axis=1)
        new_v = np.where(target, v, backup)
        diff = float(np.max(np.abs(new_v - v)))
        v = new_v
        if gamma < 1.0 and prev_diff is not None and prev_diff > 1e-13:
            assert diff <= gamma * prev_diff + 1e-12, "Bellman sweep failed to contract"
        prev_diff = diff
        if diff <= tol:
            return v
    raise NoConvergence(f"value iteration did not converge in {max_sweeps} sweeps")


def pair_transition_matrix(
    disc: DiscretizedAugmentation, policy: PolicyHandle
) -> np.ndarray:
    """Policy-averaged transition matrix over the discretized pairs."""
    mu = _policy_matrix(disc, policy)
    n = disc.n_pairs
    P = np.zeros((n, n))
    for i in range(n):
        for a in range(disc.aug.base.n_actions):
            w = mu[i, a]
            if w == 0.0:
                continue
            ids = disc.succ_id[i, a]
            ps = disc.succ_p[i, a]
            for slot in np.flatnonzero(ps > 0.0):
                P[i, ids[slot]] += w * ps[slot]
    return P


def occupation_measure_matrix(
    P: np.ndarray, initial: int, gamma: float
) -> np.ndarray:
    """Solve ``(I - gamma P^T) d = (1 - gamma) e_init`` for the occupation measure."""
    if gamma >= 1.0:
        raise InvalidDiscount("occupation measure requires gamma < 1")
    n = len(P)
    rhs = np.zeros(n)
    rhs[initial] = 1.0 - gamma
    return np.linalg.solve(np.eye(n) - gamma * P.T, rhs)


def occupation_measure_base(
    mdp: FiniteMdp, policy: PolicyHandle, gamma: float | None = None
) -> np.ndarray:
    """Occupation measure of the base chain under ``policy``, by linear solve."""
    gamma = mdp.gamma if gamma is None else gamma
    mu = np.stack([policy.probs(x) for x in range(mdp.n_states)])
    P = np.einsum("xa,xay->xy", mu, mdp.transition)
    return occupation_measure_matrix(P, mdp.initial_state, gamma)


def occupation_measure_augmented(
    disc: DiscretizedAugmentation, policy: PolicyHandle
) -> np.ndarray:
    return occupation_measure_matrix(
        pair_transition_matrix(disc, policy), disc.initial_id, disc.aug.base.gamma
    )


def grad_lambda_dp(
    disc: DiscretizedAugmentation, policy: PolicyHandle, alpha: float
) -> float:
    """Multiplier gradient of the augmented value at the initial pair.

    ``(1 / ((1 - gamma)(1 - alpha))) * sum over target pairs of d(x, s) (-s)^+``
    with the occupation measure obtained by exact linear solve.
    """
    gamma = disc.aug.base.gamma
    if gamma >= 1.0:
        raise InvalidDiscount("multiplier gradient requires gamma < 1")
    d = occupation_measure_augmented(disc, policy)
    tgt = disc.is_target()
    hinge = np.maximum(-disc.ss[tgt], 0.0)
    return float(np.dot(d[tgt], hinge) / ((1.0 - gamma) * (1.0 - alpha)))


def critic_normal_equations(
    disc: DiscretizedAugmentation,
    policy: PolicyHandle,
    phi: np.ndarray,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``A v = b`` system solved by the linear critic's mean dynamics.

    ``A = Phi^T Diag(d) (I - gamma P) Phi`` and ``b = Phi^T Diag(d) c_bar``,
    with ``d`` the occupation measure, ``P`` the pair transition matrix, and
    ``c_bar`` the policy-averaged augmented cost (terminal cost at target
    pairs).
    """
    aug = disc.aug
    gamma = aug.base.gamma
    P = pair_transition_matrix(disc, policy)
    d = occupation_measure_matrix(P, disc.initial_id, gamma)
    mu = _policy_matrix(disc, policy)
    c_bar = (mu * aug.base.cost[disc.xs]).sum(axis=1)
    tgt = disc.is_target()
    c_bar[tgt] = [aug.terminal_cost(s, lam) for s in disc.ss[tgt]]
    D = np.diag(d)
    A = phi.T @ D @ (np.eye(disc.n_pairs) - gamma * P) @ phi
    b = phi.T @ D @ c_bar
    return A, b
