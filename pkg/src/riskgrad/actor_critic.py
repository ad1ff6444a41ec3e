"""Incremental actor-critic on the augmented MDP with a linear TD(0) critic.

Four coupled iterates move on separated timescales: the critic weights are
fastest, then the quantile iterate, then the policy, and the multiplier is
slowest. The quantile iterate can move every step via a two-sided perturbation
of the critic's value at the initial state, or only at episode ends from the
terminal-budget violation indicator. The chance-constrained variant updates
everything episodically.

Each run is strictly single-threaded: the coupled iterates mutate one
parameter record and one weight vector in a fixed per-step order. Independent
runs (seeds, hyperparameters) parallelize at the process level.

Sampling modes: the default draws update states from the discount-weighted
occupation measure via geometric restarts (the premise under which the
per-step estimators are unbiased). The plain on-policy mode follows the chain
without restarts; its per-step gradient estimates carry the well-known
discount-weighting bias and the mode exists for comparison only.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .augmented import AugmentedMdp, AugmentedTrajectory, AugState, augmented_step, simulate_augmented_episode
from .errors import NotTerminal
from .pg import LagrangianState, nu_box
from .policies import BoltzmannPolicy, PolicyParams
from .schedules import StepSchedule


@dataclass
class CriticWeights:
    """Linear value approximation ``V(x, s) ~= v . phi(x, s)``."""

    v: np.ndarray
    features: object  # feature map over (x, s)

    def value(self, x: int, s: float) -> float:
        return float(self.v @ self.features((x, s)))


class TdTransition(NamedTuple):
    """One observed augmented transition. ``terminal`` marks an episode end
    whose bootstrap value is zero (used by the episodic variant)."""

    x: int
    s: float
    a: int
    cost: float
    x_next: int
    s_next: float
    terminal: bool = False


def td_error(weights: CriticWeights, transition: TdTransition, gamma: float) -> float:
    phi = weights.features((transition.x, transition.s))
    boot = 0.0
    if not transition.terminal:
        boot = float(weights.v @ weights.features((transition.x_next, transition.s_next)))
    return float(transition.cost + gamma * boot - weights.v @ phi)


def critic_update(
    weights: CriticWeights, transition: TdTransition, zeta4: float, gamma: float
) -> CriticWeights:
    phi = weights.features((transition.x, transition.s))
    delta = td_error(weights, transition, gamma)
    return CriticWeights(v=weights.v + zeta4 * delta * phi, features=weights.features)


def spsa_nu_step(
    state: LagrangianState,
    weights: CriticWeights,
    x0: int,
    delta_k: float,
    zeta3: float,
) -> float:
    """Quantile move from a two-sided perturbation of the critic at x0.

    The perturbed coordinate is the scalar budget, so deterministic two-sided
    differencing suffices (no random directions needed in one dimension).
    """
    if delta_k <= 0.0:
        raise ValueError("perturbation width must be positive")
    up = weights.value(x0, state.nu + delta_k)
    down = weights.value(x0, state.nu - delta_k)
    grad = state.lam + (up - down) / (2.0 * delta_k)
    return state.project_nu(state.nu - zeta3 * grad)


def semi_trajectory_nu_step(
    state: LagrangianState, terminal_s: float, alpha: float, zeta3: float
) -> float:
    """Quantile move applied at episode end from the violation indicator."""
    hit = 1.0 if terminal_s <= 0.0 else 0.0
    grad = state.lam - state.lam * hit / (1.0 - alpha)
    return state.project_nu(state.nu - zeta3 * grad)


def lambda_gradient_sample(
    state: LagrangianState,
    transition: TdTransition,
    alpha: float,
    beta: float,
    gamma: float,
    target_state: int,
) -> float:
    """Per-step multiplier-gradient sample; ``nu - beta`` except at target hits."""
    bump = 0.0
    if transition.x == target_state:
        bump = max(-transition.s, 0.0) / ((1.0 - alpha) * (1.0 - gamma))
    return state.nu - beta + bump


def actor_lambda_step(
    state: LagrangianState,
    policy: BoltzmannPolicy,
    transition: TdTransition,
    weights: CriticWeights,
    zeta1: float,
    zeta2: float,
    alpha: float,
    beta: float,
    gamma: float,
    target_state: int,
) -> LagrangianState:
    """Policy descent along the TD-error-weighted score, multiplier ascent."""
    delta = td_error(weights, transition, gamma)
    grad_log = policy.grad_log((transition.x, transition.s), transition.a)
    theta = state.theta.project(
        state.theta.theta - (zeta2 / (1.0 - gamma)) * grad_log * delta
    )
    lam = state.project_lam(
        state.lam
        + zeta1 * lambda_gradient_sample(state, transition, alpha, beta, gamma, target_state)
    )
    return replace(
        state,
        theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound),
        lam=lam,
    )


def cc_episode_update(
    state: LagrangianState,
    weights: CriticWeights,
    episode: AugmentedTrajectory,
    policy: BoltzmannPolicy,
    zeta1: float,
    zeta2: float,
    zeta3: float,
    beta: float,
    aug: AugmentedMdp,
) -> tuple[LagrangianState, CriticWeights]:
    """End-of-episode update for the chance-constrained variant.

    The critic and policy sums run over every step including the terminal one,
    whose cost is the violation penalty and whose bootstrap is zero; steps are
    discount-weighted (weights are all one in the undiscounted case). The
    multiplier moves on the episode-level violation indicator.
    """
    target = aug.base.target_state
    if episode.terminal_state != target:
        raise NotTerminal("episode did not end at the target state")
    gamma = aug.base.gamma
    v_inc = np.zeros_like(weights.v)
    theta_inc = np.zeros_like(state.theta.theta)
    disc = 1.0
    for h in range(len(episode) + 1):
        if h < len(episode):
            tr = TdTransition(
                x=int(episode.states[h]),
                s=float(episode.s_path[h]),
                a=int(episode.actions[h]),
                cost=float(episode.costs[h]),
                x_next=target if h + 1 == len(episode) else int(episode.states[h + 1]),
                s_next=float(episode.s_path[h + 1]),
            )
        else:
            tr = TdTransition(
                x=target,
                s=episode.terminal_s,
                a=0,
                cost=aug.terminal_cost(episode.terminal_s, state.lam),
                x_next=target,
                s_next=0.0,
                terminal=True,
            )
        delta = td_error(weights, tr, gamma)
        v_inc += disc * delta * weights.features((tr.x, tr.s))
        if h < len(episode):
            theta_inc += disc * delta * policy.grad_log((tr.x, tr.s), tr.a)
        disc *= gamma
    new_v = weights.v + zeta3 * v_inc
    theta = state.theta.project(state.theta.theta - zeta2 * theta_inc)
    hit = 1.0 if episode.terminal_s <= 0.0 else 0.0
    lam = state.project_lam(state.lam + zeta1 * (-beta + hit))
    return (
        replace(
            state,
            theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound),
            lam=lam,
        ),
        CriticWeights(v=new_v, features=weights.features),
    )


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def observe_transition(
    aug: AugmentedMdp,
    policy: BoltzmannPolicy,
    state: AugState,
    rng: np.random.Generator,
    lam: float,
) -> tuple[TdTransition, AugState]:
    """Draw an action and successor for one step of the augmented chain.

    At the target the cost is the terminal cost and the chain moves to the
    zero-budget target pair.
    """
    x, s = state
    p = policy.probs((x, s))
    a = int(rng.choice(aug.base.n_actions, p=p))
    if x == aug.base.target_state:
        succ = AugState(aug.base.target_state, 0.0)
        cost = aug.terminal_cost(s, lam)
    else:
        succ, cost = augmented_step(aug, state, a, rng)
    return TdTransition(x=x, s=s, a=a, cost=cost, x_next=succ.x, s_next=succ.s), succ


@dataclass
class AcConfig:
    variant: str = "cvar"  # "cvar" | "chance"
    nu_mode: str = "semi"  # cvar only: "semi" | "spsa"
    sampling: str = "occupation"  # "occupation" | "on_policy"
    risk_neutral: bool = False
    alpha: float = 0.95
    beta: float = 1.0
    threshold: float = 0.0  # chance: initial budget level
    steps_inner: int = 200_000
    max_outer: int = 8
    move_tol: float = 0.0  # 0 disables the early exit
    move_window: int = 5_000
    lam_eps_frac: float = 0.01
    lam0: float = 0.0
    lam_max0: float = 50.0
    nu0: float = 0.0
    log_every: int = 200

    def __post_init__(self):
        if self.variant not in ("cvar", "chance"):
            raise ValueError("variant must be cvar or chance")
        if self.nu_mode not in ("semi", "spsa"):
            raise ValueError("nu_mode must be semi or spsa")
        if self.sampling not in ("occupation", "on_policy"):
            raise ValueError("sampling must be occupation or on_policy")


@dataclass
class AcResult:
    state: LagrangianState
    weights: CriticWeights
    status: str  # "converged" | "likely_infeasible"
    steps: int
    outer_rounds: int
    history: list[dict] = field(default_factory=list, repr=False)


def run_ac(
    aug: AugmentedMdp,
    policy: BoltzmannPolicy,
    critic_features,
    config: AcConfig,
    schedule: StepSchedule,
    rng: np.random.Generator,
    telemetry=None,
) -> AcResult:
    if config.variant == "chance":
        return _run_ac_chance(aug, policy, critic_features, config, schedule, rng, telemetry)
    return _run_ac_cvar(aug, policy, critic_features, config, schedule, rng, telemetry)


def _initial_state(aug: AugmentedMdp, policy: BoltzmannPolicy, config: AcConfig) -> LagrangianState:
    bound = nu_box(aug.base) if aug.base.gamma < 1.0 else float("inf")
    return LagrangianState(
        nu=0.0 if config.risk_neutral else config.nu0,
        theta=PolicyParams(
            theta=policy.params.theta.copy(), box_bound=policy.params.box_bound
        ),
        lam=0.0 if config.risk_neutral else config.lam0,
        lam_max=config.lam_max0,
        nu_bound=bound,
    )


def _run_ac_cvar(
    aug, policy, critic_features, config, schedule, rng, telemetry
) -> AcResult:
    base = aug.base
    gamma = base.gamma
    state = _initial_state(aug, policy, config)
    weights = CriticWeights(v=np.zeros(critic_features.dimension), features=critic_features)
    chain = AugState(base.initial_state, state.nu)
    history: list[dict] = []
    total = 0
    outer_rounds = 0
    ema_td = 0.0
    ema_res = np.zeros(critic_features.dimension)

    for outer_rounds in range(1, config.max_outer + 1):
        moves: deque[float] = deque(maxlen=config.move_window)
        for _ in range(config.steps_inner):
            k = state.iteration + 1
            transition, succ = observe_transition(aug, policy, chain, rng, state.lam)
            delta = td_error(weights, transition, gamma)
            weights = critic_update(weights, transition, schedule.zeta4(k), gamma)

            prev_nu, prev_lam = state.nu, state.lam
            prev_theta = state.theta.theta
            if not config.risk_neutral:
                if config.nu_mode == "spsa":
                    nu = spsa_nu_step(
                        state, weights, base.initial_state, schedule.delta(k), schedule.zeta3(k)
                    )
                elif transition.x == base.target_state:
                    nu = semi_trajectory_nu_step(
                        state, transition.s, config.alpha, schedule.zeta3(k)
                    )
                else:
                    nu = state.nu
                state = replace(state, nu=nu)
                state = actor_lambda_step(
                    state,
                    policy,
                    transition,
                    weights,
                    schedule.zeta1(k),
                    schedule.zeta2(k),
                    config.alpha,
                    config.beta,
                    gamma,
                    base.target_state,
                )
            else:
                grad_log = policy.grad_log((transition.x, transition.s), transition.a)
                theta = state.theta.project(
                    state.theta.theta - (schedule.zeta2(k) / (1.0 - gamma)) * grad_log * delta
                )
                state = replace(
                    state, theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound)
                )
            state = replace(state, iteration=k)
            policy.params = state.theta
            total += 1

            # restart the chain after target hits (at the fresh quantile) and,
            # in occupation mode, geometrically with probability 1 - gamma
            if transition.x == base.target_state:
                chain = AugState(base.initial_state, state.nu)
            elif config.sampling == "occupation" and rng.random() < 1.0 - gamma:
                chain = AugState(base.initial_state, state.nu)
            else:
                chain = succ

            ema_td = 0.99 * ema_td + 0.01 * abs(delta)
            ema_res = 0.99 * ema_res + 0.01 * delta * weights.features(
                (transition.x, transition.s)
            )
            move = max(
                abs(state.nu - prev_nu),
                float(np.max(np.abs(state.theta.theta - prev_theta))),
                abs(state.lam - prev_lam),
            )
            moves.append(move)
            if telemetry is not None and k % config.log_every == 0:
                row = {
                    "k": k,
                    "nu": state.nu,
                    "lambda": state.lam,
                    "lambda_max": state.lam_max,
                    "td_abs": ema_td,
                    "critic_residual": float(np.linalg.norm(ema_res)),
                }
                history.append(row)
                telemetry.log(row)
            if (
                config.move_tol > 0.0
                and len(moves) == config.move_window
                and np.mean(moves) < config.move_tol
            ):
                break
        pinned = (
            not config.risk_neutral
            and abs(state.lam - state.lam_max) <= config.lam_eps_frac * state.lam_max
        )
        if pinned:
            state = replace(state, lam_max=2.0 * state.lam_max)
            continue
        # completing the inner schedule without the multiplier pinning at its
        # cap is the tuning-phase convergence criterion
        return AcResult(
            state=state,
            weights=weights,
            status="converged",
            steps=total,
            outer_rounds=outer_rounds,
            history=history,
        )
    return AcResult(
        state=state,
        weights=weights,
        status="likely_infeasible",
        steps=total,
        outer_rounds=outer_rounds,
        history=history,
    )


def _run_ac_chance(
    aug, policy, critic_features, config, schedule, rng, telemetry
) -> AcResult:
    base = aug.base
    state = _initial_state(aug, policy, config)
    weights = CriticWeights(v=np.zeros(critic_features.dimension), features=critic_features)
    history: list[dict] = []
    total = 0
    outer_rounds = 0

    for outer_rounds in range(1, config.max_outer + 1):
        for _ in range(config.steps_inner):
            k = state.iteration + 1
            episode = simulate_augmented_episode(aug, policy, rng, s0=config.threshold)
            if config.risk_neutral:
                frozen = replace(state, lam=0.0)
                new_state, weights = cc_episode_update(
                    frozen, weights, episode, policy,
                    0.0, schedule.zeta2(k), schedule.zeta3(k), config.beta, aug,
                )
                state = replace(new_state, lam=0.0, iteration=k)
            else:
                state, weights = cc_episode_update(
                    state, weights, episode, policy,
                    schedule.zeta1(k), schedule.zeta2(k), schedule.zeta3(k),
                    config.beta, aug,
                )
                state = replace(state, iteration=k)
            policy.params = state.theta
            total += 1
            if telemetry is not None and k % config.log_every == 0:
                row = {
                    "k": k,
                    "nu": state.nu,
                    "lambda": state.lam,
                    "lambda_max": state.lam_max,
                    "td_abs": float("nan"),
                    "critic_residual": float("nan"),
                }
                history.append(row)
                telemetry.log(row)
        pinned = (
            not config.risk_neutral
            and abs(state.lam - state.lam_max) <= config.lam_eps_frac * state.lam_max
        )
        if pinned:
            state = replace(state, lam_max=2.0 * state.lam_max)
            continue
        return AcResult(
            state=state,
            weights=weights,
            status="converged",
            steps=total,
            outer_rounds=outer_rounds,
            history=history,
        )
    return AcResult(
        state=state,
        weights=weights,
        status="likely_infeasible",
        steps=total,
        outer_rounds=outer_rounds,
        history=history,
    )
