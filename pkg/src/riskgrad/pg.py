"""Trajectory-batch policy gradient for the constrained Lagrangian.

One iteration samples a batch of episodes under the current policy and moves
the three iterates with one shared batch, each on its own timescale:

* quantile iterate ``nu`` (fastest) — descends the sub-gradient
  ``lam * (1 - mean 1{J >= nu} / (1 - alpha))``;
* policy ``theta`` (middle) — descends the score-weighted cost
  ``mean[ score * (G + lam/(1-alpha) * (J - nu) 1{J >= nu}) ]``;
* multiplier ``lam`` (slowest) — ascends
  ``nu - beta + mean[(J - nu) 1{J >= nu}] / (1 - alpha)``.

All three are projected onto their boxes. The chance-constrained variant
drops ``nu`` and swaps the hinge for trajectory-level violation indicators.
The outer loop doubles ``lam_max`` whenever the multiplier converges onto its
cap (the spurious-fixed-point guard) and reports likely infeasibility when
the doubling budget runs out.

Batches are sampled vectorized in lockstep; gradient reductions over the
batch are exact rearrangements of the per-trajectory sums (see
``batch_gradients``), verified against :func:`estimate_gradients` in tests.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyBatch
from .mdp import BatchRollout, FiniteMdp, Trajectory, sample_trajectory_batch
from .policies import BoltzmannPolicy, PolicyParams
from .risk import SampleBatch, cvar_alpha
from .schedules import StepSchedule


def nu_box(mdp: FiniteMdp) -> float:
    """Radius of the quantile-iterate box, ``d_max / (1 - gamma)``."""
    if mdp.gamma >= 1.0:
        return float("inf")
    return mdp.d_max / (1.0 - mdp.gamma)


@dataclass
class LagrangianState:
    """The optimized triple plus its projection boxes and step counter."""

    nu: float
    theta: PolicyParams
    lam: float
    lam_max: float
    nu_bound: float
    iteration: int = 0

    def project_nu(self, nu: float) -> float:
        return float(np.clip(nu, -self.nu_bound, self.nu_bound))

    def project_lam(self, lam: float) -> float:
        return float(np.clip(lam, 0.0, self.lam_max))


def _scores(batch: list[Trajectory]) -> list[np.ndarray]:
    if not batch:
        raise EmptyBatch("gradient estimation needs a nonempty batch")
    missing = [t for t in batch if t.score is None]
    if missing:
        raise ValueError("trajectories must carry scores (see attach_scores)")
    return [t.score for t in batch]


def estimate_gradients(
    batch: list[Trajectory],
    state: LagrangianState,
    alpha: float,
    beta: float,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, float]:
    """Sampled (or, with weights, exact) gradients from one batch.

    ``weights`` replaces the ``1/N`` batch mean with given probabilities, so
    feeding the full trajectory enumeration reproduces the exact gradients.
    """
    scores = _scores(batch)
    n = len(batch)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    inv = 1.0 / (1.0 - alpha)
    g = np.array([t.g_total for t in batch])
    j = np.array([t.j_total for t in batch])
    hit = (j >= state.nu).astype(float)
    g_nu = state.lam * (1.0 - inv * float(np.dot(w, hit)))
    coeff = g + state.lam * inv * (j - state.nu) * hit
    g_theta = np.zeros_like(state.theta.theta)
    for wi, ci, si in zip(w, coeff, scores):
        if ci != 0.0:
            g_theta += wi * ci * si
    g_lambda = state.nu - beta + inv * float(np.dot(w, (j - state.nu) * hit))
    return float(g_nu), g_theta, float(g_lambda)


def pg_step(
    state: LagrangianState,
    batch: list[Trajectory],
    schedule: StepSchedule,
    alpha: float,
    beta: float,
    weights: np.ndarray | None = None,
) -> LagrangianState:
    """One projected three-timescale update; all three moves share the batch."""
    g_nu, g_theta, g_lambda = estimate_gradients(batch, state, alpha, beta, weights)
    k = state.iteration + 1
    nu = state.project_nu(state.nu - schedule.zeta3(k) * g_nu)
    theta = state.theta.project(state.theta.theta - schedule.zeta2(k) * g_theta)
    lam = state.project_lam(state.lam + schedule.zeta1(k) * g_lambda)
    return replace(
        state,
        nu=nu,
        theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound),
        lam=lam,
        iteration=k,
    )


def cc_pg_step(
    state: LagrangianState,
    batch: list[Trajectory],
    schedule: StepSchedule,
    threshold: float,
    beta: float,
    weights: np.ndarray | None = None,
) -> LagrangianState:
    """Two-timescale chance-constrained update: theta fast, lambda slow."""
    scores = _scores(batch)
    n = len(batch)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    g = np.array([t.g_total for t in batch])
    j = np.array([t.j_total for t in batch])
    hit = (j >= threshold).astype(float)
    coeff = g + state.lam * hit
    g_theta = np.zeros_like(state.theta.theta)
    for wi, ci, si in zip(w, coeff, scores):
        if ci != 0.0:
            g_theta += wi * ci * si
    g_lambda = -beta + float(np.dot(w, hit))
    k = state.iteration + 1
    theta = state.theta.project(state.theta.theta - schedule.zeta2(k) * g_theta)
    lam = state.project_lam(state.lam + schedule.zeta1(k) * g_lambda)
    return replace(
        state,
        theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound),
        lam=lam,
        iteration=k,
    )


# ---------------------------------------------------------------------------
# vectorized batch path used by the driver
# ---------------------------------------------------------------------------


def batch_gradients(
    rollout: BatchRollout,
    mdp: FiniteMdp,
    prob_table: np.ndarray,
    feature_matrix: np.ndarray,
    coeff: np.ndarray,
) -> np.ndarray:
    """Mean of ``coeff_j * score_j`` without materializing per-episode scores.

    Rearranges the sum over episodes and steps into state-action weighted
    counts: for tabulated features ``Phi`` the reduction is
    ``(Wxa - mu * Wx) @ Phi`` with ``Wxa[x, a]`` the coefficient-weighted
    visit counts.
    """
    n, m = mdp.n_states, mdp.n_actions
    valid = rollout.states >= 0
    step_w = np.broadcast_to(coeff[:, None], rollout.states.shape)[valid]
    flat = rollout.states[valid] * m + rollout.actions[valid]
    wxa = np.bincount(flat, weights=step_w, minlength=n * m).reshape(n, m)
    wx = wxa.sum(axis=1)
    block = wxa - prob_table * wx[:, None]
    return (block.T @ feature_matrix) / len(rollout)


@dataclass
class PgConfig:
    """Driver configuration for one optimization run."""

    mode: str = "cvar"  # "cvar" | "chance" | "neutral"
    alpha: float = 0.95
    beta: float = 1.0
    threshold: float = 0.0  # chance mode: cost level whose excess probability is bounded
    n_batch: int = 2_000
    max_inner: int = 400
    max_outer: int = 8
    move_tol: float = 1e-4
    move_window: int = 50
    lam_eps_frac: float = 0.01
    lam0: float = 0.0
    lam_max0: float = 50.0
    nu0: float = 0.0

    def __post_init__(self):
        if self.mode not in ("cvar", "chance", "neutral"):
            raise ValueError("mode must be cvar, chance, or neutral")


@dataclass
class PgResult:
    state: LagrangianState
    status: str  # "converged" | "likely_infeasible" | "budget_exhausted"
    iterations: int
    outer_rounds: int
    history: list[dict] = field(default_factory=list, repr=False)


def run_pg(
    mdp: FiniteMdp,
    policy: BoltzmannPolicy,
    config: PgConfig,
    schedule: StepSchedule,
    rng: np.random.Generator,
    telemetry=None,
    state: LagrangianState | None = None,
) -> PgResult:
    """Outer loop of the trajectory-based method, any constraint mode.

    The window-averaged max-norm parameter movement decides inner-loop
    convergence; a multiplier pinned within ``lam_eps_frac * lam_max`` of its
    cap triggers doubling. The step-size index continues across doubling
    rounds and across re-invocations (passing back a returned state resumes
    where it stopped, so re-running a converged state returns quickly).
    """
    feature_matrix = _feature_matrix(policy, mdp.n_states)
    if state is None:
        state = LagrangianState(
            nu=config.nu0,
            theta=PolicyParams(
                theta=policy.params.theta.copy(), box_bound=policy.params.box_bound
            ),
            lam=config.lam0 if config.mode != "neutral" else 0.0,
            lam_max=config.lam_max0,
            nu_bound=nu_box(mdp),
        )
    inv = 1.0 / (1.0 - config.alpha)
    history: list[dict] = []
    outer_rounds = 0
    total_inner = 0

    for outer_rounds in range(1, config.max_outer + 1):
        moves: deque[float] = deque(maxlen=config.move_window)
        converged = False
        for _ in range(config.max_inner):
            prob_table = _prob_table(policy, state, feature_matrix)
            rollout = sample_trajectory_batch(mdp, prob_table, config.n_batch, rng)
            g, j = rollout.g, rollout.j
            k = state.iteration + 1
            if config.mode == "cvar":
                hit = (j >= state.nu).astype(float)
                coeff = g + state.lam * inv * (j - state.nu) * hit
                g_nu = state.lam * (1.0 - inv * hit.mean())
                g_lambda = state.nu - config.beta + inv * float(
                    np.mean((j - state.nu) * hit)
                )
                nu = state.project_nu(state.nu - schedule.zeta3(k) * g_nu)
                lam = state.project_lam(state.lam + schedule.zeta1(k) * g_lambda)
            elif config.mode == "chance":
                hit = (j >= config.threshold).astype(float)
                coeff = g + state.lam * hit
                g_nu = 0.0
                g_lambda = -config.beta + float(hit.mean())
                nu = state.nu
                lam = state.project_lam(state.lam + schedule.zeta1(k) * g_lambda)
            else:
                coeff = g
                g_nu = g_lambda = 0.0
                nu, lam = state.nu, 0.0
            g_theta = batch_gradients(rollout, mdp, prob_table, feature_matrix, coeff)
            theta = state.theta.project(state.theta.theta - schedule.zeta2(k) * g_theta)

            move = max(
                abs(nu - state.nu),
                float(np.max(np.abs(theta - state.theta.theta))),
                abs(lam - state.lam),
            )
            moves.append(move)
            state = replace(
                state,
                nu=nu,
                theta=PolicyParams(theta=theta, box_bound=state.theta.box_bound),
                lam=lam,
                iteration=k,
            )
            policy.params = state.theta
            total_inner += 1
            row = {
                "k": k,
                "nu": state.nu,
                "lambda": state.lam,
                "lambda_max": state.lam_max,
                "g_nu": g_nu,
                "g_theta_norm": float(np.linalg.norm(g_theta)),
                "g_lambda": g_lambda,
                "mean_g": float(g.mean()),
                "cvar_g": cvar_alpha(SampleBatch(g), config.alpha),
                "mean_j": float(j.mean()),
                "cvar_j": cvar_alpha(SampleBatch(j), config.alpha),
            }
            history.append(row)
            if telemetry is not None:
                telemetry.log(row)
            if len(moves) == config.move_window and np.mean(moves) < config.move_tol:
                converged = True
                break

        pinned = (
            config.mode != "neutral"
            and abs(state.lam - state.lam_max) <= config.lam_eps_frac * state.lam_max
        )
        if pinned:
            state = replace(state, lam_max=2.0 * state.lam_max)
            continue
        status = "converged" if converged else "budget_exhausted"
        return PgResult(
            state=state,
            status=status,
            iterations=total_inner,
            outer_rounds=outer_rounds,
            history=history,
        )
    return PgResult(
        state=state,
        status="likely_infeasible",
        iterations=total_inner,
        outer_rounds=outer_rounds,
        history=history,
    )


def _feature_matrix(policy: BoltzmannPolicy, n_states: int) -> np.ndarray:
    feats = policy.features
    if hasattr(feats, "matrix"):
        return feats.matrix()
    return np.stack([feats(x) for x in range(n_states)])


def _prob_table(
    policy: BoltzmannPolicy, state: LagrangianState, feature_matrix: np.ndarray
) -> np.ndarray:
    scores = feature_matrix @ state.theta.theta.T  # (n_states, n_actions)
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)
