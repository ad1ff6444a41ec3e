from __future__ import annotations

import numpy as np
import pytest

from riskgrad import (
    AugmentedMdp,
    AugState,
    TerminalStep,
    augmented_step,
    augmented_trajectory_cost,
    simulate_augmented_episode,
)
from riskgrad.mdp import discounted_total

from conftest import AugmentedView, chain_mdp, layered_mdp, random_policy, uniform_policy


def _cvar_aug(mdp, alpha=0.5, lam=0.0, s0=0.0):
    return AugmentedMdp(base=mdp, variant="cvar", alpha=alpha, initial_s=s0, lam=lam)


def test_budget_recursion_hand_value(rng):
    mdp = chain_mdp([0.0, 0.0], gamma=0.95, dcosts=[1.0, 1.0])
    aug = _cvar_aug(mdp)
    (x2, s2), cost = augmented_step(aug, AugState(0, 3.0), 0, rng)
    assert s2 == pytest.approx(2.0 / 0.95, abs=1e-12)
    assert cost == 0.0
    assert x2 == 1


def test_budget_recursion_identity_cases(rng):
    # zero constraint cost at gamma=1 leaves the budget unchanged
    mdp = chain_mdp([1.0], gamma=1.0, dcosts=[0.0])
    aug = AugmentedMdp(base=mdp, variant="chance", initial_s=0.0)
    (_, s2), _ = augmented_step(aug, AugState(0, 4.2), 0, rng)
    assert s2 == 4.2
    # zero budget and zero cost stay at zero regardless of discounting
    mdp2 = chain_mdp([1.0], gamma=0.5, dcosts=[0.0])
    (_, s2b), _ = augmented_step(_cvar_aug(mdp2), AugState(0, 0.0), 0, rng)
    assert s2b == 0.0


def test_step_from_target_raises(rng):
    mdp = chain_mdp([1.0], gamma=0.9)
    aug = _cvar_aug(mdp)
    with pytest.raises(TerminalStep):
        augmented_step(aug, AugState(mdp.target_state, 0.0), 0, rng)


def test_terminal_cost_values():
    mdp = chain_mdp([1.0], gamma=0.9)
    cvar = _cvar_aug(mdp, alpha=0.5, lam=2.0)
    assert cvar.terminal_cost(-1.0) == pytest.approx(4.0)
    assert cvar.terminal_cost(0.0) == 0.0
    assert cvar.terminal_cost(3.7) == 0.0
    chance = AugmentedMdp(base=mdp, variant="chance", lam=3.0)
    assert chance.terminal_cost(0.0) == 3.0  # boundary counts as violation
    assert chance.terminal_cost(-0.5) == 3.0
    assert chance.terminal_cost(1e-9) == 0.0


def test_trajectory_cost_multiplier_off(rng):
    mdp = layered_mdp(np.random.default_rng(2), gamma=0.8)
    aug = _cvar_aug(mdp, lam=0.0, s0=0.3)
    traj = simulate_augmented_episode(aug, AugmentedView(uniform_policy(mdp)), rng)
    assert augmented_trajectory_cost(aug, traj) == pytest.approx(traj.g_total, abs=1e-12)


def test_trajectory_cost_single_step_hand_value(rng):
    # C=1, D=0, s0=-1, lam=1, alpha=0.5, gamma=0.95: the terminal budget is
    # -1/gamma, so the discounted terminal cost is gamma * (1/gamma) * 2 = 2
    # and the total is exactly 3 = g + 2 * (j - s0)^+
    mdp = chain_mdp([1.0], gamma=0.95, dcosts=[0.0])
    aug = _cvar_aug(mdp, alpha=0.5, lam=1.0, s0=-1.0)
    traj = simulate_augmented_episode(aug, AugmentedView(uniform_policy(mdp)), rng)
    total = augmented_trajectory_cost(aug, traj)
    assert total == pytest.approx(3.0, abs=1e-12)
    identity = traj.g_total + (1.0 / 0.5) * max(traj.j_total - (-1.0), 0.0)
    assert total == pytest.approx(identity, abs=1e-12)


def test_trajectory_cost_slack_budget(rng):
    mdp = chain_mdp([1.0, 1.0], gamma=0.9, dcosts=[0.5, 0.5])
    aug = _cvar_aug(mdp, lam=2.0, s0=50.0)  # budget far above any realizable j
    traj = simulate_augmented_episode(aug, AugmentedView(uniform_policy(mdp)), rng)
    assert augmented_trajectory_cost(aug, traj) == pytest.approx(traj.g_total, abs=1e-12)


def test_augmented_cost_identity_random_episodes(rng):
    """Discounted augmented total == g + lam/(1-alpha) (j - s0)^+ throughout."""
    for seed in range(6):
        mdp = layered_mdp(np.random.default_rng(seed), n_states=4, gamma=0.7)
        policy = AugmentedView(random_policy(mdp, np.random.default_rng(50 + seed)))
        lam = float(np.random.default_rng(seed).uniform(0.0, 3.0))
        s0 = float(np.random.default_rng(seed + 1).uniform(-2.0, 2.0))
        aug = _cvar_aug(mdp, alpha=0.6, lam=lam, s0=s0)
        for _ in range(400):
            traj = simulate_augmented_episode(aug, policy, rng)
            total = augmented_trajectory_cost(aug, traj)
            identity = traj.g_total + lam / (1 - 0.6) * max(traj.j_total - s0, 0.0)
            assert abs(total - identity) <= 1e-9


def test_budget_recursion_telescopes_back_to_start(rng):
    for seed in range(4):
        mdp = layered_mdp(np.random.default_rng(seed), n_states=4, gamma=0.65)
        aug = _cvar_aug(mdp, s0=1.3)
        policy = AugmentedView(uniform_policy(mdp))
        for _ in range(100):
            traj = simulate_augmented_episode(aug, policy, rng)
            t = len(traj)
            recovered = mdp.gamma**t * traj.terminal_s + discounted_total(
                traj.dcosts, mdp.gamma
            )
            assert abs(recovered - 1.3) <= 1e-9


def test_chance_indicator_matches_violation_exactly(rng):
    for seed in range(4):
        mdp = layered_mdp(np.random.default_rng(seed), n_states=4, gamma=1.0)
        s0 = float(np.random.default_rng(seed).uniform(0.0, 2.0))
        aug = AugmentedMdp(base=mdp, variant="chance", initial_s=s0)
        policy = AugmentedView(uniform_policy(mdp))
        for _ in range(200):
            traj = simulate_augmented_episode(aug, policy, rng)
            assert (traj.terminal_s <= 0.0) == (traj.j_total >= s0)
