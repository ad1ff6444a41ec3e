from __future__ import annotations

import json

import numpy as np
import pytest

from riskgrad import (
    BudgetExceeded,
    FiniteMdp,
    HorizonExceeded,
    InvalidDiscount,
    enumerate_trajectories,
    load_mdp,
    sample_occupation_state,
    sample_occupation_states,
    sample_trajectory,
    sample_trajectory_batch,
)
from riskgrad.oracle import occupation_measure_base

from conftest import chain_mdp, layered_mdp, make_mdp, random_policy, uniform_policy


def test_transition_rows_must_sum_to_one():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 0.9
    P[1, 0, 1] = 1.0
    with pytest.raises(ValueError, match="sum to 1"):
        make_mdp(P, np.zeros((2, 1)))


def test_target_must_be_absorbing():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 0] = 1.0
    with pytest.raises(ValueError, match="absorbing"):
        make_mdp(P, np.zeros((2, 1)))


def test_target_costs_must_vanish():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    cost = np.array([[1.0], [0.5]])
    with pytest.raises(ValueError, match="vanish"):
        make_mdp(P, cost)


def test_single_forced_transition(rng):
    mdp = chain_mdp([1.0], gamma=0.95)
    traj = sample_trajectory(mdp, uniform_policy(mdp), rng)
    assert len(traj) == 1
    assert traj.g_total == 1.0
    assert traj.terminal_state == mdp.target_state


def test_deterministic_chain_discounted_total(rng):
    mdp = chain_mdp([1.0, 1.0, 1.0], gamma=0.5)
    traj = sample_trajectory(mdp, uniform_policy(mdp), rng)
    assert traj.g_total == pytest.approx(1.75, abs=1e-12)
    g, j = traj.recompute_totals(mdp.gamma)
    assert g == traj.g_total  # bit-identical recomputation
    assert j == traj.j_total


def test_horizon_exceeded_when_target_unreachable(rng):
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = 1.0  # self-loop, never reaches target
    P[1, 0, 1] = 1.0
    mdp = make_mdp(P, np.zeros((2, 1)), horizon=5)
    with pytest.raises(HorizonExceeded):
        sample_trajectory(mdp, uniform_policy(mdp), rng)


def test_trajectory_total_bound(rng):
    for seed in range(5):
        mdp = layered_mdp(np.random.default_rng(seed), gamma=0.7)
        traj = sample_trajectory(mdp, uniform_policy(mdp), rng)
        bound = mdp.c_max * (1 - mdp.gamma**mdp.horizon) / (1 - mdp.gamma)
        assert abs(traj.g_total) <= bound + 1e-12


# -- enumeration -------------------------------------------------------------


def test_enumerate_deterministic_single_path():
    mdp = chain_mdp([1.0, 1.0], gamma=0.5)
    trajs = enumerate_trajectories(mdp, uniform_policy(mdp), mdp.horizon)
    assert len(trajs) == 1
    traj, p = trajs[0]
    assert p == 1.0
    assert traj.g_total == pytest.approx(1.5)


def test_enumerate_binary_split():
    # one binary stochastic step, then absorb
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = 0.3
    P[0, 0, 2] = 0.7
    P[1, 0, 2] = 1.0
    P[2, 0, 2] = 1.0
    mdp = make_mdp(P, np.zeros((3, 1)))
    probs = sorted(p for _, p in enumerate_trajectories(mdp, uniform_policy(mdp), 5))
    assert probs == pytest.approx([0.3, 0.7])


def test_enumerate_uniform_policy_two_steps():
    # 2 actions at each of 2 steps, identical dynamics: 4 paths of 0.25
    P = np.zeros((3, 2, 3))
    P[0, :, 1] = 1.0
    P[1, :, 2] = 1.0
    P[2, :, 2] = 1.0
    mdp = make_mdp(P, np.zeros((3, 2)))
    trajs = enumerate_trajectories(mdp, uniform_policy(mdp), 5)
    assert len(trajs) == 4
    assert [p for _, p in trajs] == pytest.approx([0.25] * 4)


def test_enumerate_probability_conservation():
    for seed in range(4):
        mdp = layered_mdp(np.random.default_rng(seed), n_states=4)
        policy = random_policy(mdp, np.random.default_rng(100 + seed))
        total = sum(p for _, p in enumerate_trajectories(mdp, policy, mdp.horizon))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_enumerate_budget_exceeded():
    mdp = layered_mdp(np.random.default_rng(0), n_states=5, n_actions=3)
    with pytest.raises(BudgetExceeded):
        enumerate_trajectories(mdp, uniform_policy(mdp), mdp.horizon, budget=3)


def test_monte_carlo_mean_matches_enumeration(rng):
    mdp = layered_mdp(np.random.default_rng(7), n_states=4, gamma=0.8)
    policy = random_policy(mdp, np.random.default_rng(8))
    exact = sum(p * t.g_total for t, p in enumerate_trajectories(mdp, policy, mdp.horizon))
    rollout = sample_trajectory_batch(mdp, policy.prob_table(mdp.n_states), 100_000, rng)
    se = rollout.g.std(ddof=1) / np.sqrt(len(rollout))
    assert abs(rollout.g.mean() - exact) <= 4 * se


def test_batch_rollout_matches_sequential_totals(rng):
    mdp = layered_mdp(np.random.default_rng(3), n_states=4, gamma=0.9)
    policy = random_policy(mdp, np.random.default_rng(4))
    rollout = sample_trajectory_batch(mdp, policy.prob_table(mdp.n_states), 64, rng)
    for traj in rollout.trajectories(mdp):
        g, j = traj.recompute_totals(mdp.gamma)
        assert g == traj.g_total
        assert j == traj.j_total
        assert traj.terminal_state == mdp.target_state


# -- occupation-measure sampling ---------------------------------------------


def test_occupation_rejects_undiscounted(rng):
    mdp = chain_mdp([1.0], gamma=1.0)
    with pytest.raises(InvalidDiscount):
        sample_occupation_state(mdp, uniform_policy(mdp), rng)


def test_occupation_initial_state_mass_with_unreachable_target(rng):
    # x0 -> absorbing non-target loop; d(x0) = 1 - gamma exactly
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    P[2, 0, 2] = 1.0
    mdp = make_mdp(P, np.zeros((3, 1)), gamma=0.6)
    hits = sum(
        sample_occupation_state(mdp, uniform_policy(mdp), rng)[0] == 0
        for _ in range(20_000)
    )
    freq = hits / 20_000
    se = np.sqrt(0.4 * 0.6 / 20_000)
    assert abs(freq - (1 - mdp.gamma)) <= 4 * se


def test_occupation_concentrates_at_initial_state_for_tiny_gamma(rng):
    mdp = chain_mdp([1.0, 1.0], gamma=1e-9)
    draws = sample_occupation_states(
        mdp, uniform_policy(mdp).prob_table(mdp.n_states), 100_000, rng
    )
    assert np.mean(draws == mdp.initial_state) >= 0.999


def test_occupation_two_state_chain_frequencies(rng):
    # deterministic x0 -> x1 -> target at gamma=1/2: d = (1/2, 1/4, 1/4)
    mdp = chain_mdp([1.0, 1.0], gamma=0.5)
    n = 100_000
    draws = sample_occupation_states(
        mdp, uniform_policy(mdp).prob_table(mdp.n_states), n, rng
    )
    expected = np.array([0.5, 0.25, 0.25])
    for x in range(3):
        freq = np.mean(draws == x)
        se = np.sqrt(expected[x] * (1 - expected[x]) / n)
        assert abs(freq - expected[x]) <= 4 * se
    # the two transient states split 2:1
    transient = draws[draws != mdp.target_state]
    assert np.mean(transient == 0) == pytest.approx(2.0 / 3.0, abs=0.02)


def test_occupation_total_variation_against_linear_solve(rng):
    mdp = layered_mdp(np.random.default_rng(11), n_states=4, gamma=0.75)
    policy = random_policy(mdp, np.random.default_rng(12))
    exact = occupation_measure_base(mdp, policy)
    n = 1_000_000
    draws = sample_occupation_states(mdp, policy.prob_table(mdp.n_states), n, rng)
    empirical = np.bincount(draws, minlength=mdp.n_states) / n
    tv = 0.5 * np.sum(np.abs(empirical - exact))
    assert tv <= 0.01


def test_occupation_step_index_geometric(rng):
    mdp = chain_mdp([1.0, 1.0], gamma=0.5)
    policy = uniform_policy(mdp)
    ks = np.array(
        [sample_occupation_state(mdp, policy, rng)[1] for _ in range(20_000)]
    )
    # termination index is geometric with mean gamma / (1 - gamma)
    assert abs(ks.mean() - 1.0) <= 4 * ks.std(ddof=1) / np.sqrt(len(ks))


# -- JSON interface ----------------------------------------------------------


def test_json_round_trip(tmp_path):
    mdp = layered_mdp(np.random.default_rng(5), n_states=4, gamma=0.9)
    path = tmp_path / "mdp.json"
    with open(path, "w") as fh:
        json.dump(mdp.to_dict(), fh)
    loaded = load_mdp(path)
    assert loaded.n_states == mdp.n_states
    assert np.array_equal(loaded.transition, mdp.transition)
    assert np.array_equal(loaded.cost, mdp.cost)
    assert loaded.gamma == mdp.gamma
