"""Bandit baseline tests: index values against the dynamic program,
selection rules, and the qualitative regret ordering."""

import numpy as np
import pytest

from eprl.baselines import (BetaPosterior, gittins_index, gittins_select,
                            run_baseline, thompson_select, ucb_select)


# ---------------------------------------------------------------------------
# Gittins index

def test_horizon_one_index_is_posterior_mean():
    assert gittins_index(1.0, 1.0, 1) == pytest.approx(0.5)
    assert gittins_index(10.0, 2.0, 1) == pytest.approx(10 / 12)


def test_uniform_prior_horizon_ten_exploration_premium():
    value = gittins_index(1.0, 1.0, 10)
    assert value > 0.5
    # regression constant produced by the dynamic program itself
    assert value == pytest.approx(0.6980895996, abs=5e-4)


def test_index_at_least_posterior_mean_for_longer_horizons():
    for a in (1.0, 3.0, 8.0):
        for b in (1.0, 2.0, 6.0):
            mean = a / (a + b)
            for h in (2, 5, 10):
                assert gittins_index(a, b, h) >= mean - 1e-4


def test_index_monotone_in_posterior_counts():
    grid = range(1, 13)
    for h in (2, 5, 10):
        for b in grid:
            values = [gittins_index(float(a), float(b), h) for a in grid]
            assert all(x <= y + 1e-4 for x, y in zip(values, values[1:]))
        for a in grid:
            values = [gittins_index(float(a), float(b), h) for b in grid]
            assert all(x >= y - 1e-4 for x, y in zip(values, values[1:]))


def test_gittins_rejects_bad_arguments():
    with pytest.raises(ValueError):
        gittins_index(1.0, 1.0, 0)
    with pytest.raises(ValueError):
        gittins_index(0.0, 1.0, 3)


def test_gittins_select_prefers_successful_arm():
    posterior = BetaPosterior(np.array([3.0, 1.0]), np.array([1.0, 3.0]))
    assert gittins_select(posterior, 5) == 0


# ---------------------------------------------------------------------------
# UCB

def test_ucb_bonus_formula_and_tie_break():
    counts = np.array([1, 1])
    means = np.array([0.4, 0.4])
    bonus = np.sqrt(2 * np.log(2))
    assert bonus == pytest.approx(1.1774, abs=1e-4)
    assert ucb_select(counts, means, 2) == 0


def test_ucb_unpulled_arm_first():
    assert ucb_select(np.array([3, 0, 2]), np.array([0.9, 0.0, 0.9]), 6) == 1


def test_ucb_equal_counts_reduce_to_mean_comparison():
    assert ucb_select(np.array([5, 5]), np.array([0.9, 0.1]), 10) == 0


def test_ucb_rejects_bad_t():
    with pytest.raises(ValueError):
        ucb_select(np.array([1]), np.array([0.5]), 0)


# ---------------------------------------------------------------------------
# Thompson

def test_thompson_extreme_posteriors_pick_the_winner():
    rng = np.random.default_rng(0)
    posterior = BetaPosterior(np.array([1000.0, 1.0]), np.array([1.0, 1000.0]))
    picks = sum(thompson_select(posterior, rng) == 0 for _ in range(10_000))
    assert picks / 10_000 > 0.999


def test_thompson_symmetric_posteriors_pick_uniformly():
    rng = np.random.default_rng(1)
    k = 4
    posterior = BetaPosterior.uniform(k)
    picks = np.zeros(k)
    n = 20_000
    for _ in range(n):
        picks[thompson_select(posterior, rng)] += 1
    se = np.sqrt((1 / k) * (1 - 1 / k) / n)
    assert np.all(np.abs(picks / n - 1 / k) < 3 * se + 1e-9)


def test_posterior_update_is_conjugate():
    posterior = BetaPosterior.uniform(3)
    posterior.update(1, 1.0)
    posterior.update(1, 0.0)
    posterior.update(2, 0.0)
    assert posterior.alpha.tolist() == [1.0, 2.0, 1.0]
    assert posterior.beta.tolist() == [1.0, 2.0, 2.0]


# ---------------------------------------------------------------------------
# runner and ordering

def test_runner_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        run_baseline("epsilon", 10, 10, 5, np.random.default_rng(0))


def test_runner_step_records_schema():
    returns, records = run_baseline("random", 4, 10, 3, np.random.default_rng(2))
    assert returns.shape == (3,)
    assert len(records) == 30
    assert records[0]["optimal_expected_reward"] == 0.9
    assert set(records[0]) == {"episode", "step", "action", "reward",
                               "chosen_expected_reward", "optimal_expected_reward"}


def test_regret_ordering_small_scale():
    # Qualitative figure ordering. The UCB leg is exactly degenerate on this
    # instance (one forced pull of every arm == uniform-random in
    # expectation), so UCB is only required not to exceed random noticeably.
    rng = np.random.default_rng(3)
    n = 3000
    regret = {}
    se = {}
    for algo in ("gittins", "ucb", "thompson", "random"):
        returns, _ = run_baseline(algo, 10, 10, n, rng)
        r = 9.0 - returns
        regret[algo] = r.mean()
        se[algo] = r.std() / np.sqrt(n)
    assert regret["gittins"] <= regret["thompson"]
    assert abs(regret["thompson"] - regret["ucb"]) <= 1.0
    assert regret["thompson"] < regret["random"] - 3 * se["random"]
    assert regret["ucb"] <= regret["random"] + 3 * (se["ucb"] + se["random"])
    assert abs(regret["random"] - 7.2) / 7.2 < 0.02
