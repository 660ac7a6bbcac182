"""Classical bandit algorithms run fresh per episode: a finite-horizon
Bayesian index policy, UCB, Thompson sampling, and a uniform-random
control. They provide the first-exposure comparison line for the
memory-augmented agents.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .envs import HIGH_PROB, LOW_PROB


@dataclass
class BetaPosterior:
    """Per-arm Beta(successes+1, failures+1) posteriors."""

    alpha: np.ndarray
    beta: np.ndarray

    @staticmethod
    def uniform(n_arms: int) -> "BetaPosterior":
        return BetaPosterior(np.ones(n_arms), np.ones(n_arms))

    def update(self, arm: int, reward: float) -> None:
        if reward > 0:
            self.alpha[arm] += 1.0
        else:
            self.beta[arm] += 1.0

    def mean(self, arm: int) -> float:
        return self.alpha[arm] / (self.alpha[arm] + self.beta[arm])


def _pull_value(alpha: float, beta: float, horizon: int, lam: float,
                memo: dict) -> float:
    """Expected value of pulling now and continuing optimally, against a
    retirement option paying lam per remaining pull."""
    key = (alpha, beta, horizon)
    cached = memo.get(key)
    if cached is not None:
        return cached
    p = alpha / (alpha + beta)
    if horizon == 1:
        value = p
    else:
        up = _pull_value(alpha + 1.0, beta, horizon - 1, lam, memo)
        down = _pull_value(alpha, beta + 1.0, horizon - 1, lam, memo)
        cont_win = max((horizon - 1) * lam, up)
        cont_lose = max((horizon - 1) * lam, down)
        value = p * (1.0 + cont_win) + (1.0 - p) * cont_lose
    memo[key] = value
    return value


@lru_cache(maxsize=100_000)
def gittins_index(alpha: float, beta: float, horizon: int,
                  tol: float = 1e-4) -> float:
    """Calibration payoff lam* at which pulling this arm and retiring to a
    sure lam per pull are equally attractive, to the given horizon.

    Computed by bisection on lam over the dynamic program above. At
    horizon 1 the index is the posterior mean exactly.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if alpha <= 0 or beta <= 0:
        raise ValueError("Beta parameters must be positive")
    if horizon == 1:
        return alpha / (alpha + beta)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        lam = 0.5 * (lo + hi)
        if _pull_value(alpha, beta, horizon, lam, {}) >= horizon * lam:
            lo = lam
        else:
            hi = lam
    return 0.5 * (lo + hi)


def gittins_select(posterior: BetaPosterior, trials_remaining: int) -> int:
    indices = [gittins_index(float(a), float(b), trials_remaining)
               for a, b in zip(posterior.alpha, posterior.beta)]
    return int(np.argmax(indices))


def ucb_select(counts: np.ndarray, means: np.ndarray, t: int) -> int:
    """Unpulled arms first (index order), then the classic UCB1 score.
    Ties break to the lowest index."""
    if t < 1:
        raise ValueError("t must be >= 1")
    counts = np.asarray(counts, dtype=np.float64)
    unpulled = np.flatnonzero(counts == 0)
    if unpulled.size:
        return int(unpulled[0])
    scores = np.asarray(means, dtype=np.float64) + np.sqrt(2.0 * np.log(t) / counts)
    return int(np.argmax(scores))


def thompson_select(posterior: BetaPosterior, rng: np.random.Generator) -> int:
    draws = rng.beta(posterior.alpha, posterior.beta)
    return int(np.argmax(draws))


def random_select(n_arms: int, rng: np.random.Generator) -> int:
    return int(rng.integers(n_arms))


ALGORITHMS = ("gittins", "ucb", "thompson", "random")


def run_baseline(algo: str, n_arms: int, horizon: int, n_episodes: int,
                 rng: np.random.Generator):
    """Play fresh episodes of the one-good-arm instance.

    Returns (episode_returns, step_records); step_records carry the
    per-trial expected-reward annotations the regret analysis consumes,
    in the same layout the agent trainer logs.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown baseline {algo!r}")
    returns = np.zeros(n_episodes)
    records = []
    for episode in range(n_episodes):
        best = int(rng.integers(n_arms))
        probs = np.full(n_arms, LOW_PROB)
        probs[best] = HIGH_PROB
        posterior = BetaPosterior.uniform(n_arms)
        counts = np.zeros(n_arms)
        sums = np.zeros(n_arms)
        total = 0.0
        for t in range(horizon):
            if algo == "gittins":
                arm = gittins_select(posterior, horizon - t)
            elif algo == "ucb":
                means = np.divide(sums, counts, out=np.zeros_like(sums),
                                  where=counts > 0)
                arm = ucb_select(counts, means, t + 1)
            elif algo == "thompson":
                arm = thompson_select(posterior, rng)
            else:
                arm = random_select(n_arms, rng)
            reward = float(rng.random() < probs[arm])
            posterior.update(arm, reward)
            counts[arm] += 1
            sums[arm] += reward
            total += reward
            records.append({
                "episode": episode, "step": t, "action": arm, "reward": reward,
                "chosen_expected_reward": float(probs[arm]),
                "optimal_expected_reward": HIGH_PROB,
            })
        returns[episode] = total
    return returns, records
