"""Episodic environments: plain/class bandits, compositional bandits, a
4x4 water maze, and a cued two-stage decision task.

All share the interface reset(slot) -> obs, step(action) -> (obs, reward,
done). Episodes have fixed horizons; stepping a finished episode is an
error. Each instance owns its reward randomness through an explicit
Generator, so trajectories are reproducible from seeds alone.

Envs additionally expose the memory-query vector for the current step
(`query_key`), the keys an agent should write under at episode end
(`write_keys`), and expected-reward annotations used for regret logging.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .taskgen import sample_barcode

HIGH_PROB = 0.9
LOW_PROB = 0.1


class EpisodeDone(RuntimeError):
    """Raised when step() is called after the episode finished."""


class BanditEnv:
    """n-armed Bernoulli bandit; one arm pays 0.9, the rest 0.1.

    The context identifies the rewarding arm across reoccurrences; it is
    the DND query every trial and the write key at episode end.
    """

    def __init__(self, n_arms: int, context_dim: int, horizon: int = 10,
                 rng: np.random.Generator | None = None):
        self.n_arms = n_arms
        self.horizon = horizon
        self.context_dim = context_dim
        self.obs_dim = 1
        self.rng = rng or np.random.default_rng()
        self._trial = 0
        self._done = True
        self.arm_probs = np.full(n_arms, LOW_PROB)
        self._context = np.zeros(context_dim)

    @property
    def n_actions(self) -> int:
        return self.n_arms

    def begin_epoch(self) -> None:
        pass

    def reset(self, slot) -> np.ndarray:
        best_arm, context = slot
        if not 0 <= best_arm < self.n_arms:
            raise ValueError(f"best arm {best_arm} out of range")
        self.arm_probs = np.full(self.n_arms, LOW_PROB)
        self.arm_probs[best_arm] = HIGH_PROB
        self._context = np.asarray(context, dtype=np.float64)
        self._trial = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([self._trial / self.horizon])

    def step(self, action: int):
        if self._done:
            raise EpisodeDone("bandit episode already finished")
        if not 0 <= action < self.n_arms:
            raise ValueError(f"action {action} out of range")
        reward = float(self.rng.random() < self.arm_probs[action])
        self._trial += 1
        self._done = self._trial >= self.horizon
        return self._obs(), reward, self._done

    def query_key(self) -> np.ndarray:
        return self._context

    def write_keys(self) -> list[np.ndarray]:
        return [self._context]

    def expected_reward(self, action: int) -> float:
        return float(self.arm_probs[action])

    def optimal_expected_reward(self) -> float:
        return float(self.arm_probs.max())

    def step_info(self) -> dict:
        return {}


class CompositionalBanditEnv:
    """Two arms whose reward probabilities ride on per-arm stimuli.

    The stimulus/probability pairs swap positions at random every trial;
    stimuli appear in the observation at the slots associated with the
    actions. The DND query each trial is one of the two stimuli, chosen
    at random; both stimuli are write keys at episode end.
    """

    def __init__(self, context_dim: int, horizon: int = 10,
                 rng: np.random.Generator | None = None):
        self.n_arms = 2
        self.horizon = horizon
        self.context_dim = context_dim
        self.obs_dim = 1 + 2 * context_dim
        self.rng = rng or np.random.default_rng()
        self._done = True
        self._trial = 0

    @property
    def n_actions(self) -> int:
        return 2

    def begin_epoch(self) -> None:
        pass

    def reset(self, slot) -> np.ndarray:
        (hi_prob, hi_ctx), (lo_prob, lo_ctx) = slot
        self._stimuli = [np.asarray(hi_ctx, dtype=np.float64),
                         np.asarray(lo_ctx, dtype=np.float64)]
        self._probs = [float(hi_prob), float(lo_prob)]
        self._trial = 0
        self._done = False
        self._shuffle_positions()
        return self._obs()

    def _shuffle_positions(self) -> None:
        self._order = list(self.rng.permutation(2))
        self._query_index = int(self.rng.integers(2))

    def _obs(self) -> np.ndarray:
        return np.concatenate([[self._trial / self.horizon],
                               self._stimuli[self._order[0]],
                               self._stimuli[self._order[1]]])

    def step(self, action: int):
        if self._done:
            raise EpisodeDone("compositional episode already finished")
        if action not in (0, 1):
            raise ValueError(f"action {action} out of range")
        reward = float(self.rng.random() < self._probs[self._order[action]])
        self._trial += 1
        self._done = self._trial >= self.horizon
        if not self._done:
            self._shuffle_positions()
        return self._obs(), reward, self._done

    def query_key(self) -> np.ndarray:
        return self._stimuli[self._query_index]

    def write_keys(self) -> list[np.ndarray]:
        return [self._stimuli[0], self._stimuli[1]]

    def expected_reward(self, action: int) -> float:
        return self._probs[self._order[action]]

    def optimal_expected_reward(self) -> float:
        return max(self._probs)

    def step_info(self) -> dict:
        return {}


def bfs_distance(size: int, start_cell: int, goal_cell: int) -> int:
    """Shortest path length on the open grid (BFS over the 4-neighbourhood)."""
    if start_cell == goal_cell:
        return 0
    dist = {start_cell: 0}
    queue = deque([start_cell])
    while queue:
        cell = queue.popleft()
        x, y = cell % size, cell // size
        for nx, ny in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
            if 0 <= nx < size and 0 <= ny < size:
                nxt = ny * size + nx
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    if nxt == goal_cell:
                        return dist[nxt]
                    queue.append(nxt)
    raise RuntimeError("goal unreachable")  # cannot happen on an open grid


class MazeEnv:
    """4x4 grid water maze: reach the hidden goal as often as possible.

    Actions are left/right/up/down; bumping a wall keeps position. Finding
    the goal pays 1 and respawns the agent uniformly over non-goal cells.
    Episodes run a fixed number of steps. Coordinates are observed.
    """

    ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))  # left, right, up, down

    def __init__(self, context_dim: int, size: int = 4, horizon: int = 20,
                 rng: np.random.Generator | None = None):
        self.size = size
        self.horizon = horizon
        self.context_dim = context_dim
        self.obs_dim = 3
        self.rng = rng or np.random.default_rng()
        self._done = True

    @property
    def n_actions(self) -> int:
        return 4

    def begin_epoch(self) -> None:
        pass

    def _spawn(self) -> int:
        cells = [c for c in range(self.size * self.size) if c != self._goal]
        return int(cells[self.rng.integers(len(cells))])

    def reset(self, slot) -> np.ndarray:
        goal, context = slot
        if not 0 <= goal < self.size * self.size:
            raise ValueError(f"goal cell {goal} out of range")
        self._goal = int(goal)
        self._context = np.asarray(context, dtype=np.float64)
        self._pos = self._spawn()
        self.spawn_distance = bfs_distance(self.size, self._pos, self._goal)
        self._step_idx = 0
        self._done = False
        self._last_step = (self._pos, False)
        return self._obs()

    def _obs(self) -> np.ndarray:
        x, y = self._pos % self.size, self._pos // self.size
        s = self.size - 1
        return np.array([x / s, y / s, self._step_idx / self.horizon])

    def step(self, action: int):
        if self._done:
            raise EpisodeDone("maze episode already finished")
        if action not in (0, 1, 2, 3):
            raise ValueError(f"action {action} out of range")
        dx, dy = self.ACTIONS[action]
        x, y = self._pos % self.size, self._pos // self.size
        nx, ny = x + dx, y + dy
        if 0 <= nx < self.size and 0 <= ny < self.size:
            self._pos = ny * self.size + nx
        reward = 0.0
        respawn = False
        reached = self._pos
        if self._pos == self._goal:
            reward = 1.0
            self._pos = self._spawn()
            respawn = True
        self._step_idx += 1
        self._done = self._step_idx >= self.horizon
        self._last_step = (reached, respawn)
        return self._obs(), reward, self._done

    def query_key(self) -> np.ndarray:
        return self._context

    def write_keys(self) -> list[np.ndarray]:
        return [self._context]

    def step_info(self) -> dict:
        reached, respawn = self._last_step
        return {"pos_x": reached % self.size, "pos_y": reached // self.size,
                "goal_x": self._goal % self.size, "goal_y": self._goal // self.size,
                "respawn": int(respawn), "bfs_spawn_goal": self.spawn_distance}


@dataclass
class ArchivedEpisode:
    state: int
    reward: float
    barcode: np.ndarray


class TwoStepEnv:
    """Two-stage decision task with episodic cues.

    Stage 1: one of two actions leads to state s1 or s2 through a common
    (p=common_prob) or uncommon transition. Stage 2 pays a Bernoulli
    reward from the state's current probability; the high/low assignment
    reverses between episodes with probability reversal_prob. Every
    episode emits a fresh stage-2 barcode, archived with the state
    reached and the reward paid. After the uncued block, each episode
    presents the barcode of a uniformly drawn earlier episode at stage 1;
    if the agent reaches that episode's state it is paid that episode's
    archived reward exactly.
    """

    def __init__(self, barcode_length: int, episodes_per_epoch: int = 100,
                 n_uncued: int = 50, common_prob: float = 0.8,
                 reversal_prob: float = 0.1,
                 rng: np.random.Generator | None = None):
        self.horizon = 2
        self.context_dim = barcode_length
        self.obs_dim = 5  # stage one-hot, state one-hot, cued flag
        self.barcode_length = barcode_length
        self.episodes_per_epoch = episodes_per_epoch
        self.n_uncued = n_uncued
        self.common_prob = common_prob
        self.reversal_prob = reversal_prob
        self.rng = rng or np.random.default_rng()
        self._done = True
        self.begin_epoch()

    @property
    def n_actions(self) -> int:
        return 2

    def begin_epoch(self) -> None:
        self.reward_probs = ([HIGH_PROB, LOW_PROB] if self.rng.random() < 0.5
                             else [LOW_PROB, HIGH_PROB])
        self.archive: list[ArchivedEpisode] = []
        self._used_codes: set[bytes] = {
            np.zeros(self.barcode_length, dtype=np.int64).tobytes()}
        self._episode_idx = 0

    def reset(self, slot=None, cue_ref: int | None = None) -> np.ndarray:
        idx = self._episode_idx
        self.cued = idx >= self.n_uncued
        if cue_ref is not None:
            if not 0 <= cue_ref < len(self.archive):
                raise ValueError(f"cue reference {cue_ref} not in archive")
            self.cued, self.cue_ref = True, cue_ref
        elif self.cued:
            self.cue_ref = int(self.rng.integers(len(self.archive)))
        else:
            self.cue_ref = -1
        self._cue = (self.archive[self.cue_ref].barcode if self.cued
                     else np.zeros(self.barcode_length))
        self._stage = 1
        self._state = -1
        self._reward_paid = 0.0
        self._transition = ""
        self._done = False
        return np.array([1.0, 0.0, 0.0, 0.0, float(self.cued)])

    def _expected_state_reward(self, state: int) -> float:
        if self.cued and state == self.archive[self.cue_ref].state:
            return self.archive[self.cue_ref].reward
        return self.reward_probs[state]

    def step(self, action: int):
        if self._done:
            raise EpisodeDone("two-step episode already finished")
        if self._stage == 1:
            if action not in (0, 1):
                raise ValueError(f"action {action} out of range")
            common = bool(self.rng.random() < self.common_prob)
            self._state = action if common else 1 - action
            self._transition = "common" if common else "uncommon"
            if self.cued and self._state == self.archive[self.cue_ref].state:
                reward = self.archive[self.cue_ref].reward  # guaranteed replay
            else:
                reward = float(self.rng.random() < self.reward_probs[self._state])
            self._reward_paid = reward
            code = sample_barcode(self.barcode_length, self.rng,
                                  exclude=self._used_codes)
            self._used_codes.add(code.astype(np.int64).tobytes())
            self._stage2_code = code
            self._last_info = {"stage": 1, "cued": int(self.cued),
                               "cue_ref": self.cue_ref,
                               "transition": self._transition}
            self._stage = 2
            obs = np.array([0.0, 1.0, float(self._state == 0),
                            float(self._state == 1), float(self.cued)])
            return obs, reward, False
        # stage 2: the step closes the episode; the action has no effect
        self.archive.append(ArchivedEpisode(self._state, self._reward_paid,
                                            self._stage2_code))
        self.reversed_now = bool(self.rng.random() < self.reversal_prob)
        if self.reversed_now:
            self.reward_probs = [self.reward_probs[1], self.reward_probs[0]]
        self._episode_idx += 1
        self._done = True
        self._last_info = {"stage": 2, "cued": int(self.cued),
                           "cue_ref": self.cue_ref,
                           "transition": self._transition}
        return np.zeros(self.obs_dim), 0.0, True

    def query_key(self) -> np.ndarray | None:
        if self._stage == 1:
            return self._cue if self.cued else None  # no context on uncued steps
        return self._stage2_code

    def write_keys(self) -> list[np.ndarray]:
        return [self._stage2_code]

    def expected_reward(self, action: int) -> float:
        if self._stage != 1:
            return 0.0
        p_same = self.common_prob
        return (p_same * self._expected_state_reward(action)
                + (1 - p_same) * self._expected_state_reward(1 - action))

    def optimal_expected_reward(self) -> float:
        if self._stage != 1:
            return 0.0
        return max(self.expected_reward(0), self.expected_reward(1))

    def step_info(self) -> dict:
        return self._last_info


def make_env(kind: str, rng: np.random.Generator, *, n_arms: int = 10,
             horizon: int = 10, context_dim: int = 10,
             episodes_per_epoch: int = 100, n_uncued: int = 50,
             common_prob: float = 0.8, reversal_prob: float = 0.1):
    if kind in ("barcode_bandit", "class_bandit"):
        return BanditEnv(n_arms, context_dim, horizon, rng)
    if kind == "compositional_bandit":
        return CompositionalBanditEnv(context_dim, horizon, rng)
    if kind == "water_maze":
        return MazeEnv(context_dim, 4, horizon, rng)
    if kind == "two_step":
        return TwoStepEnv(context_dim, episodes_per_epoch, n_uncued,
                          common_prob, reversal_prob, rng)
    raise ValueError(f"unknown env kind {kind!r}")
