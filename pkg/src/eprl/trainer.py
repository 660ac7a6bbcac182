"""Synchronous batched advantage actor-critic over episodes.

One update per episode: B workers roll the same episode index of their
private epoch plans in lockstep, the batch-mean loss

    L = -sum_t A_t log pi(a_t) + c_v sum_t (R_t - V_t)^2 - c_e sum_t H(pi_t)

is backpropagated through the recurrent cell (retrieved memories are
constants), gradients are global-norm clipped and applied with Adam.
Returns are discounted within the episode only; episodes are terminal.
Evaluation epochs run the same loop with updates disabled and assert
that parameters are bit-identical afterwards.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as config_mod
from .agent import Agent, AgentSetup, NumericalAbort
from .config import ExperimentConfig, config_hash
from .envs import make_env
from .eplstm import backward_through_time
from .recording import METRICS_COLUMNS, STEP_COLUMNS, CsvLog
from .taskgen import build_epoch


def compute_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted returns computed backward from episode end, no bootstrap."""
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.zeros_like(rewards)
    acc = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        returns[t] = acc
    return returns


def compute_advantages(rewards: np.ndarray, values: np.ndarray, gamma: float):
    """Per-step returns and advantages A_t = R_t - V_t."""
    returns = compute_returns(rewards, gamma)
    return returns, returns - np.asarray(values, dtype=np.float64)


def global_norm(arrays) -> float:
    total = 0.0
    for arr in arrays:
        total += float(np.sum(arr * arr))
    return float(np.sqrt(total))


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter arrays."""

    def __init__(self, arrays, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for arr, g, m, v in zip(self.arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            arr -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


@dataclass
class EpisodeRollout:
    """Everything one batched episode produced, time-major."""

    actions: np.ndarray        # (T, B)
    rewards: np.ndarray        # (T, B)
    values: np.ndarray         # (T, B)
    log_probs_full: np.ndarray  # (T, B, A)
    r_means: np.ndarray        # (T, B)
    caches: list               # per-step cell caches
    infos: list                # per-step list of per-worker env info dicts
    chosen_expected: np.ndarray | None = None
    optimal_expected: np.ndarray | None = None
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def batch(self) -> int:
        return self.actions.shape[1]

    def episode_returns(self) -> np.ndarray:
        return self.rewards.sum(axis=0)


def rollout_episode(agent: Agent, envs, slots, policy_rng: np.random.Generator,
                    greedy: bool = False,
                    collect_infos: bool = False) -> EpisodeRollout:
    """Run one episode on every worker env in lockstep (equal horizons)."""
    B = len(envs)
    obs = np.stack([env.reset(slots[b]) if slots[b] is not None else env.reset()
                    for b, env in enumerate(envs)])
    horizon = envs[0].horizon
    has_expected = hasattr(envs[0], "expected_reward")
    actions = np.zeros((horizon, B), dtype=np.int64)
    rewards = np.zeros((horizon, B))
    values = np.zeros((horizon, B))
    logps = np.zeros((horizon, B, agent.setup.n_actions))
    r_means = np.zeros((horizon, B))
    chosen = np.zeros((horizon, B)) if has_expected else None
    optimal = np.zeros((horizon, B)) if has_expected else None
    caches, infos = [], []
    for t in range(horizon):
        keys = [env.query_key() for env in envs]
        absent = [k is None for k in keys]
        if any(absent):
            # context presence is episode-level and uniform across lockstep
            # workers; a mixed batch would indicate desynchronized envs
            if not all(absent):
                raise RuntimeError("workers disagree on context presence")
            queries = np.zeros((B, envs[0].context_dim))
            out = agent.act(obs, queries, policy_rng, greedy=greedy,
                            context_absent=True)
        else:
            queries = np.stack(keys)
            out = agent.act(obs, queries, policy_rng, greedy=greedy)
        step_rewards = np.zeros(B)
        step_infos = [] if collect_infos else None
        for b, env in enumerate(envs):
            if has_expected:
                chosen[t, b] = env.expected_reward(int(out.actions[b]))
                optimal[t, b] = env.optimal_expected_reward()
            ob, rew, _ = env.step(int(out.actions[b]))
            obs[b] = ob
            step_rewards[b] = rew
            if collect_infos:
                step_infos.append(env.step_info())
        agent.observe(out.actions, step_rewards)
        actions[t] = out.actions
        rewards[t] = step_rewards
        values[t] = out.values
        logps[t] = np.log(np.clip(out.probs, 1e-300, None))
        r_means[t] = out.r_gate_mean
        caches.append(out.cache)
        if collect_infos:
            infos.append(step_infos)
    return EpisodeRollout(actions, rewards, values, logps, r_means, caches,
                          infos, chosen, optimal)


def a2c_gradients(agent: Agent, rollout: EpisodeRollout, gamma: float,
                  value_coef: float, entropy_coef: float):
    """Batch-mean loss gradients for all parameter arrays, plus loss stats."""
    T, B = rollout.horizon, rollout.batch
    returns, advantages = compute_advantages(rollout.rewards, rollout.values, gamma)
    rollout.returns, rollout.advantages = returns, advantages
    heads = agent.heads
    scale = 1.0 / B
    gw_pi = np.zeros_like(heads.w_pi)
    gb_pi = np.zeros_like(heads.b_pi)
    gw_v = np.zeros_like(heads.w_v)
    gb_v = np.zeros_like(heads.b_v)
    grad_h_list = []
    rows = np.arange(B)
    policy_loss = value_loss = entropy_sum = 0.0
    for t in range(T):
        logp = rollout.log_probs_full[t]
        p = np.exp(logp)
        ent = -(p * logp).sum(axis=1)
        onehot = np.zeros((B, agent.setup.n_actions))
        onehot[rows, rollout.actions[t]] = 1.0
        adv = advantages[t]
        dlogits = scale * (adv[:, None] * (p - onehot)
                           + entropy_coef * p * (logp + ent[:, None]))
        dvalue = scale * value_coef * 2.0 * (rollout.values[t] - returns[t])
        h_t = rollout.caches[t].o * rollout.caches[t].tanh_c
        gw_pi += dlogits.T @ h_t
        gb_pi += dlogits.sum(axis=0)
        gw_v += (dvalue[:, None] * h_t).sum(axis=0)
        gb_v += dvalue.sum(keepdims=True)
        grad_h_list.append(dlogits @ heads.w_pi + dvalue[:, None] * heads.w_v)
        policy_loss += float((-adv * logp[rows, rollout.actions[t]]).mean())
        value_loss += float(((returns[t] - rollout.values[t]) ** 2).mean())
        entropy_sum += float(ent.mean())
    cell_grads, _ = backward_through_time(agent.params, rollout.caches, grad_h_list)
    grads = [cell_grads.wx, cell_grads.wh, cell_grads.b, gw_pi, gb_pi, gw_v, gb_v]
    stats = {"policy_loss": policy_loss, "value_loss": value_loss,
             "entropy": entropy_sum}
    return grads, stats


def a2c_update(agent: Agent, rollout: EpisodeRollout, gamma: float,
               value_coef: float, entropy_coef: float, clip_norm: float,
               skip_norm: float, opt: Adam):
    """Clip-and-step; updates beyond the hard norm cap are skipped."""
    grads, stats = a2c_gradients(agent, rollout, gamma, value_coef, entropy_coef)
    norm = global_norm(grads)
    stats["grad_norm"] = norm
    if not np.isfinite(norm):
        raise NumericalAbort("non-finite gradient norm")
    if norm > skip_norm:
        stats["skipped"] = 1
        return stats
    stats["skipped"] = 0
    if norm > clip_norm and norm > 0:
        factor = clip_norm / norm
        grads = [g * factor for g in grads]
    opt.step(grads)
    return stats


# ---------------------------------------------------------------------------
# experiment orchestration

@dataclass
class EpochRecord:
    episode_rows: list = field(default_factory=list)
    step_rows: list = field(default_factory=list)


class Trainer:
    """Owns the agent, worker envs, per-worker epoch plans and the optimizer."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        self.hash = config_hash(config)
        root = np.random.SeedSequence(config.seed)
        agent_ss, task_ss, env_ss, policy_ss, ev_task_ss, ev_env_ss, ev_policy_ss = \
            root.spawn(7)
        B = config.workers
        setup = AgentSetup(config.variant, config.n_actions,
                           self._obs_dim(), config.context_dim,
                           config.hidden_size, B, config.kernel_delta)
        self.agent = Agent(setup, np.random.default_rng(agent_ss))
        self.policy_rng = np.random.default_rng(policy_ss)
        self.eval_policy_rng = np.random.default_rng(ev_policy_ss)
        self.task_rngs = [np.random.default_rng(s) for s in task_ss.spawn(B)]
        self.eval_task_rngs = [np.random.default_rng(s) for s in ev_task_ss.spawn(B)]
        self.envs = [self._make_env(np.random.default_rng(s))
                     for s in env_ss.spawn(B)]
        self.eval_envs = [self._make_env(np.random.default_rng(s))
                          for s in ev_env_ss.spawn(B)]
        self.opt = Adam([arr for _, arr in self.agent.param_arrays()], config.lr)
        self.updates_done = 0
        self.total_updates = max(1, config.train_epochs * config.plan_episodes)
        self.carry_inputs = config.kind == "two_step"

    def _obs_dim(self) -> int:
        probe = self._make_env(np.random.default_rng(0))
        return probe.obs_dim

    def _make_env(self, rng):
        c = self.config
        return make_env(c.kind, rng, n_arms=c.n_arms, horizon=c.env_horizon,
                        context_dim=c.context_dim,
                        episodes_per_epoch=c.episodes_per_epoch,
                        n_uncued=c.n_uncued, common_prob=c.common_prob,
                        reversal_prob=c.reversal_prob)

    def _build_plans(self, rngs):
        c = self.config
        n_goals = config_mod.MAZE_CELLS if c.kind == "water_maze" else c.n_arms
        if c.kind == "two_step":
            return [build_epoch(c.kind, c.episodes_per_epoch, 1, 2, rng)
                    for rng in rngs]
        return [build_epoch(c.kind, c.n_unique_contexts, c.duplicates, n_goals,
                            rng, context_kind=c.context_kind,
                            barcode_length=c.barcode_length, class_dim=c.class_dim,
                            noise_scale=c.noise_scale)
                for rng in rngs]

    def _slot_for_env(self, plan, idx):
        c = self.config
        slot = plan.slots[idx]
        if c.kind == "two_step":
            return None, f"ep{idx}", 0
        if c.kind == "compositional_bandit":
            (a, ca), (b, cb) = slot
            hi = (plan.tasks[a].mdp_params["reward_prob"], ca)
            lo = (plan.tasks[b].mdp_params["reward_prob"], cb)
            task_id = f"{plan.tasks[a].task_id}+{plan.tasks[b].task_id}"
            return (hi, lo), task_id, plan.exposures[idx][0]
        j, ctx = slot
        task = plan.tasks[j]
        position = task.mdp_params.get("best_arm", task.mdp_params.get("goal"))
        return (position, ctx), task.task_id, plan.exposures[idx]

    def _entropy_coef(self) -> float:
        c = self.config
        frac = min(1.0, self.updates_done / self.total_updates)
        return c.entropy_coef + (c.entropy_coef_final - c.entropy_coef) * frac

    def run_epoch(self, epoch_idx: int, mode: str, envs=None, task_rngs=None,
                  policy_rng=None, collect_steps: bool = False) -> EpochRecord:
        """One epoch over fresh plans: rollout, (train) update, write/reset,
        clear memory at the end. Returns the log rows it produced."""
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        c = self.config
        envs = envs if envs is not None else self.envs
        task_rngs = task_rngs if task_rngs is not None else self.task_rngs
        policy_rng = policy_rng if policy_rng is not None else self.policy_rng
        hash_before = self.agent.param_hash() if mode == "eval" else None
        plans = self._build_plans(task_rngs)
        record = EpochRecord()
        self.agent.begin_epoch()
        self.agent.begin_episode()
        for env in envs:
            env.begin_epoch()
        greedy = mode == "eval" and c.greedy_eval
        for idx in range(plans[0].episodes_per_epoch):
            slots, task_ids, exposures = [], [], []
            for plan in plans:
                slot, task_id, exposure = self._slot_for_env(plan, idx)
                slots.append(slot)
                task_ids.append(task_id)
                exposures.append(exposure)
            rollout = rollout_episode(self.agent, envs, slots, policy_rng, greedy,
                                      collect_infos=collect_steps)
            if mode == "train":
                stats = a2c_update(self.agent, rollout, c.gamma, c.value_coef,
                                   self._entropy_coef(), c.clip_norm,
                                   c.skip_norm, self.opt)
                self.updates_done += 1
            else:
                stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
                         "grad_norm": 0.0, "skipped": 0}
            returns = rollout.episode_returns()
            mean_r = rollout.r_means.mean(axis=0)
            for b in range(rollout.batch):
                record.episode_rows.append({
                    "worker": b, "epoch": epoch_idx, "episode": idx,
                    "task_id": task_ids[b], "exposure": exposures[b],
                    "ret": returns[b], "policy_loss": stats["policy_loss"],
                    "value_loss": stats["value_loss"], "entropy": stats["entropy"],
                    "grad_norm": stats["grad_norm"], "skipped": stats["skipped"],
                    "mean_r_gate": mean_r[b]})
            if collect_steps:
                for t in range(rollout.horizon):
                    for b in range(rollout.batch):
                        row = {"worker": b, "epoch": epoch_idx, "episode": idx,
                               "step": t, "task_id": task_ids[b],
                               "exposure": exposures[b],
                               "action": int(rollout.actions[t, b]),
                               "reward": rollout.rewards[t, b],
                               "value_estimate": rollout.values[t, b],
                               "r_gate_mean": rollout.r_means[t, b]}
                        if rollout.chosen_expected is not None:
                            row["chosen_expected_reward"] = rollout.chosen_expected[t, b]
                            row["optimal_expected_reward"] = rollout.optimal_expected[t, b]
                        row.update(rollout.infos[t][b])
                        record.step_rows.append(row)
            write_keys = [env.write_keys() for env in envs]
            # the two-step families carry the decision step's action/reward
            # into the next episode's first input (incremental strategies
            # need that channel); other families start episodes blank
            carry = ((rollout.actions[0], rollout.rewards[0])
                     if self.carry_inputs else None)
            self.agent.end_episode(write_keys, carry=carry)
        self.agent.end_epoch()
        if mode == "eval" and self.agent.param_hash() != hash_before:
            raise AssertionError("parameters changed during a frozen evaluation")
        return record

    # -- artifact-producing entry points --------------------------------------

    def train(self, out_dir, progress: bool = False) -> dict:
        c = self.config
        os.makedirs(out_dir, exist_ok=True)
        config_mod.save(c, os.path.join(out_dir, "config.ini"))
        meta = {"config_hash": self.hash, "seed": c.seed}
        started = time.time()
        with CsvLog(os.path.join(out_dir, "metrics.csv"), METRICS_COLUMNS, meta) as log, \
             CsvLog(os.path.join(out_dir, "periodic_eval.csv"), METRICS_COLUMNS, meta) as peval:
            for epoch in range(c.train_epochs):
                record = self.run_epoch(epoch, "train")
                for row in record.episode_rows:
                    log.write(row)
                if c.eval_every and (epoch + 1) % c.eval_every == 0:
                    ev = self.run_epoch(epoch, "eval", envs=self.eval_envs,
                                        task_rngs=self.eval_task_rngs,
                                        policy_rng=self.eval_policy_rng)
                    for row in ev.episode_rows:
                        peval.write(row)
                if progress and (epoch + 1) % 20 == 0:
                    recent = [r["ret"] for r in record.episode_rows]
                    print(f"epoch {epoch + 1}/{c.train_epochs} "
                          f"mean return {np.mean(recent):.3f} "
                          f"({time.time() - started:.0f}s)", flush=True)
        self.agent.save(os.path.join(out_dir, "checkpoint.npz"), self.hash)
        summary = self.evaluate(out_dir)
        summary["train_seconds"] = time.time() - started
        return summary

    def evaluate(self, out_dir) -> dict:
        """Frozen-weight evaluation epochs with full step logging."""
        c = self.config
        os.makedirs(out_dir, exist_ok=True)
        meta = {"config_hash": self.hash, "seed": c.seed}
        hash_before = self.agent.param_hash()
        returns = []
        with CsvLog(os.path.join(out_dir, "eval_metrics.csv"), METRICS_COLUMNS, meta) as log, \
             CsvLog(os.path.join(out_dir, "eval_steps.csv"), STEP_COLUMNS, meta) as steps:
            for epoch in range(c.eval_epochs):
                record = self.run_epoch(epoch, "eval", envs=self.eval_envs,
                                        task_rngs=self.eval_task_rngs,
                                        policy_rng=self.eval_policy_rng,
                                        collect_steps=True)
                for row in record.episode_rows:
                    log.write(row)
                    returns.append(row["ret"])
                for row in record.step_rows:
                    steps.write(row)
        assert self.agent.param_hash() == hash_before
        return {"eval_mean_return": float(np.mean(returns)) if returns else 0.0,
                "param_hash": hash_before}
