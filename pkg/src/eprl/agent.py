"""Agent variants over the gated recurrent cell.

Three variants share one body:
  * l2rl          - recurrent meta-learner; retrieved-memory input is zero.
  * l2rl_context  - same, with the context vector appended to the input.
  * epl2rl        - queries the episodic store every step with the context
                    and reinstates the retrieved cell state through the
                    r-gate; the context is NOT a network input.

The network input each step is [previous-action one-hot, previous reward,
observation(, context)]. Recurrent state resets at episode end, the store
is written at episode end (one entry per write key) and cleared at epoch
end. The agent runs a batch of independent workers in lockstep: shared
weights, private recurrent state and store per worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .dnd import BatchedDnd
from .eplstm import EpLstmParams, EpLstmState, forward_step

VARIANTS = ("l2rl", "l2rl_context", "epl2rl")


class NumericalAbort(FloatingPointError):
    """Raised when logits or values go non-finite mid-episode."""


@dataclass
class PolicyValueHeads:
    """Linear policy and value readouts sharing the recurrent trunk."""

    w_pi: np.ndarray  # (actions, hidden)
    b_pi: np.ndarray  # (actions,)
    w_v: np.ndarray   # (hidden,)
    b_v: np.ndarray   # (1,)

    @staticmethod
    def init(n_actions: int, hidden_size: int, rng: np.random.Generator) -> "PolicyValueHeads":
        s = 1.0 / np.sqrt(hidden_size)
        return PolicyValueHeads(rng.uniform(-s, s, size=(n_actions, hidden_size)),
                                np.zeros(n_actions),
                                rng.uniform(-s, s, size=hidden_size), np.zeros(1))

    def forward(self, h: np.ndarray):
        logits = h @ self.w_pi.T + self.b_pi
        value = h @ self.w_v + self.b_v[0]
        return logits, value


@dataclass
class AgentSetup:
    variant: str
    n_actions: int
    obs_dim: int
    context_dim: int
    hidden_size: int = 50
    batch: int = 1
    kernel_delta: float = 1e-3

    @property
    def input_size(self) -> int:
        size = self.n_actions + 1 + self.obs_dim
        if self.variant == "l2rl_context":
            size += self.context_dim
        return size


@dataclass
class ActResult:
    actions: np.ndarray     # (B,) int
    log_probs: np.ndarray   # (B,)
    values: np.ndarray      # (B,)
    probs: np.ndarray       # (B, A)
    r_gate_mean: np.ndarray  # (B,)
    x: np.ndarray           # network input, for backprop
    cache: object           # eplstm StepCache


class Agent:
    """Batched actor: B workers sharing weights, each with its own state."""

    def __init__(self, setup: AgentSetup, rng: np.random.Generator):
        if setup.variant not in VARIANTS:
            raise ValueError(f"unknown variant {setup.variant!r}")
        self.setup = setup
        self.params = EpLstmParams.init(setup.input_size, setup.hidden_size, rng)
        self.heads = PolicyValueHeads.init(setup.n_actions, setup.hidden_size, rng)
        self.dnd = (BatchedDnd(setup.batch, setup.context_dim, setup.hidden_size,
                               kernel_delta=setup.kernel_delta)
                    if setup.variant == "epl2rl" else None)
        self.state = EpLstmState.zeros(setup.hidden_size, setup.batch)
        self.prev_action = np.zeros((setup.batch, setup.n_actions))
        self.prev_reward = np.zeros(setup.batch)
        self.episode_write_calls = 0

    # -- episode/epoch protocol ---------------------------------------------

    def begin_epoch(self) -> None:
        """Clear episodic memory; weights and heads are untouched."""
        if self.dnd is not None:
            self.dnd.clear_all()
        self.prev_action[:] = 0.0
        self.prev_reward[:] = 0.0
        self.episode_write_calls = 0

    def begin_episode(self) -> None:
        """Zero the recurrent state and blank the input channel."""
        self.state = EpLstmState.zeros(self.setup.hidden_size, self.setup.batch)
        self.prev_action[:] = 0.0
        self.prev_reward[:] = 0.0

    def build_input(self, obs: np.ndarray, context: np.ndarray | None) -> np.ndarray:
        parts = [self.prev_action, self.prev_reward[:, None], obs]
        if self.setup.variant == "l2rl_context":
            if context is None:
                raise ValueError("l2rl_context requires the context vector")
            parts.append(context)
        return np.concatenate(parts, axis=1)

    def act(self, obs: np.ndarray, query_keys: np.ndarray | None,
            rng: np.random.Generator, greedy: bool = False,
            context_absent: bool = False) -> ActResult:
        """One decision for every worker.

        epl2rl reads its store with the query (exactly one read per step
        with a context); on steps whose environment presents no context
        (context_absent), nothing is retrieved and the reinstatement term
        vanishes, the same way it does before any memory exists.
        """
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.setup.batch, self.setup.obs_dim):
            raise ValueError(f"obs shape {obs.shape} unexpected")
        if self.setup.variant == "epl2rl" and not context_absent:
            if query_keys is None:
                raise ValueError("epl2rl requires query keys")
            c_ep = self.dnd.read_all(query_keys)
        else:
            c_ep = np.zeros((self.setup.batch, self.setup.hidden_size))
        context = query_keys if self.setup.variant == "l2rl_context" else None
        x = self.build_input(obs, context)
        self.state, r_gate, cache = forward_step(self.params, x, self.state, c_ep)
        logits, values = self.heads.forward(self.state.h)
        if not np.isfinite(logits).all() or not np.isfinite(values).all():
            raise NumericalAbort(
                f"non-finite policy output (|h| max {np.abs(self.state.h).max():.3g})")
        logp = log_softmax(logits, axis=1)
        probs = np.exp(logp)
        if greedy:
            actions = probs.argmax(axis=1)
        else:
            u = rng.random(self.setup.batch)
            cum = np.cumsum(probs, axis=1)
            actions = np.minimum((u[:, None] > cum).sum(axis=1),
                                 self.setup.n_actions - 1)
        rows = np.arange(self.setup.batch)
        return ActResult(actions.astype(np.int64), logp[rows, actions],
                         values, probs, r_gate.mean(axis=1), x, cache)

    def observe(self, actions: np.ndarray, rewards: np.ndarray) -> None:
        """Feed the acted/rewarded step back into the input channel."""
        self.prev_action[:] = 0.0
        self.prev_action[np.arange(self.setup.batch), actions] = 1.0
        self.prev_reward[:] = rewards

    def end_episode(self, write_keys: list[list[np.ndarray]],
                    carry: tuple[np.ndarray, np.ndarray] | None = None) -> None:
        """Write the final cell state under each provided key (per worker),
        then reset the recurrent state.

        `carry` optionally names the (actions, rewards) pair the next
        episode's first input should report (the decision step of the
        episode just ended); without it the input channel starts blank.
        """
        if self.dnd is not None:
            self.episode_write_calls += 1
            for worker, keys in enumerate(write_keys):
                for key in keys:
                    self.dnd.write(worker, key, self.state.c[worker])
        self.begin_episode()
        if carry is not None:
            actions, rewards = carry
            self.observe(np.asarray(actions), np.asarray(rewards))

    def end_epoch(self) -> None:
        if self.dnd is not None:
            self.dnd.clear_all()

    # -- persistence ----------------------------------------------------------

    def param_arrays(self):
        """Named mutable arrays, in optimizer/checkpoint order."""
        return [("wx", self.params.wx), ("wh", self.params.wh), ("b", self.params.b),
                ("w_pi", self.heads.w_pi), ("b_pi", self.heads.b_pi),
                ("w_v", self.heads.w_v), ("b_v", self.heads.b_v)]

    def param_hash(self) -> str:
        import hashlib
        digest = hashlib.sha256()
        for _, arr in self.param_arrays():
            digest.update(arr.tobytes())
        return digest.hexdigest()[:16]

    def save(self, path, config_hash: str = "") -> None:
        arrays = {name: arr for name, arr in self.param_arrays()}
        np.savez(path, format_version=np.array(1), config_hash=np.array(config_hash),
                 variant=np.array(self.setup.variant), **arrays)

    def load(self, path) -> str:
        data = np.load(path, allow_pickle=False)
        if int(data["format_version"]) != 1:
            raise ValueError("unsupported checkpoint version")
        if str(data["variant"]) != self.setup.variant:
            raise ValueError(f"checkpoint is for variant {data['variant']}")
        for name, arr in self.param_arrays():
            if data[name].shape != arr.shape:
                raise ValueError(f"checkpoint tensor {name} has shape "
                                 f"{data[name].shape}, expected {arr.shape}")
            arr[:] = data[name]
        return str(data["config_hash"])
