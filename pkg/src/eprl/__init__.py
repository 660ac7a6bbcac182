"""Meta-RL laboratory with an episodic memory pathway."""

from .agent import Agent, AgentSetup, NumericalAbort, PolicyValueHeads
from .config import ExperimentConfig, config_hash, preset
from .dnd import BatchedDnd, DndStore
from .eplstm import EpLstmParams, EpLstmState, backward_step, forward_step, unroll
from .taskgen import EpochPlan, TaskSpec, UrnState, build_epoch, urn_draw
from .trainer import Adam, Trainer, compute_advantages, compute_returns

__all__ = [
    "Agent", "AgentSetup", "NumericalAbort", "PolicyValueHeads",
    "ExperimentConfig", "config_hash", "preset",
    "BatchedDnd", "DndStore",
    "EpLstmParams", "EpLstmState", "backward_step", "forward_step", "unroll",
    "EpochPlan", "TaskSpec", "UrnState", "build_epoch", "urn_draw",
    "Adam", "Trainer", "compute_advantages", "compute_returns",
]
