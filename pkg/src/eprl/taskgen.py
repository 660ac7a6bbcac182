"""Task sequence generation with controlled reoccurrence.

Two samplers are provided. The urn scheme draws a fresh task from a base
distribution with probability alpha/(alpha+n) and otherwise duplicates a
uniformly chosen previous draw ("rich get richer"); it is exercised by
tests and the CLI demo. All experiments use the bag scheme: an epoch is a
bag holding each (context, parameters) pair a fixed number of times,
consumed by uniform sampling without replacement, with the context-to-
parameter mapping refreshed every epoch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ENV_KINDS = ("barcode_bandit", "class_bandit", "compositional_bandit",
             "water_maze", "two_step")


@dataclass
class TaskSpec:
    """One task: environment parameters plus the context that identifies it."""

    task_id: str
    mdp_params: dict
    context: np.ndarray | None = None


@dataclass
class UrnState:
    alpha: float
    drawn: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.drawn)


def urn_draw(state: UrnState, base, rng: np.random.Generator) -> TaskSpec:
    """One draw: fresh from `base(rng)` w.p. alpha/(alpha+n), else a copy
    of a uniform prior draw. The draw is appended to the urn either way."""
    if state.alpha <= 0:
        raise ValueError("alpha must be positive")
    p_new = state.alpha / (state.alpha + state.n)
    if state.n == 0 or rng.random() < p_new:
        task = base(rng)
    else:
        task = state.drawn[int(rng.integers(state.n))]
    state.drawn.append(task)
    return task


def sample_barcode(length: int, rng: np.random.Generator,
                   exclude=None) -> np.ndarray:
    """Uniform code from {0,1}^length, rejecting any in `exclude`."""
    if length < 1:
        raise ValueError("barcode length must be >= 1")
    exclude = exclude or set()
    if len(exclude) >= 2 ** length:
        raise ValueError(f"only {2 ** length} codes of length {length} exist")
    while True:
        code = rng.integers(0, 2, size=length)
        if code.tobytes() not in exclude:
            return code.astype(np.float64)


def sample_unique_barcodes(length: int, count: int,
                           rng: np.random.Generator,
                           forbid_zero: bool = False) -> list[np.ndarray]:
    capacity = 2 ** length - (1 if forbid_zero else 0)
    if count > capacity:
        raise ValueError(f"cannot draw {count} unique codes of length {length}")
    seen = set()
    if forbid_zero:
        seen.add(np.zeros(length, dtype=np.int64).tobytes())
    codes = []
    while len(codes) < count:
        code = sample_barcode(length, rng, exclude=seen)
        seen.add(code.astype(np.int64).tobytes())
        codes.append(code)
    return codes


def sample_class_prototypes(n_classes: int, dim: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Unit vectors drawn isotropically; one prototype per class."""
    protos = rng.standard_normal((n_classes, dim))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def sample_class_instance(prototype: np.ndarray, noise_scale: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Unit-norm perturbation of a class prototype.

    noise_scale 0.1 at dimension 128 keeps same-class instances far closer
    (cosine) to each other than to other classes with near certainty.
    """
    prototype = np.asarray(prototype, dtype=np.float64)
    if abs(np.linalg.norm(prototype) - 1.0) > 1e-6:
        raise ValueError("prototype must have unit norm")
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    if noise_scale == 0.0:
        return prototype.copy()
    while True:
        vec = prototype + noise_scale * rng.standard_normal(prototype.shape)
        norm = np.linalg.norm(vec)
        if norm > 0.0:  # zero-norm draw has probability ~0; resample
            return vec / norm


@dataclass
class EpochPlan:
    """A bag of tasks with a without-replacement consumption order.

    slots[i] is the i-th episode: (task index into `tasks`, per-occurrence
    context). For barcode tasks the per-occurrence context is the task's
    own code; for class tasks it is a fresh instance of the class. The
    exposures list counts earlier occurrences of the same task, and for
    compositional epochs slots carry paired (high, low) entries.
    """

    env_kind: str
    tasks: list[TaskSpec]
    slots: list
    exposures: list
    mapping_seed: int

    @property
    def episodes_per_epoch(self) -> int:
        return len(self.slots)


def _assign_covering(n_contexts: int, n_positions: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Random context->position map hitting every position at least once."""
    assignment = np.empty(n_contexts, dtype=np.int64)
    order = rng.permutation(n_contexts)
    positions = rng.permutation(n_positions)
    assignment[order[:n_positions]] = positions
    assignment[order[n_positions:]] = rng.integers(
        0, n_positions, size=n_contexts - n_positions)
    return assignment


def build_epoch(env_kind: str, n_unique_contexts: int, duplicates: int,
                n_arms_or_goals: int, rng: np.random.Generator,
                context_kind: str = "barcode", barcode_length: int = 10,
                class_dim: int = 128, noise_scale: float = 0.1,
                prototypes: np.ndarray | None = None) -> EpochPlan:
    """Build one epoch: fresh contexts, fresh mapping, shuffled bag.

    For bandit/maze kinds each of the n_unique_contexts tasks is mapped to
    a rewarding position (all positions covered) and duplicated
    `duplicates` times. For the compositional kind, n_unique_contexts
    counts contexts PER BAG (one high-reward bag, one disjoint low-reward
    bag) and slots pair one draw from each.
    """
    if env_kind not in ENV_KINDS:
        raise ValueError(f"unknown env kind {env_kind!r}")
    if duplicates < 1 or n_unique_contexts < 1:
        raise ValueError("need at least one context and one duplicate")
    mapping_seed = int(rng.integers(0, 2 ** 31 - 1))

    def make_contexts(count):
        if context_kind == "barcode":
            return sample_unique_barcodes(barcode_length, count, rng)
        if context_kind == "class":
            if prototypes is not None:
                if len(prototypes) < count:
                    raise ValueError("not enough prototypes supplied")
                idx = rng.choice(len(prototypes), size=count, replace=False)
                return [prototypes[i] for i in idx]
            return list(sample_class_prototypes(count, class_dim, rng))
        raise ValueError(f"unknown context kind {context_kind!r}")

    def occurrence(ctx):
        if context_kind == "class":
            return sample_class_instance(ctx, noise_scale, rng)
        return ctx.copy()

    if env_kind == "compositional_bandit":
        hi = make_contexts(n_unique_contexts)
        lo = make_contexts(n_unique_contexts)
        tasks = (
            [TaskSpec(f"hi{j}", {"reward_prob": 0.9}, c) for j, c in enumerate(hi)]
            + [TaskSpec(f"lo{j}", {"reward_prob": 0.1}, c) for j, c in enumerate(lo)]
        )
        hi_bag = rng.permutation(np.repeat(np.arange(n_unique_contexts), duplicates))
        lo_bag = rng.permutation(
            np.repeat(np.arange(n_unique_contexts, 2 * n_unique_contexts), duplicates))
        slots = [((int(a), occurrence(tasks[a].context)),
                  (int(b), occurrence(tasks[b].context)))
                 for a, b in zip(hi_bag, lo_bag)]
        seen = {}
        exposures = []
        for (a, _), (b, _) in slots:
            exposures.append((seen.get(a, 0), seen.get(b, 0)))
            seen[a] = seen.get(a, 0) + 1
            seen[b] = seen.get(b, 0) + 1
        return EpochPlan(env_kind, tasks, slots, exposures, mapping_seed)

    if env_kind == "two_step":
        # no context->parameter mapping; the epoch is just an episode count
        count = n_unique_contexts * duplicates
        tasks = [TaskSpec("two_step", {}, None)]
        slots = [(0, None)] * count
        return EpochPlan(env_kind, tasks, slots, [0] * count, mapping_seed)

    if n_unique_contexts < n_arms_or_goals:
        raise ValueError(
            f"{n_unique_contexts} contexts cannot cover {n_arms_or_goals} positions")
    contexts = make_contexts(n_unique_contexts)
    assignment = _assign_covering(n_unique_contexts, n_arms_or_goals, rng)
    tasks = []
    for j, (ctx, pos) in enumerate(zip(contexts, assignment)):
        if env_kind == "water_maze":
            params = {"goal": int(pos)}
        else:
            params = {"best_arm": int(pos)}
        tasks.append(TaskSpec(f"t{j}", params, ctx))
    bag = rng.permutation(np.repeat(np.arange(n_unique_contexts), duplicates))
    slots = [(int(j), occurrence(tasks[j].context)) for j in bag]
    seen = {}
    exposures = []
    for j, _ in slots:
        exposures.append(seen.get(j, 0))
        seen[j] = seen.get(j, 0) + 1
    return EpochPlan(env_kind, tasks, slots, exposures, mapping_seed)


def save_plan(plan: EpochPlan, path) -> None:
    """Serialize a plan for replay and cross-run diffing."""
    def slot_json(slot):
        if plan.env_kind == "compositional_bandit":
            (a, ca), (b, cb) = slot
            return {"hi": a, "hi_context": ca.tolist(), "lo": b, "lo_context": cb.tolist()}
        j, ctx = slot
        return {"task": j, "context": None if ctx is None else ctx.tolist()}

    payload = {
        "format_version": 1,
        "env_kind": plan.env_kind,
        "mapping_seed": plan.mapping_seed,
        "tasks": [
            {"task_id": t.task_id, "mdp_params": t.mdp_params,
             "context": None if t.context is None else t.context.tolist()}
            for t in plan.tasks
        ],
        "slots": [slot_json(s) for s in plan.slots],
        "exposures": plan.exposures,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_plan(path) -> EpochPlan:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise ValueError("unsupported plan file version")
    tasks = [TaskSpec(t["task_id"], t["mdp_params"],
                      None if t["context"] is None else np.array(t["context"]))
             for t in payload["tasks"]]
    slots = []
    for s in payload["slots"]:
        if payload["env_kind"] == "compositional_bandit":
            slots.append(((s["hi"], np.array(s["hi_context"])),
                          (s["lo"], np.array(s["lo_context"]))))
        else:
            ctx = None if s["context"] is None else np.array(s["context"])
            slots.append((s["task"], ctx))
    exposures = [tuple(e) if isinstance(e, list) else e for e in payload["exposures"]]
    return EpochPlan(payload["env_kind"], tasks, slots, exposures,
                     payload["mapping_seed"])
