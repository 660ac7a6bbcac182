"""Declarative experiment configuration.

Configs are flat key=value pairs grouped into sections (INI syntax).
Parsing is strict: unknown sections or keys are errors that name the
offender. A short hash of the canonical serialization (excluding the
output path) is stamped into every artifact this run produces.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, fields

from .agent import VARIANTS
from .taskgen import ENV_KINDS

MAZE_SIZE = 4
MAZE_CELLS = MAZE_SIZE * MAZE_SIZE


@dataclass
class ExperimentConfig:
    # experiment
    kind: str = "barcode_bandit"
    variant: str = "epl2rl"
    seed: int = 0
    out: str = "runs/out"
    # taskgen
    n_unique_contexts: int = 10
    duplicates: int = 10
    barcode_length: int = 10
    context_kind: str = "barcode"
    class_dim: int = 128
    noise_scale: float = 0.1
    # env
    n_arms: int = 10
    horizon: int = 10
    episodes_per_epoch: int = 100  # two_step only; derived elsewhere
    n_uncued: int = 50
    common_prob: float = 0.8
    reversal_prob: float = 0.1
    # dnd
    knn: int = 1
    kernel_delta: float = 1e-3
    # net
    hidden_size: int = 50
    # train
    lr: float = 1e-3
    gamma: float = 0.9
    value_coef: float = 0.5
    entropy_coef: float = 0.05
    entropy_coef_final: float = 0.0
    clip_norm: float = 5.0
    skip_norm: float = 1000.0
    workers: int = 32
    train_epochs: int = 200
    eval_epochs: int = 15
    eval_every: int = 0
    greedy_eval: bool = False

    # -- derived -------------------------------------------------------------

    @property
    def context_dim(self) -> int:
        return self.barcode_length if self.context_kind == "barcode" else self.class_dim

    @property
    def n_actions(self) -> int:
        return {"water_maze": 4, "two_step": 2,
                "compositional_bandit": 2}.get(self.kind, self.n_arms)

    @property
    def env_horizon(self) -> int:
        return 2 if self.kind == "two_step" else self.horizon

    @property
    def plan_episodes(self) -> int:
        if self.kind == "two_step":
            return self.episodes_per_epoch
        return self.n_unique_contexts * self.duplicates

    def validate(self) -> None:
        if self.kind not in ENV_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown agent variant {self.variant!r}")
        if self.context_kind not in ("barcode", "class"):
            raise ValueError(f"unknown context kind {self.context_kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("value_coef", "entropy_coef", "entropy_coef_final",
                     "noise_scale", "kernel_delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.horizon < 1 or self.workers < 1 or self.train_epochs < 0:
            raise ValueError("horizon, workers and train_epochs must be positive")
        if self.kind in ("barcode_bandit", "class_bandit"):
            if self.n_unique_contexts < self.n_arms:
                raise ValueError(f"{self.n_unique_contexts} contexts cannot "
                                 f"cover {self.n_arms} arms")
        if self.kind == "water_maze" and self.n_unique_contexts < MAZE_CELLS:
            raise ValueError(f"{self.n_unique_contexts} contexts cannot cover "
                             f"{MAZE_CELLS} goal cells")
        if self.kind == "two_step" and not 0 <= self.n_uncued <= self.episodes_per_epoch:
            raise ValueError("n_uncued must lie within the epoch")


SECTIONS = {
    "experiment": ["kind", "variant", "seed", "out"],
    "taskgen": ["n_unique_contexts", "duplicates", "barcode_length",
                "context_kind", "class_dim", "noise_scale"],
    "env": ["n_arms", "horizon", "episodes_per_epoch", "n_uncued",
            "common_prob", "reversal_prob"],
    "dnd": ["knn", "kernel_delta"],
    "net": ["hidden_size"],
    "train": ["lr", "gamma", "value_coef", "entropy_coef",
              "entropy_coef_final", "clip_norm", "skip_norm", "workers",
              "train_epochs", "eval_epochs", "eval_every", "greedy_eval"],
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def to_text(config: ExperimentConfig, include_out: bool = True) -> str:
    """Canonical serialization; field order is fixed by the section table."""
    lines = []
    for section, names in SECTIONS.items():
        lines.append(f"[{section}]")
        for name in names:
            if name == "out" and not include_out:
                continue
            value = getattr(config, name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{name} = {value}")
        lines.append("")
    return "\n".join(lines)


def from_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"config syntax error: {exc}") from exc
    config = ExperimentConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            setattr(config, key, _parse_value(key, raw))
    config.validate()
    return config


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return from_text(fh.read())


def save(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash={config_hash(config)}\n")
        fh.write(to_text(config))


def config_hash(config: ExperimentConfig) -> str:
    """Hash of everything that can change results (the out path cannot)."""
    canon = to_text(config, include_out=False)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


# -- presets -----------------------------------------------------------------

def _base(**kw) -> ExperimentConfig:
    config = ExperimentConfig(**kw)
    config.validate()
    return config


def preset(name: str) -> ExperimentConfig:
    """Named configurations; the paper-scale ones carry the published
    constants, the desk ones shrink context counts for quick runs."""
    presets = {
        "barcode": dict(kind="barcode_bandit", n_arms=10, horizon=10,
                        barcode_length=10, n_unique_contexts=10, duplicates=10,
                        gamma=0.9, train_epochs=200),
        "barcode_desk": dict(kind="barcode_bandit", n_arms=5, horizon=10,
                             barcode_length=8, n_unique_contexts=6, duplicates=6,
                             gamma=0.9, train_epochs=260, eval_epochs=12),
        "class_bandit": dict(kind="class_bandit", n_arms=10, horizon=10,
                             context_kind="class", class_dim=128, noise_scale=0.1,
                             n_unique_contexts=10, duplicates=10, gamma=0.9),
        "compositional": dict(kind="compositional_bandit", horizon=10,
                              context_kind="class", class_dim=128,
                              n_unique_contexts=200, duplicates=5, gamma=0.9,
                              train_epochs=40),
        "maze": dict(kind="water_maze", horizon=20, barcode_length=10,
                     n_unique_contexts=16, duplicates=6, gamma=0.99,
                     train_epochs=200),
        "maze_desk": dict(kind="water_maze", horizon=20, barcode_length=8,
                          n_unique_contexts=16, duplicates=4, gamma=0.99,
                          train_epochs=220, eval_epochs=6),
        "two_step": dict(kind="two_step", barcode_length=10,
                         episodes_per_epoch=100, n_uncued=50, gamma=0.9,
                         entropy_coef=0.02, train_epochs=700, eval_epochs=30),
        "two_step_desk": dict(kind="two_step", barcode_length=8,
                              episodes_per_epoch=100, n_uncued=50, gamma=0.9,
                              entropy_coef=0.02, train_epochs=700,
                              eval_epochs=16),
    }
    if name not in presets:
        raise ValueError(f"unknown preset {name!r}; have {sorted(presets)}")
    return _base(**presets[name])


PRESET_NAMES = ("barcode", "barcode_desk", "class_bandit", "compositional",
                "maze", "maze_desk", "two_step", "two_step_desk")
