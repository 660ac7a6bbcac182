"""CSV artifact IO: fixed column order, a metadata comment line carrying
the config hash and seed, and round-trip-stable number formatting so
identical runs produce byte-identical files."""

from __future__ import annotations

import numpy as np
import pandas as pd

METRICS_COLUMNS = ["worker", "epoch", "episode", "task_id", "exposure", "ret",
                   "policy_loss", "value_loss", "entropy", "grad_norm",
                   "skipped", "mean_r_gate"]

STEP_COLUMNS = ["worker", "epoch", "episode", "step", "task_id", "exposure",
                "stage", "cued", "cue_ref", "transition", "action", "reward",
                "chosen_expected_reward", "optimal_expected_reward",
                "value_estimate", "r_gate_mean", "pos_x", "pos_y", "goal_x",
                "goal_y", "respawn", "bfs_spawn_goal"]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


class CsvLog:
    """Append-only CSV with a leading '# key=value ...' metadata line."""

    def __init__(self, path, columns: list[str], meta: dict):
        self.columns = columns
        self._fh = open(path, "w")
        pairs = " ".join(f"{k}={v}" for k, v in meta.items())
        self._fh.write(f"# {pairs}\n")
        self._fh.write(",".join(columns) + "\n")

    def write(self, row: dict) -> None:
        self._fh.write(",".join(format_cell(row.get(c)) for c in self.columns) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_meta(path) -> dict:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        return {}
    meta = {}
    for pair in first.lstrip("#").split():
        if "=" in pair:
            key, value = pair.split("=", 1)
            meta[key] = value
    return meta


def read_log(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def check_same_hash(paths, force: bool = False) -> str:
    """All inputs must carry the same config hash unless forced."""
    hashes = {p: read_meta(p).get("config_hash", "") for p in paths}
    unique = set(hashes.values())
    if len(unique) > 1 and not force:
        detail = ", ".join(f"{p}: {h or '<none>'}" for p, h in hashes.items())
        raise ValueError(f"config hash mismatch across inputs ({detail})")
    return next(iter(unique)) if unique else ""
