"""Turns trajectory logs into figure-ready tables and statistics:
exposure-binned cumulative regret, steps-to-goal summaries, r-gate time
courses with significance tests, and a four-strategy choice model fitted
by maximum likelihood.

All functions consume pandas frames with the documented log columns and
return tidy frames; the CSV emitters stamp the config hash so figure
tooling can refuse mismatched inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit

from .recording import CsvLog

STRATEGIES = ("imf", "imb", "emf", "emb")


# ---------------------------------------------------------------------------
# regret

def regret_by_exposure(steps: pd.DataFrame) -> pd.DataFrame:
    """Mean cumulative expected regret per trial, one curve per exposure bin.

    Regret of a step is optimal minus chosen expected reward; curves
    accumulate within episodes and average over episodes in the bin.
    """
    required = {"exposure", "worker", "epoch", "episode", "step",
                "chosen_expected_reward", "optimal_expected_reward"}
    missing = required - set(steps.columns)
    if missing:
        raise ValueError(f"steps log lacks columns {sorted(missing)}")
    frame = steps.copy()
    frame["instant_regret"] = (frame["optimal_expected_reward"]
                               - frame["chosen_expected_reward"])
    frame = frame.sort_values(["worker", "epoch", "episode", "step"])
    frame["cum_regret"] = frame.groupby(["worker", "epoch", "episode"])[
        "instant_regret"].cumsum()
    if frame.empty:
        warnings.warn("no step records; all exposure bins omitted")
    rows = []
    for exposure, group in frame.groupby("exposure"):
        per_trial = group.groupby("step")["cum_regret"].agg(["mean", "count"])
        for step, stats_row in per_trial.iterrows():
            rows.append({"exposure": int(exposure), "trial": int(step) + 1,
                         "cum_regret_mean": float(stats_row["mean"]),
                         "n_episodes": int(stats_row["count"])})
    return pd.DataFrame(rows, columns=["exposure", "trial", "cum_regret_mean",
                                       "n_episodes"])


def final_regret_by_exposure(regret: pd.DataFrame) -> pd.DataFrame:
    """Last-trial cumulative regret per exposure bin."""
    last = regret.groupby("exposure")["trial"].transform("max")
    return regret[regret["trial"] == last][["exposure", "cum_regret_mean"]]


def regret_trend(regret: pd.DataFrame):
    """Spearman correlation between exposure and final cumulative regret."""
    final = final_regret_by_exposure(regret)
    rho, p = stats.spearmanr(final["exposure"], final["cum_regret_mean"])
    return float(rho), float(p)


# ---------------------------------------------------------------------------
# maze navigation

def _bootstrap_ci(values: np.ndarray, rng: np.random.Generator,
                  resamples: int = 1000, level: float = 0.95):
    if len(values) == 0:
        return float("nan"), float("nan")
    means = np.empty(resamples)
    n = len(values)
    for i in range(resamples):
        means[i] = values[rng.integers(0, n, size=n)].mean()
    lo, hi = np.percentile(means, [(1 - level) / 2 * 100, (1 + level) / 2 * 100])
    return float(lo), float(hi)


def steps_to_goal_by_exposure(steps: pd.DataFrame,
                              seed: int = 0) -> pd.DataFrame:
    """Steps from episode start (and from each respawn) to the next goal,
    summarized per exposure bin with percentile-bootstrap intervals.

    Episodes that never reach the goal are censored at the horizon and
    counted in censored_frac.
    """
    required = {"exposure", "worker", "epoch", "episode", "step", "reward",
                "respawn", "bfs_spawn_goal"}
    missing = required - set(steps.columns)
    if missing:
        raise ValueError(f"steps log lacks columns {sorted(missing)}")
    rng = np.random.default_rng(seed)
    segments = {"start": {}, "respawn": {}}
    bfs = {}
    horizon = int(steps["step"].max()) + 1
    for (_, _, _, exposure), ep in steps.groupby(["worker", "epoch", "episode",
                                                  "exposure"]):
        ep = ep.sort_values("step")
        rewards = ep["reward"].to_numpy()
        goal_steps = np.flatnonzero(rewards > 0)
        first = goal_steps[0] + 1 if len(goal_steps) else horizon
        censored = not len(goal_steps)
        segments["start"].setdefault(exposure, []).append((first, censored))
        bfs.setdefault(exposure, []).append(float(ep["bfs_spawn_goal"].iloc[0]))
        for i, start in enumerate(goal_steps):
            later = goal_steps[goal_steps > start]
            if len(later):
                segments["respawn"].setdefault(exposure, []).append(
                    (later[0] - start, False))
            else:
                segments["respawn"].setdefault(exposure, []).append(
                    (horizon - 1 - start, True))
    rows = []
    for segment, per_exposure in segments.items():
        for exposure in sorted(per_exposure):
            data = per_exposure[exposure]
            values = np.array([v for v, _ in data], dtype=float)
            censored = np.array([c for _, c in data])
            lo, hi = _bootstrap_ci(values, rng)
            rows.append({
                "exposure": int(exposure), "segment": segment,
                "mean_steps": float(values.mean()), "ci_lo": lo, "ci_hi": hi,
                "n": len(values), "censored_frac": float(censored.mean()),
                "mean_bfs_optimal": (float(np.mean(bfs[exposure]))
                                     if segment == "start" else float("nan")),
            })
    return pd.DataFrame(rows, columns=["exposure", "segment", "mean_steps",
                                       "ci_lo", "ci_hi", "n", "censored_frac",
                                       "mean_bfs_optimal"])


# ---------------------------------------------------------------------------
# r-gate statistics

def welch_ttest(group_a, group_b):
    """Two-tailed Welch unequal-variance t-test; groups of size < 2 give
    (nan, nan) rather than a test."""
    a, b = np.asarray(group_a, dtype=float), np.asarray(group_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        return float("nan"), float("nan")
    if np.var(a) == 0 and np.var(b) == 0:
        # degenerate constant groups: identical means are a non-effect
        return (0.0, 1.0) if a.mean() == b.mean() else (float("inf"), 0.0)
    t, p = stats.ttest_ind(a, b, equal_var=False)
    return float(t), float(p)


def rgate_timecourse(steps: pd.DataFrame) -> pd.DataFrame:
    """Mean r-gate per step position, grouped by stage and cue status."""
    if "r_gate_mean" not in steps.columns:
        raise ValueError("steps log lacks r_gate_mean")
    frame = steps.copy()
    if "stage" not in frame.columns:
        frame["stage"] = 0
    if "cued" not in frame.columns:
        frame["cued"] = 0
    frame["stage"] = frame["stage"].fillna(0).astype(int)
    frame["cued"] = frame["cued"].fillna(0).astype(int)
    grouped = (frame.groupby(["stage", "cued", "step"])["r_gate_mean"]
               .agg(["mean", "count"]).reset_index())
    grouped.columns = ["stage", "cued", "step", "r_gate_mean", "n"]
    return grouped


def rgate_cued_contrast(steps: pd.DataFrame):
    """Welch test of per-step r-gate values, cued vs uncued episodes."""
    cued = steps.loc[steps["cued"] == 1, "r_gate_mean"].to_numpy()
    uncued = steps.loc[steps["cued"] == 0, "r_gate_mean"].to_numpy()
    t, p = welch_ttest(cued, uncued)
    return {"mean_cued": float(np.mean(cued)) if len(cued) else float("nan"),
            "mean_uncued": float(np.mean(uncued)) if len(uncued) else float("nan"),
            "t": t, "p": p}


def rgate_correct_vs_wrong(steps: pd.DataFrame):
    """Welch test of r-gate on cued decision steps, split by whether the
    chosen action was the one with the best expected reward."""
    decisions = steps[(steps["cued"] == 1) & (steps["stage"] == 1)]
    correct_mask = (decisions["chosen_expected_reward"]
                    >= decisions["optimal_expected_reward"] - 1e-12)
    correct = decisions.loc[correct_mask, "r_gate_mean"].to_numpy()
    wrong = decisions.loc[~correct_mask, "r_gate_mean"].to_numpy()
    t, p = welch_ttest(correct, wrong)
    return {"mean_correct": float(np.mean(correct)) if len(correct) else float("nan"),
            "mean_wrong": float(np.mean(wrong)) if len(wrong) else float("nan"),
            "t": t, "p": p}


# ---------------------------------------------------------------------------
# choice model

@dataclass
class ChoiceModelFit:
    beta: dict            # intercept + one weight per strategy
    std_errors: dict
    log_likelihood: float
    n_episodes: int
    converged: bool
    separated: bool


def signed_predictor(action: int, rewarded: bool) -> float:
    """+1/-1 coding: repeat a rewarded action, avoid an unrewarded one,
    expressed relative to choosing action 0."""
    s = 1.0 if rewarded else -1.0
    return s if action == 0 else -s


def build_twostep_episode_table(steps: pd.DataFrame) -> pd.DataFrame:
    """Per-episode decision records with the four strategy predictors.

    The incremental predictors read the immediately previous episode of
    the same worker and epoch; the episodic ones read the cue-referenced
    episode. Uncued episodes carry zero episodic predictors; the first
    episode of an epoch carries zero incremental predictors.
    """
    decisions = steps[steps["stage"] == 1].copy()
    decisions = decisions.sort_values(["worker", "epoch", "episode"])
    rows = []
    for (worker, epoch), block in decisions.groupby(["worker", "epoch"]):
        block = block.sort_values("episode")
        by_episode = {int(r.episode): r for r in block.itertuples()}
        for idx, rec in by_episode.items():
            x = {"x_imf": 0.0, "x_imb": 0.0, "x_emf": 0.0, "x_emb": 0.0}
            prev = by_episode.get(idx - 1)
            if prev is not None:
                x["x_imf"] = signed_predictor(int(prev.action), prev.reward > 0)
                x["x_imb"] = (x["x_imf"] if prev.transition == "common"
                              else -x["x_imf"])
            if rec.cued == 1 and rec.cue_ref >= 0:
                arch = by_episode.get(int(rec.cue_ref))
                if arch is not None:
                    x["x_emf"] = signed_predictor(int(arch.action), arch.reward > 0)
                    x["x_emb"] = (x["x_emf"] if arch.transition == "common"
                                  else -x["x_emf"])
            rows.append({"worker": worker, "epoch": epoch, "episode": idx,
                         "chose_first_action": int(rec.action) == 0,
                         "cued": int(rec.cued), **x})
    return pd.DataFrame(rows)


def _log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    z = X @ beta
    # log sigma(z) for y=1, log sigma(-z) for y=0, stably
    signs = np.where(y > 0, 1.0, -1.0)
    return float(-np.logaddexp(0.0, -signs * z).sum())


def fit_choice_model(episodes: pd.DataFrame, max_iter: int = 200,
                     grad_tol: float = 1e-8,
                     weight_cap: float = 15.0) -> ChoiceModelFit:
    """Logistic choice model over the four strategy predictors.

    Newton-Raphson ascent with step halving, so the likelihood never
    decreases; convergence is declared at gradient norm < grad_tol.
    Perfect separation is reported via capped weights and a flag.
    """
    if len(episodes) < 100:
        raise ValueError(f"need at least 100 episodes, got {len(episodes)}")
    X = np.column_stack([np.ones(len(episodes))]
                        + [episodes[f"x_{s}"].to_numpy(dtype=float)
                           for s in STRATEGIES])
    y = episodes["chose_first_action"].to_numpy(dtype=float)
    beta = np.zeros(X.shape[1])
    converged = separated = False
    ll = _log_likelihood(X, y, beta)
    for _ in range(max_iter):
        p = expit(X @ beta)
        grad = X.T @ (y - p)
        if np.linalg.norm(grad) < grad_tol:
            converged = True
            break
        w = np.clip(p * (1.0 - p), 1e-12, None)
        hessian = X.T @ (X * w[:, None])
        try:
            direction = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            direction = grad
        step = 1.0
        for _ in range(50):
            candidate = beta + step * direction
            candidate_ll = _log_likelihood(X, y, candidate)
            if candidate_ll >= ll - 1e-12:
                break
            step *= 0.5
        beta, ll = beta + step * direction, candidate_ll
        if np.abs(beta).max() > weight_cap:
            separated = True
            beta = np.clip(beta, -weight_cap, weight_cap)
            ll = _log_likelihood(X, y, beta)
            break
    p = expit(X @ beta)
    w = np.clip(p * (1.0 - p), 1e-12, None)
    information = X.T @ (X * w[:, None])
    try:
        covariance = np.linalg.inv(information)
        ses = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    except np.linalg.LinAlgError:
        ses = np.full(X.shape[1], np.nan)
    names = ["intercept"] + list(STRATEGIES)
    return ChoiceModelFit(dict(zip(names, beta.tolist())),
                          dict(zip(names, ses.tolist())),
                          ll, len(episodes), converged, separated)


def simulate_strategy_mix(beta: dict, n_episodes: int,
                          rng: np.random.Generator,
                          cued_fraction: float = 0.5) -> pd.DataFrame:
    """Synthetic decision records drawn from known strategy weights; the
    recovery tests fit these and compare against the generating beta."""
    rows = []
    for i in range(n_episodes):
        cued = rng.random() < cued_fraction
        x = {"x_imf": signed_predictor(int(rng.integers(2)), rng.random() < 0.5)}
        x["x_imb"] = x["x_imf"] * (1.0 if rng.random() < 0.5 else -1.0)
        if cued:
            x["x_emf"] = signed_predictor(int(rng.integers(2)), rng.random() < 0.5)
            x["x_emb"] = x["x_emf"] * (1.0 if rng.random() < 0.5 else -1.0)
        else:
            x["x_emf"] = x["x_emb"] = 0.0
        z = beta.get("intercept", 0.0) + sum(beta.get(s, 0.0) * x[f"x_{s}"]
                                             for s in STRATEGIES)
        rows.append({"worker": 0, "epoch": 0, "episode": i,
                     "chose_first_action": bool(rng.random() < expit(z)),
                     "cued": int(cued), **x})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# training curves and CSV emitters

def training_curve(metric_frames: list[pd.DataFrame]) -> pd.DataFrame:
    """Mean return per epoch with a +-1 sd band across runs (seeds)."""
    if not metric_frames:
        raise ValueError("no metrics provided")
    per_seed = [frame.groupby("epoch")["ret"].mean() for frame in metric_frames]
    table = pd.concat(per_seed, axis=1)
    mean = table.mean(axis=1)
    sd = table.std(axis=1, ddof=0)
    return pd.DataFrame({"epoch": table.index, "n_runs": table.notna().sum(axis=1),
                         "return_mean": mean, "return_lo": mean - sd,
                         "return_hi": mean + sd}).reset_index(drop=True)


def _emit(frame: pd.DataFrame, columns: list[str], path, meta: dict) -> None:
    with CsvLog(path, columns, meta) as log:
        for row in frame.to_dict(orient="records"):  # keeps column dtypes
            log.write(row)


def write_training_curve(frame, path, meta):
    _emit(frame, ["epoch", "n_runs", "return_mean", "return_lo", "return_hi"],
          path, meta)


def write_regret(frame, path, meta):
    _emit(frame, ["exposure", "trial", "cum_regret_mean", "n_episodes"],
          path, meta)


def write_maze_steps(frame, path, meta):
    _emit(frame, ["exposure", "segment", "mean_steps", "ci_lo", "ci_hi", "n",
                  "censored_frac", "mean_bfs_optimal"], path, meta)


def write_rgate_timecourse(frame, path, meta):
    _emit(frame, ["stage", "cued", "step", "r_gate_mean", "n"], path, meta)


def write_choice_fit(fit: ChoiceModelFit, path, meta):
    rows = pd.DataFrame([
        {"strategy": name, "weight": fit.beta[name],
         "std_error": fit.std_errors[name],
         "log_likelihood": fit.log_likelihood, "n_episodes": fit.n_episodes,
         "converged": int(fit.converged), "separated": int(fit.separated)}
        for name in fit.beta])
    _emit(rows, ["strategy", "weight", "std_error", "log_likelihood",
                 "n_episodes", "converged", "separated"], path, meta)
