"""Experiment harness: baseline schedules, rollout evaluation, run directories.

One experiment seed fully determines training, the held-out evaluation
rollouts, and every emitted CSV byte. Evaluation uses common random numbers
across policies: rollout r of every policy sees the same noise stream.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from .env import LiquidationEnv, rollout
from .errors import MissingFile
from .market import AssetSpec, BasketPreset, ExecutionRules, load_preset, save_preset
from .metrics import EpisodeReport
from .rl.features import ActionGrid, StateObs, obs_from_state
from .rl.training import (
    Checkpoint,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    train,
)

POLICY_NAMES = ("trained", "twap", "immediate", "random", "zero")

# evaluation rollouts draw from a seed stream disjoint from training
_EVAL_STREAM = 0x5EED
_PROFILE_STREAM = 0xF16


def baseline_twap(spec: AssetSpec, n_steps: int) -> np.ndarray:
    """Equal slices floor(N/K) with the final slice absorbing the remainder."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    base = math.floor(spec.inventory / n_steps)
    schedule = np.full(n_steps, float(base))
    schedule[-1] += spec.inventory - base * n_steps
    return schedule


def twap_policy(preset: BasketPreset, horizon: int):
    table = np.column_stack([baseline_twap(s, horizon) for s in preset.specs()])

    def policy(state, rng):
        return table[state.step]

    return policy


def immediate_policy(preset: BasketPreset):
    """Sell the clip every step until inventory is gone."""

    def policy(state, rng):
        return np.minimum(preset.max_clip, state.remaining)

    return policy


def random_policy(preset: BasketPreset, grid_levels: int = 5, allow_buy: bool = False):
    grid = ActionGrid.linear(preset.max_clip, grid_levels, allow_buy)

    def policy(state, rng):
        idx = tuple(int(rng.integers(0, s)) for s in grid.sizes)
        return grid.shares(idx)

    return policy


def zero_policy():
    def policy(state, rng):
        return np.zeros(state.n)

    return policy


def trained_policy(checkpoint: Checkpoint):
    """Greedy exploitation of the learned critic (the algorithm's epsilon->0 rule)."""
    policy_obj, theta, omega = checkpoint.policy, checkpoint.theta, checkpoint.omega

    def policy(state, rng):
        obs = obs_from_state(state)
        idx = policy_obj.greedy_action(omega, theta, obs)
        shares = policy_obj.grid.shares(idx)
        return np.where(shares >= 0, np.minimum(shares, obs.remaining), shares)

    return policy


def make_policy(
    name: str,
    preset: BasketPreset,
    horizon: int,
    checkpoint: Checkpoint | None = None,
    grid_levels: int = 5,
    allow_buy: bool = False,
):
    if name == "trained":
        if checkpoint is None:
            raise ValueError("trained policy needs a checkpoint")
        return trained_policy(checkpoint)
    if name == "twap":
        return twap_policy(preset, horizon)
    if name == "immediate":
        return immediate_policy(preset)
    if name == "random":
        return random_policy(preset, grid_levels, allow_buy)
    if name == "zero":
        return zero_policy()
    raise ValueError(f"unknown policy {name!r}; choose from {POLICY_NAMES}")


@dataclass
class EvalResult:
    """Monte-Carlo summary of R independent rollouts of one policy."""

    policy: str
    rollouts: int
    shortfall_mean: float
    shortfall_se: float
    error_mean: np.ndarray  # (K, n) mean tracking error at each trading period
    error_se: np.ndarray
    per_asset_shortfall_mean: np.ndarray  # (K, n) mean running shortfall
    first_report: EpisodeReport


def evaluate(
    policy_name: str,
    preset: BasketPreset,
    horizon: int,
    n_rollouts: int,
    seed: int,
    checkpoint: Checkpoint | None = None,
    force_complete: bool = True,
) -> EvalResult:
    """Run R held-out rollouts and average the shortfall and error series."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    env = LiquidationEnv(preset, horizon, force_complete=force_complete)
    policy = make_policy(policy_name, preset, horizon, checkpoint)
    children = np.random.SeedSequence([seed, _EVAL_STREAM]).spawn(n_rollouts)
    finals = np.zeros(n_rollouts)
    errors = np.zeros((n_rollouts, horizon, preset.n))
    cum_shortfall = np.zeros((horizon, preset.n))
    first_report = None
    for r, child in enumerate(children):
        report = rollout(env, policy, np.random.default_rng(child))
        finals[r] = float(report.report.total[-1])
        errors[r] = report.errors
        cum_shortfall += report.report.per_asset
        if r == 0:
            first_report = report
    se = float(finals.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return EvalResult(
        policy=policy_name,
        rollouts=n_rollouts,
        shortfall_mean=float(finals.mean()),
        shortfall_se=se,
        error_mean=errors.mean(axis=0),
        error_se=errors.std(axis=0, ddof=1) / math.sqrt(n_rollouts) if n_rollouts > 1 else np.zeros_like(errors[0]),
        per_asset_shortfall_mean=cum_shortfall / n_rollouts,
        first_report=first_report,
    )


def fixed_action_error_profile(
    preset: BasketPreset,
    asset: int,
    action_level: float,
    n_rollouts: int,
    horizon: int,
    seed: int = 0,
    grid_levels: int = 5,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean tracking-error paths when one asset trades a fixed size each step.

    Returns (mean, se), each (horizon, n): the error measured after every
    step. All other assets stay idle; inventory rules apply as usual and the
    terminal force-complete is off (this is a diagnostic sweep, not a
    liquidation).
    """
    grid = ActionGrid.linear(preset.max_clip, grid_levels)
    if not np.any(np.isclose(grid.levels[asset], action_level)):
        raise ValueError(
            f"action level {action_level} not on the asset {asset} grid {grid.levels[asset]}"
        )
    env = LiquidationEnv(preset, horizon, force_complete=False)
    shares_template = np.zeros(preset.n)
    shares_template[asset] = action_level

    def policy(state, rng):
        return shares_template

    children = np.random.SeedSequence([seed, _PROFILE_STREAM]).spawn(n_rollouts)
    errors = np.zeros((n_rollouts, horizon, preset.n))
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        state = env.reset()
        for k in range(horizon):
            state = env.step(state, policy(state, rng), rng).state
            errors[r, k] = state.errors
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / math.sqrt(n_rollouts) if n_rollouts > 1 else np.zeros_like(mean)
    return mean, se


@dataclass
class ExperimentConfig:
    """Everything one reproducible run needs; seed governs every output byte."""

    preset: str
    output_dir: str
    seed: int = 0
    rollouts: int = 200
    baselines: tuple[str, ...] = ("trained", "twap", "immediate", "random")
    train: TrainConfig = field(default_factory=TrainConfig)
    profile_asset: int = 0
    profile_action: float | None = None
    profile_rollouts: int = 200

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValueError("rollouts must be >= 1")
        for name in self.baselines:
            if name not in POLICY_NAMES:
                raise ValueError(f"unknown baseline {name!r}")
        if self.train.seed is None:
            self.train = replace(self.train, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["baselines"] = list(self.baselines)
        return d


def config_from_dict(payload: dict, output_dir=None) -> ExperimentConfig:
    payload = dict(payload)
    train_cfg = TrainConfig(**payload.pop("train", {}))
    if "baselines" in payload:
        payload["baselines"] = tuple(payload["baselines"])
    if output_dir is not None:
        payload["output_dir"] = str(output_dir)
    env_seed = os.environ.get("BASKETEXEC_SEED")
    if env_seed is not None:
        payload["seed"] = int(env_seed)
        train_cfg = replace(train_cfg, seed=None)
    env_out = os.environ.get("BASKETEXEC_OUTDIR")
    if env_out is not None:
        payload["output_dir"] = env_out
    return ExperimentConfig(train=train_cfg, **payload)


def load_config(path, preset=None, output_dir=None, seed=None) -> ExperimentConfig:
    """Read the JSON experiment config; CLI arguments and env vars override it."""
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"config file not found: {p}")
    payload = json.loads(p.read_text())
    if preset is not None:
        payload["preset"] = str(preset)
    if seed is not None:
        payload["seed"] = int(seed)
        if isinstance(payload.get("train"), dict):
            payload["train"].pop("seed", None)
    return config_from_dict(payload, output_dir=output_dir)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(x) -> str:
    return repr(float(x))


def write_diagnostics_csv(result: TrainResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "total_shortfall", "critic_loss", "actor_grad_norm", "epsilon"])
        for i in range(result.episodes.shape[0]):
            w.writerow([
                int(result.episodes[i]),
                _fmt(result.shortfall[i]),
                _fmt(result.critic_loss[i]),
                _fmt(result.actor_grad_norm[i]),
                _fmt(result.epsilon[i]),
            ])


def write_comparison_csv(rows: list[EvalResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "rollouts", "mean_total_shortfall", "se_total_shortfall"])
        for r in rows:
            w.writerow([r.policy, r.rollouts, _fmt(r.shortfall_mean), _fmt(r.shortfall_se)])


def write_error_series_csv(rows: list[EvalResult], symbols, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "step", "asset", "mean_error", "se_error"])
        for r in rows:
            k, n = r.error_mean.shape
            for step in range(k):
                for i in range(n):
                    w.writerow([
                        r.policy, step + 1, symbols[i],
                        _fmt(r.error_mean[step, i]), _fmt(r.error_se[step, i]),
                    ])


def write_shortfall_series_csv(rows: list[EvalResult], symbols, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "step", "asset", "mean_cum_shortfall"])
        for r in rows:
            k, n = r.per_asset_shortfall_mean.shape
            for step in range(k):
                for i in range(n):
                    w.writerow([
                        r.policy, step + 1, symbols[i],
                        _fmt(r.per_asset_shortfall_mean[step, i]),
                    ])


def write_profile_csv(mean, se, symbols, action_level, asset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "asset", "profiled_asset", "action", "mean_error", "se_error"])
        k, n = mean.shape
        for step in range(k):
            for i in range(n):
                w.writerow([
                    step + 1, symbols[i], symbols[asset], _fmt(action_level),
                    _fmt(mean[step, i]), _fmt(se[step, i]),
                ])


def run_experiment(config: ExperimentConfig) -> Path:
    """Train, evaluate, and profile one config; returns the run directory.

    Validates inputs before creating the directory so a bad config leaves no
    partial output; failures after creation are flagged in the manifest.
    """
    preset = load_preset(config.preset)  # MissingFile before any mkdir
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    artifacts: list[str] = []
    manifest = {
        "seed": config.seed,
        "config_hash": digest,
        "versions": {"basketexec": _pkg_version, "numpy": np.__version__},
        "artifacts": artifacts,
        "complete": False,
    }
    try:
        save_preset(preset, out / "preset.json")
        artifacts.append("preset.json")
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        artifacts.append("config.json")

        result = train(preset, config.train)
        save_checkpoint(out / "checkpoint.json", result, config_hash=digest)
        artifacts.append("checkpoint.json")
        write_diagnostics_csv(result, out / "diagnostics.csv")
        artifacts.append("diagnostics.csv")

        checkpoint = load_checkpoint(out / "checkpoint.json")
        rows = []
        for name in config.baselines:
            res = evaluate(
                name, preset, config.train.horizon, config.rollouts,
                seed=config.seed, checkpoint=checkpoint,
            )
            res.first_report.write_csv(out / f"episode_report_{name}.csv")
            artifacts.append(f"episode_report_{name}.csv")
            rows.append(res)
        write_comparison_csv(rows, out / "comparison.csv")
        artifacts.append("comparison.csv")
        write_error_series_csv(rows, preset.symbols, out / "tracking_error_mean.csv")
        artifacts.append("tracking_error_mean.csv")
        write_shortfall_series_csv(rows, preset.symbols, out / "shortfall_mean.csv")
        artifacts.append("shortfall_mean.csv")

        action = config.profile_action
        if action is None:
            grid = ActionGrid.linear(preset.max_clip, config.train.grid_levels)
            action = float(grid.levels[config.profile_asset][1])
        mean, se = fixed_action_error_profile(
            preset, config.profile_asset, action,
            config.profile_rollouts, config.train.horizon, seed=config.seed,
            grid_levels=config.train.grid_levels,
        )
        write_profile_csv(mean, se, preset.symbols, action, config.profile_asset, out / "fixed_action_error.csv")
        artifacts.append("fixed_action_error.csv")
        manifest["complete"] = True
    except BaseException as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out
