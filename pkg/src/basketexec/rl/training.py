"""Replay actor-critic training loop with periodically synced targets.

Per step: act (epsilon-mixed), store the transition, resample a minibatch,
regress the compatible critic toward the bootstrapped targets, push the actor
along the sample policy gradient with the fixed 1/k step rule (k counts
updates globally across episodes), and refresh the target weights every
sync_period steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..env import LiquidationEnv
from ..errors import MissingFile, NonFiniteWeights
from ..market import BasketPreset, ExecutionRules
from .features import ActionGrid, FeatureMap, StateObs, obs_from_state
from .policy import GibbsPolicy
from .replay import ReplayBuffer, Transition

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    The actor step size is fixed to 1/k (k = global update count); there is
    no learning-rate knob for it, which is why rewards are normalized by
    reward_scale ("auto" derives a preset-scale estimate of |reward|).
    """

    gamma: float = 0.99
    episodes: int = 200
    horizon: int = 20
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    sync_period: int = 100
    critic_lr: float = 1e-3
    minibatch: int = 64
    buffer_capacity: int = 100_000
    grid_levels: int = 5
    allow_buy: bool = False
    exploration: str = "gibbs"  # or "greedy-eps", the pure replay-algorithm rule
    td_next_action: str = "sample"  # or "expected"
    reward_scale: float | str = "auto"
    theta_init: float = 0.01
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0,1)")
        if self.sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.exploration not in ("gibbs", "greedy-eps"):
            raise ValueError(f"unknown exploration mode {self.exploration!r}")
        if self.td_next_action not in ("sample", "expected"):
            raise ValueError(f"unknown td_next_action {self.td_next_action!r}")

    def epsilon_at(self, episode: int) -> float:
        """Linear decay from epsilon_start to epsilon_end over the first
        epsilon_decay_fraction of episodes, constant afterwards."""
        decay_len = max(1, int(round(self.epsilon_decay_fraction * self.episodes)))
        if episode >= decay_len:
            return self.epsilon_end
        frac = episode / decay_len
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def resolve_reward_scale(config: TrainConfig, preset: BasketPreset) -> float:
    """Order-of-magnitude |reward| estimate used to normalize training rewards."""
    if config.reward_scale != "auto":
        scale = float(config.reward_scale)
        if not scale > 0:
            raise ValueError("reward_scale must be positive")
        return scale
    k = config.horizon
    move = np.abs(preset.mu) * preset.tau * k + np.sqrt(np.diag(preset.sigma) * preset.tau * k)
    scale = float(np.sum(preset.max_clip * preset.arrival_price * move))
    return max(scale, 1e-12)


@dataclass
class Batch:
    """Minibatch stacked for the vectorized kernels."""

    feats: np.ndarray  # (B, n, p)
    actions: np.ndarray  # (B, n) grid indices
    rewards: np.ndarray  # (B,)
    next_feats: np.ndarray  # (B, n, p)
    terminal: np.ndarray  # (B,) bool


def stack_batch(policy: GibbsPolicy, transitions: Sequence[Transition]) -> Batch:
    errors = np.array([t.obs.errors for t in transitions])
    remaining = np.array([t.obs.remaining for t in transitions])
    steps = np.array([t.obs.step for t in transitions], dtype=float)
    n_errors = np.array([t.next_obs.errors for t in transitions])
    n_remaining = np.array([t.next_obs.remaining for t in transitions])
    n_steps = np.array([t.next_obs.step for t in transitions], dtype=float)
    return Batch(
        feats=policy.batch_state_features(errors, remaining, steps),
        actions=np.array([t.action for t in transitions], dtype=int),
        rewards=np.array([t.reward for t in transitions]),
        next_feats=policy.batch_state_features(n_errors, n_remaining, n_steps),
        terminal=np.array([t.terminal for t in transitions], dtype=bool),
    )


def _batch_from_buffer(policy: GibbsPolicy, buffer: ReplayBuffer, size: int, rng) -> Batch:
    cols = buffer.columns(buffer.sample_indices(size, rng))
    return Batch(
        feats=policy.batch_state_features(cols["errors"], cols["remaining"], cols["steps"]),
        actions=cols["actions"],
        rewards=cols["rewards"],
        next_feats=policy.batch_state_features(
            cols["next_errors"], cols["next_remaining"], cols["next_steps"]
        ),
        terminal=cols["terminal"],
    )


def td_target(
    policy: GibbsPolicy,
    transition: Transition,
    gamma: float,
    target_omega: np.ndarray,
    target_theta: np.ndarray,
    rng: np.random.Generator | None = None,
    variant: str = "sample",
) -> float:
    """Bootstrapped target y = r + gamma * Q_hat'(x', a') for one transition.

    a' is drawn from the target policy at x'; the "expected" variant averages
    Q_hat' over the target policy, which the centering identity makes exactly
    zero, so it reduces to y = r. Terminal transitions bootstrap 0 because the
    liquidation is complete and every later shortfall increment is 0.
    """
    if transition.terminal:
        return float(transition.reward)
    if variant == "expected":
        return float(transition.reward)
    if rng is None:
        raise ValueError("sampled td_target needs an rng for the next action")
    nxt_action = policy.sample_action(target_theta, transition.next_obs, rng)
    q_next = policy.critic_value(target_omega, target_theta, transition.next_obs, nxt_action)
    return float(transition.reward + gamma * q_next)


def batch_td_targets(
    policy: GibbsPolicy,
    batch: Batch,
    gamma: float,
    target_omega: np.ndarray,
    target_theta: np.ndarray,
    rng: np.random.Generator,
    variant: str = "sample",
) -> np.ndarray:
    if variant == "expected":
        # sum_a pi(x',a) Q_hat'(x',a) == 0 by the centering identity
        return batch.rewards.copy()
    q_next = policy.batch_bootstrap_values(target_theta, target_omega, batch.next_feats, rng)
    return batch.rewards + gamma * q_next * ~batch.terminal


def critic_update(
    policy: GibbsPolicy,
    theta: np.ndarray,
    omega: np.ndarray,
    batch: Batch,
    targets: np.ndarray,
    lr: float,
    psi: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """One gradient-descent step on the minibatch mean-squared error.

    Returns (updated omega, pre-step loss). psi can be passed when the
    compatible features were already computed for this batch.
    """
    if psi is None:
        psi, _ = policy.batch_compatible(theta, batch.feats, batch.actions)
    resid = targets - psi @ omega
    loss = float(np.mean(resid**2))
    grad = (-2.0 / resid.shape[0]) * (psi.T @ resid)
    return omega - lr * grad, loss


def policy_gradient_estimate(
    policy: GibbsPolicy,
    theta: np.ndarray,
    omega: np.ndarray,
    batch: Batch,
    psi: np.ndarray | None = None,
    pi: np.ndarray | None = None,
) -> np.ndarray:
    """Sample gradient (1/B) sum_i grad pi(x_i,a_i) * Q_hat(x_i,a_i) with
    grad pi = pi * grad log pi evaluated explicitly."""
    if psi is None or pi is None:
        psi, pi = policy.batch_compatible(theta, batch.feats, batch.actions)
    q_hat = psi @ omega
    return (psi * (pi * q_hat)[:, None]).mean(axis=0)


def actor_update(theta: np.ndarray, gradient: np.ndarray, k: int) -> np.ndarray:
    """Ascent step theta + gradient/k; k is the 1-based global update index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return theta + np.asarray(gradient, dtype=float) / k


def sync_targets(
    live_theta: np.ndarray,
    live_omega: np.ndarray,
    target_theta: np.ndarray,
    target_omega: np.ndarray,
    period: int,
    counter: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Copy live weights into the targets when counter hits a multiple of period."""
    if period < 1:
        raise ValueError("period must be >= 1")
    if counter % period == 0:
        return live_theta.copy(), live_omega.copy()
    return target_theta, target_omega


@dataclass
class TrainResult:
    """Final weights plus per-episode training diagnostics."""

    theta: np.ndarray
    omega: np.ndarray
    policy: GibbsPolicy
    config: TrainConfig
    reward_scale: float
    episodes: np.ndarray
    shortfall: np.ndarray
    critic_loss: np.ndarray
    actor_grad_norm: np.ndarray
    epsilon: np.ndarray


def train(preset: BasketPreset, config: TrainConfig, env: LiquidationEnv | None = None) -> TrainResult:
    """Run the full replay actor-critic loop on a basket preset."""
    if env is None:
        env = LiquidationEnv(
            preset,
            config.horizon,
            rules=ExecutionRules(allow_buy=config.allow_buy),
        )
    grid = ActionGrid.linear(preset.max_clip, config.grid_levels, config.allow_buy)
    grid.check_within_clip(preset.max_clip)
    fmap = FeatureMap(
        grid=grid,
        arrival=preset.arrival_price,
        inventory=preset.inventory,
        horizon=env.horizon,
    )
    policy = GibbsPolicy(fmap)
    rng = np.random.default_rng(config.seed)
    theta = rng.normal(0.0, config.theta_init, fmap.dim) if config.theta_init > 0 else np.zeros(fmap.dim)
    omega = rng.normal(0.0, config.theta_init, fmap.dim) if config.theta_init > 0 else np.zeros(fmap.dim)
    target_theta, target_omega = theta.copy(), omega.copy()
    buffer = ReplayBuffer(config.buffer_capacity)
    scale = resolve_reward_scale(config, preset)

    ep_shortfall = np.zeros(config.episodes)
    ep_loss = np.zeros(config.episodes)
    ep_gnorm = np.zeros(config.episodes)
    ep_eps = np.zeros(config.episodes)
    global_k = 0

    for ep in range(config.episodes):
        eps = config.epsilon_at(ep)
        state = env.reset()
        raw_return = 0.0
        loss_sum = 0.0
        gnorm_sum = 0.0
        for k in range(env.horizon):
            obs = obs_from_state(state)
            action_idx, shares = policy.select_action(
                obs, theta, omega, eps, config.exploration, rng
            )
            outcome = env.step(state, shares, rng)
            raw_return += outcome.reward
            buffer.push(
                Transition(
                    obs=obs,
                    action=action_idx,
                    reward=outcome.reward / scale,
                    next_obs=obs_from_state(outcome.state),
                    terminal=(k == env.horizon - 1),
                )
            )
            batch = _batch_from_buffer(policy, buffer, config.minibatch, rng)
            targets = batch_td_targets(
                policy, batch, config.gamma, target_omega, target_theta, rng,
                config.td_next_action,
            )
            psi, pi = policy.batch_compatible(theta, batch.feats, batch.actions)
            omega, loss = critic_update(
                policy, theta, omega, batch, targets, config.critic_lr, psi=psi
            )
            gradient = policy_gradient_estimate(
                policy, theta, omega, batch, psi=psi, pi=pi
            )
            global_k += 1
            theta = actor_update(theta, gradient, global_k)
            if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(omega))):
                raise NonFiniteWeights(f"non-finite weights at update {global_k}")
            target_theta, target_omega = sync_targets(
                theta, omega, target_theta, target_omega, config.sync_period, global_k
            )
            loss_sum += loss
            gnorm_sum += float(np.linalg.norm(gradient))
            state = outcome.state
        ep_shortfall[ep] = -raw_return
        ep_loss[ep] = loss_sum / env.horizon
        ep_gnorm[ep] = gnorm_sum / env.horizon
        ep_eps[ep] = eps

    return TrainResult(
        theta=theta,
        omega=omega,
        policy=policy,
        config=config,
        reward_scale=scale,
        episodes=np.arange(config.episodes),
        shortfall=ep_shortfall,
        critic_loss=ep_loss,
        actor_grad_norm=ep_gnorm,
        epsilon=ep_eps,
    )


def save_checkpoint(path, result: TrainResult, config_hash: str = "") -> None:
    """Versioned text dump of the learned weights and the policy's metadata."""
    fmap = result.policy.fmap
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "theta": result.theta.tolist(),
        "omega": result.omega.tolist(),
        "grids": [g.tolist() for g in fmap.grid.levels],
        "arrival_price": fmap.arrival.tolist(),
        "inventory": fmap.inventory.tolist(),
        "horizon": fmap.horizon,
        "reward_scale": result.reward_scale,
        "exploration": result.config.exploration,
        "config_hash": config_hash,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class Checkpoint:
    theta: np.ndarray
    omega: np.ndarray
    policy: GibbsPolicy
    horizon: int
    reward_scale: float
    config_hash: str


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"checkpoint not found: {p}")
    payload = json.loads(p.read_text())
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version}")
    grid = ActionGrid(levels=tuple(np.asarray(g, dtype=float) for g in payload["grids"]))
    fmap = FeatureMap(
        grid=grid,
        arrival=payload["arrival_price"],
        inventory=payload["inventory"],
        horizon=int(payload["horizon"]),
    )
    return Checkpoint(
        theta=np.asarray(payload["theta"], dtype=float),
        omega=np.asarray(payload["omega"], dtype=float),
        policy=GibbsPolicy(fmap),
        horizon=int(payload["horizon"]),
        reward_scale=float(payload["reward_scale"]),
        config_hash=payload.get("config_hash", ""),
    )
