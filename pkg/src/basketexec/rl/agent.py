"""Scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..market import BasketPreset, load_preset
from .features import StateObs
from .training import TrainConfig, train


class ShortfallAgent(BaseEstimator):
    """Liquidation agent with the estimator API: fit on a preset, predict trades.

    fit() runs the replay actor-critic loop; fitted attributes are theta_,
    omega_, policy_ and per-episode diagnostics_. predict() maps observation
    rows [errors (n), remaining (n), step] to greedy trade-size vectors.
    """

    def __init__(
        self,
        gamma=0.99,
        episodes=200,
        horizon=20,
        epsilon_start=1.0,
        epsilon_end=0.05,
        epsilon_decay_fraction=0.5,
        sync_period=100,
        critic_lr=1e-3,
        minibatch=64,
        buffer_capacity=100_000,
        grid_levels=5,
        allow_buy=False,
        exploration="gibbs",
        td_next_action="sample",
        reward_scale="auto",
        theta_init=0.01,
        seed=None,
    ):
        self.gamma = gamma
        self.episodes = episodes
        self.horizon = horizon
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_fraction = epsilon_decay_fraction
        self.sync_period = sync_period
        self.critic_lr = critic_lr
        self.minibatch = minibatch
        self.buffer_capacity = buffer_capacity
        self.grid_levels = grid_levels
        self.allow_buy = allow_buy
        self.exploration = exploration
        self.td_next_action = td_next_action
        self.reward_scale = reward_scale
        self.theta_init = theta_init
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            episodes=self.episodes,
            horizon=self.horizon,
            epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end,
            epsilon_decay_fraction=self.epsilon_decay_fraction,
            sync_period=self.sync_period,
            critic_lr=self.critic_lr,
            minibatch=self.minibatch,
            buffer_capacity=self.buffer_capacity,
            grid_levels=self.grid_levels,
            allow_buy=self.allow_buy,
            exploration=self.exploration,
            td_next_action=self.td_next_action,
            reward_scale=self.reward_scale,
            theta_init=self.theta_init,
            seed=self.seed,
        )

    def fit(self, preset, y=None):
        """Train on a BasketPreset (or a preset path / builtin name)."""
        if not isinstance(preset, BasketPreset):
            preset = load_preset(preset)
        result = train(preset, self._config())
        self.preset_ = preset
        self.result_ = result
        self.theta_ = result.theta
        self.omega_ = result.omega
        self.policy_ = result.policy
        self.diagnostics_ = {
            "episode": result.episodes,
            "total_shortfall": result.shortfall,
            "critic_loss": result.critic_loss,
            "actor_grad_norm": result.actor_grad_norm,
            "epsilon": result.epsilon,
        }
        return self

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise RuntimeError("agent is not fitted; call fit() first")

    def act(self, obs: StateObs) -> np.ndarray:
        """Greedy trade sizes (critic argmax) for one observation, inventory-clipped."""
        self._check_fitted()
        idx = self.policy_.greedy_action(self.omega_, self.theta_, obs)
        shares = self.policy_.grid.shares(idx)
        return np.where(shares >= 0, np.minimum(shares, obs.remaining), shares)

    def predict(self, X) -> np.ndarray:
        """Greedy trades for observation rows [errors (n), remaining (n), step]."""
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.policy_.fmap.n_assets
        if X.shape[1] != 2 * n + 1:
            raise ValueError(f"expected rows of length {2 * n + 1}, got {X.shape[1]}")
        out = np.empty((X.shape[0], n))
        for r, row in enumerate(X):
            obs = StateObs(errors=row[:n], remaining=row[n : 2 * n], step=int(row[-1]))
            out[r] = self.act(obs)
        return out
