"""Action grids and the state-action feature map.

Per asset the state features are (tracking error / arrival, remaining
inventory fraction, time-remaining fraction); the feature vector for a joint
action is the concatenation over assets of that asset's state features placed
in the slot of its chosen grid level. Logits built from these features carry
no cross-asset action terms, so the joint Gibbs policy factorizes exactly
into per-asset Gibbs distributions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..market import MarketState
from ..validation import as_vector

N_STATE_FEATURES = 3


class StateObs(NamedTuple):
    """What the agent observes: tracking errors, unsold shares, step index."""

    errors: np.ndarray
    remaining: np.ndarray
    step: int


def obs_from_state(state: MarketState) -> StateObs:
    return StateObs(errors=state.errors, remaining=state.remaining, step=state.step)


@dataclass(frozen=True)
class ActionGrid:
    """Ordered admissible trade sizes per asset; every grid contains 0."""

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, g in enumerate(self.levels):
            if g.size == 0:
                raise ValueError(f"empty grid for asset {i}")
            if not np.any(g == 0.0):
                raise ValueError(f"grid for asset {i} must contain 0")
            if np.any(np.diff(g) <= 0):
                raise ValueError(f"grid for asset {i} must be strictly increasing")

    @classmethod
    def linear(cls, max_clip, n_levels: int = 5, allow_buy: bool = False) -> "ActionGrid":
        """Evenly spaced levels {0, M/(G-1), ..., M}; mirrored below 0 when buying."""
        if n_levels < 2:
            raise ValueError("n_levels must be >= 2")
        clips = as_vector(max_clip, name="max_clip")
        grids = []
        for m in clips:
            sell = np.linspace(0.0, m, n_levels)
            if allow_buy:
                sell = np.concatenate([-sell[:0:-1], sell])
            grids.append(sell)
        return cls(levels=tuple(grids))

    @property
    def n_assets(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(g.size for g in self.levels)

    @property
    def n_joint(self) -> int:
        return int(np.prod(self.sizes))

    def shares(self, action_idx: Sequence[int]) -> np.ndarray:
        """Trade-size vector for one joint action given as per-asset indices."""
        return np.array([g[j] for g, j in zip(self.levels, action_idx)], dtype=float)

    def joint_indices(self) -> np.ndarray:
        """All joint actions enumerated as an (n_joint, n_assets) index array."""
        return np.array(list(itertools.product(*(range(s) for s in self.sizes))), dtype=int)

    def check_within_clip(self, max_clip) -> None:
        clips = as_vector(max_clip, n=self.n_assets, name="max_clip")
        for i, g in enumerate(self.levels):
            if np.any(np.abs(g) > clips[i]):
                raise ValueError(f"grid for asset {i} exceeds clip {clips[i]}")


@dataclass(frozen=True)
class FeatureMap:
    """Maps (observation, joint action) to the flat feature vector phi."""

    grid: ActionGrid
    arrival: np.ndarray
    inventory: np.ndarray
    horizon: int
    offsets: tuple[int, ...] = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        n = self.grid.n_assets
        object.__setattr__(self, "arrival", as_vector(self.arrival, n, "arrival"))
        object.__setattr__(self, "inventory", as_vector(self.inventory, n, "inventory"))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        block = [s * N_STATE_FEATURES for s in self.grid.sizes]
        offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(block)[:-1]]))
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "dim", int(sum(block)))

    @property
    def n_assets(self) -> int:
        return self.grid.n_assets

    def block(self, vec: np.ndarray, asset: int) -> np.ndarray:
        """Asset's slice of a flat parameter vector, shaped (grid levels, features)."""
        g = self.grid.sizes[asset]
        start = self.offsets[asset]
        return vec[start : start + g * N_STATE_FEATURES].reshape(g, N_STATE_FEATURES)

    def state_features(self, obs: StateObs) -> np.ndarray:
        """Per-asset state features, shape (n_assets, N_STATE_FEATURES)."""
        inv = np.where(self.inventory > 0, self.inventory, 1.0)
        time_left = (self.horizon - obs.step) / self.horizon
        feats = np.empty((self.n_assets, N_STATE_FEATURES))
        feats[:, 0] = obs.errors / self.arrival
        feats[:, 1] = obs.remaining / inv
        feats[:, 2] = time_left
        return feats

    def state_features_batch(
        self, errors: np.ndarray, remaining: np.ndarray, steps: np.ndarray
    ) -> np.ndarray:
        """Vectorized state features, shape (batch, n_assets, N_STATE_FEATURES)."""
        inv = np.where(self.inventory > 0, self.inventory, 1.0)
        b = errors.shape[0]
        feats = np.empty((b, self.n_assets, N_STATE_FEATURES))
        feats[:, :, 0] = errors / self.arrival
        feats[:, :, 1] = remaining / inv
        feats[:, :, 2] = ((self.horizon - steps) / self.horizon)[:, None]
        return feats

    def phi(self, obs: StateObs, action_idx: Sequence[int]) -> np.ndarray:
        """Flat feature vector for one (observation, joint action) pair."""
        feats = self.state_features(obs)
        out = np.zeros(self.dim)
        for i, j in enumerate(action_idx):
            start = self.offsets[i] + int(j) * N_STATE_FEATURES
            out[start : start + N_STATE_FEATURES] = feats[i]
        return out
