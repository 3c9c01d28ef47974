"""Gibbs (Boltzmann) policy over the action grid and its compatible critic.

The critic is linear in its weights with gradient equal to the policy's
score function: Q_hat(x, a) = omega . (phi_xa - sum_b pi(x,b) phi_xb). With
the block feature map the joint softmax factorizes per asset, so sampling,
greedy selection, and the compatible features all decompose blockwise while
remaining exactly equal to their joint-enumeration forms.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import NonFiniteLogit
from .features import N_STATE_FEATURES, FeatureMap, StateObs

# joint enumeration guard: policy_probabilities and friends are test/diagnostic
# surfaces, not the training hot path
_MAX_JOINT = 100_000


def softmax(logits: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax along the last axis."""
    logits = np.asarray(logits, dtype=float)
    # a finite sum implies every entry is finite (NaN/inf propagate)
    if not math.isfinite(float(logits.sum())):
        raise NonFiniteLogit("non-finite logits")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class GibbsPolicy:
    """Policy and critic kernels bound to one feature map."""

    def __init__(self, fmap: FeatureMap):
        self.fmap = fmap

    @property
    def dim(self) -> int:
        return self.fmap.dim

    @property
    def grid(self):
        return self.fmap.grid

    # ---- per-asset building blocks -------------------------------------

    def asset_logits(self, theta: np.ndarray, obs: StateObs) -> list[np.ndarray]:
        feats = self.fmap.state_features(obs)
        return [self.fmap.block(theta, i) @ feats[i] for i in range(self.fmap.n_assets)]

    def distributions(self, theta: np.ndarray, obs: StateObs) -> list[np.ndarray]:
        """Per-asset Gibbs distributions over that asset's grid levels."""
        return [softmax(l) for l in self.asset_logits(theta, obs)]

    def asset_action_values(self, omega: np.ndarray, obs: StateObs) -> list[np.ndarray]:
        feats = self.fmap.state_features(obs)
        return [self.fmap.block(omega, i) @ feats[i] for i in range(self.fmap.n_assets)]

    # ---- joint-action surfaces -----------------------------------------

    def policy_probabilities(self, theta: np.ndarray, obs: StateObs) -> np.ndarray:
        """Probability vector over all joint actions, in joint_indices() order."""
        if self.grid.n_joint > _MAX_JOINT:
            raise ValueError(f"joint action space too large to enumerate ({self.grid.n_joint})")
        dists = self.distributions(theta, obs)
        probs = np.ones(1)
        for d in dists:
            probs = np.outer(probs, d).ravel()
        return probs

    def joint_probability(self, theta: np.ndarray, obs: StateObs, action_idx) -> float:
        dists = self.distributions(theta, obs)
        p = 1.0
        for d, j in zip(dists, action_idx):
            p *= d[int(j)]
        return p

    def compatible_features(self, theta: np.ndarray, obs: StateObs, action_idx) -> np.ndarray:
        """phi_xa - sum_b pi(x,b) phi_xb; equals grad_theta log pi(x,a,theta)."""
        feats = self.fmap.state_features(obs)
        dists = self.distributions(theta, obs)
        out = np.zeros(self.dim)
        for i, j in enumerate(action_idx):
            centered = -np.outer(dists[i], feats[i])
            centered[int(j)] += feats[i]
            start = self.fmap.offsets[i]
            out[start : start + centered.size] = centered.ravel()
        return out

    def critic_value(self, omega: np.ndarray, theta: np.ndarray, obs: StateObs, action_idx) -> float:
        """Q_hat(x, a) = omega . compatible_features(x, a)."""
        if omega.shape[0] != self.dim:
            raise ValueError(f"omega must have length {self.dim}")
        dists = self.distributions(theta, obs)
        qs = self.asset_action_values(omega, obs)
        total = 0.0
        for q, d, j in zip(qs, dists, action_idx):
            total += q[int(j)] - d @ q
        return float(total)

    def greedy_action(self, omega: np.ndarray, theta: np.ndarray, obs: StateObs) -> tuple[int, ...]:
        """argmax_a Q_hat(x, a); ties resolve to the lowest grid index."""
        qs = self.asset_action_values(omega, obs)
        return tuple(int(np.argmax(q)) for q in qs)

    def sample_action(self, theta: np.ndarray, obs: StateObs, rng: np.random.Generator) -> tuple[int, ...]:
        dists = self.distributions(theta, obs)
        return tuple(
            min(int(np.searchsorted(np.cumsum(d), rng.random())), d.size - 1)
            for d in dists
        )

    def uniform_action(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(rng.integers(0, s)) for s in self.grid.sizes)

    def select_action(
        self,
        obs: StateObs,
        theta: np.ndarray,
        omega: np.ndarray,
        epsilon: float,
        mode: str,
        rng: np.random.Generator,
    ) -> tuple[tuple[int, ...], np.ndarray]:
        """Pick a joint action and its executable share sizes.

        mode "greedy-eps" is the replay algorithm's rule (epsilon-uniform else
        critic argmax); mode "gibbs" samples the stochastic actor with the
        same epsilon-uniform mixing. Shares are clipped to remaining
        inventory.
        """
        if rng.random() < epsilon:
            idx = self.uniform_action(rng)
        elif mode == "greedy-eps":
            idx = self.greedy_action(omega, theta, obs)
        elif mode == "gibbs":
            idx = self.sample_action(theta, obs, rng)
        else:
            raise ValueError(f"unknown selection mode {mode!r}")
        shares = self.grid.shares(idx)
        shares = np.where(shares >= 0, np.minimum(shares, obs.remaining), shares)
        return idx, shares

    def selection_probabilities(
        self,
        obs: StateObs,
        theta: np.ndarray,
        omega: np.ndarray,
        epsilon: float,
        mode: str,
    ) -> np.ndarray:
        """Exact distribution select_action draws from, over joint actions."""
        n_joint = self.grid.n_joint
        base = np.full(n_joint, epsilon / n_joint)
        if mode == "greedy-eps":
            greedy = self.greedy_action(omega, theta, obs)
            flat = int(np.ravel_multi_index(greedy, self.grid.sizes))
            base[flat] += 1.0 - epsilon
        elif mode == "gibbs":
            base += (1.0 - epsilon) * self.policy_probabilities(theta, obs)
        else:
            raise ValueError(f"unknown selection mode {mode!r}")
        return base

    # ---- vectorized minibatch kernels ----------------------------------

    def batch_state_features(self, errors, remaining, steps) -> np.ndarray:
        return self.fmap.state_features_batch(errors, remaining, steps)

    def batch_distributions(self, theta: np.ndarray, feats: np.ndarray) -> list[np.ndarray]:
        """Per-asset (batch, grid) probabilities from precomputed features."""
        return [
            softmax(feats[:, i, :] @ self.fmap.block(theta, i).T)
            for i in range(self.fmap.n_assets)
        ]

    def batch_compatible(
        self, theta: np.ndarray, feats: np.ndarray, actions: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Compatible features for a minibatch.

        Returns (psi, pi) where psi is (batch, dim) and pi is the joint
        probability each row's action has under theta.
        """
        b = feats.shape[0]
        psi = np.zeros((b, self.dim))
        pi = np.ones(b)
        rows = np.arange(b)
        for i in range(self.fmap.n_assets):
            probs = softmax(feats[:, i, :] @ self.fmap.block(theta, i).T)
            j = actions[:, i]
            pi *= probs[rows, j]
            onehot = np.zeros_like(probs)
            onehot[rows, j] = 1.0
            block = (onehot - probs)[:, :, None] * feats[:, i, :][:, None, :]
            start = self.fmap.offsets[i]
            psi[:, start : start + block.shape[1] * N_STATE_FEATURES] = block.reshape(b, -1)
        return psi, pi

    def batch_critic(
        self, omega: np.ndarray, theta: np.ndarray, feats: np.ndarray, actions: np.ndarray
    ) -> np.ndarray:
        """Q_hat for a minibatch of (state, action) rows."""
        b = feats.shape[0]
        rows = np.arange(b)
        total = np.zeros(b)
        for i in range(self.fmap.n_assets):
            s = feats[:, i, :]
            probs = softmax(s @ self.fmap.block(theta, i).T)
            q = s @ self.fmap.block(omega, i).T
            total += q[rows, actions[:, i]] - np.einsum("bg,bg->b", probs, q)
        return total

    def batch_sample_actions(
        self, theta: np.ndarray, feats: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        """Draw one action per row from the policy at theta (inverse CDF)."""
        b = feats.shape[0]
        out = np.empty((b, self.fmap.n_assets), dtype=int)
        for i in range(self.fmap.n_assets):
            probs = softmax(feats[:, i, :] @ self.fmap.block(theta, i).T)
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(b)
            out[:, i] = np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)
        return out

    def batch_bootstrap_values(
        self,
        theta: np.ndarray,
        omega: np.ndarray,
        feats: np.ndarray,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Sample a' ~ pi_theta per row and return Q_hat(x', a') in one pass."""
        b = feats.shape[0]
        rows = np.arange(b)
        total = np.zeros(b)
        for i in range(self.fmap.n_assets):
            s = feats[:, i, :]
            probs = softmax(s @ self.fmap.block(theta, i).T)
            q = s @ self.fmap.block(omega, i).T
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(b)
            j = np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)
            total += q[rows, j] - np.einsum("bg,bg->b", probs, q)
        return total
