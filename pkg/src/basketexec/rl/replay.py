"""Fixed-capacity experience replay with uniform resampling.

Storage is columnar (preallocated rings) so minibatch sampling is fancy
indexing rather than object traversal; Transition objects are the record
interface at the edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyBuffer
from .features import StateObs


@dataclass(frozen=True)
class Transition:
    """One stored step: observation, chosen grid indices, signed reward, successor."""

    obs: StateObs
    action: tuple[int, ...]
    reward: float
    next_obs: StateObs
    terminal: bool


class ReplayBuffer:
    """Ring buffer; push evicts oldest, sampling is uniform with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._size = 0
        self._head = 0
        self._cols = None

    def _allocate(self, n_assets: int) -> None:
        cap = self.capacity
        self._cols = {
            "errors": np.empty((cap, n_assets)),
            "remaining": np.empty((cap, n_assets)),
            "steps": np.empty(cap),
            "actions": np.empty((cap, n_assets), dtype=int),
            "rewards": np.empty(cap),
            "next_errors": np.empty((cap, n_assets)),
            "next_remaining": np.empty((cap, n_assets)),
            "next_steps": np.empty(cap),
            "terminal": np.empty(cap, dtype=bool),
        }

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        if self._cols is None:
            self._allocate(len(t.action))
        i = self._head
        c = self._cols
        c["errors"][i] = t.obs.errors
        c["remaining"][i] = t.obs.remaining
        c["steps"][i] = t.obs.step
        c["actions"][i] = t.action
        c["rewards"][i] = t.reward
        c["next_errors"][i] = t.next_obs.errors
        c["next_remaining"][i] = t.next_obs.remaining
        c["next_steps"][i] = t.next_obs.step
        c["terminal"][i] = t.terminal
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _transition_at(self, i: int) -> Transition:
        c = self._cols
        return Transition(
            obs=StateObs(c["errors"][i].copy(), c["remaining"][i].copy(), int(c["steps"][i])),
            action=tuple(int(a) for a in c["actions"][i]),
            reward=float(c["rewards"][i]),
            next_obs=StateObs(
                c["next_errors"][i].copy(), c["next_remaining"][i].copy(), int(c["next_steps"][i])
            ),
            terminal=bool(c["terminal"][i]),
        )

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise EmptyBuffer("cannot sample from an empty replay buffer")
        return rng.integers(0, self._size, size=n)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        # ring order: oldest entries are overwritten first, but uniform
        # sampling does not care about position, only about membership
        return [self._transition_at(i) for i in self.sample_indices(n, rng)]

    def columns(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        """Column views for the sampled rows (hot path; no object churn)."""
        return {name: col[idx] for name, col in self._cols.items()}

    def snapshot(self) -> list[Transition]:
        # oldest-first
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._head + i) % self.capacity for i in range(self.capacity)]
        return [self._transition_at(i) for i in order]
