"""Enumeration-scale MDP oracles.

These never touch the trading environment: they exist to verify the
policy-gradient and compatible-approximation identities, and the Bellman
backup, on problems small enough to solve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonConvergence
from .policy import softmax

_MAX_TABLE = 10_000


@dataclass(frozen=True)
class FiniteMDP:
    """Tabular MDP: transitions (S,A,S), rewards (S,A), start dist, features (S,A,d)."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    start: np.ndarray | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.transitions, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        s, a = r.shape
        if p.shape != (s, a, s):
            raise ValueError(f"transitions must be (S,A,S)=({s},{a},{s}), got {p.shape}")
        if not np.allclose(p.sum(axis=2), 1.0, atol=1e-10):
            raise ValueError("transition rows must sum to 1")
        if np.any(p < -1e-12):
            raise ValueError("negative transition probability")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0,1)")
        if s * a > _MAX_TABLE:
            raise ValueError(f"state-action table too large: {s * a}")
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        start = self.start
        if start is None:
            start = np.zeros(s)
            start[0] = 1.0
        start = np.asarray(start, dtype=float)
        if start.shape != (s,) or not np.isclose(start.sum(), 1.0):
            raise ValueError("start must be a distribution over states")
        object.__setattr__(self, "start", start)
        if self.features is not None:
            f = np.asarray(self.features, dtype=float)
            if f.shape[:2] != (s, a):
                raise ValueError("features must be (S,A,d)")
            object.__setattr__(self, "features", f)

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


def value_iteration_oracle(
    mdp: FiniteMDP,
    gamma: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Min-form Bellman iteration: Q <- r + gamma * P @ min_a' Q.

    Returns (Q, greedy) where greedy breaks ties toward the lowest action
    index. Raises NonConvergence at the iteration cap.
    """
    g = mdp.gamma if gamma is None else float(gamma)
    if not 0 <= g < 1:
        raise ValueError("gamma must be in [0,1) for value iteration")
    q = np.zeros_like(mdp.rewards)
    for _ in range(max_iter):
        nxt = mdp.rewards + g * np.einsum("sat,t->sa", mdp.transitions, q.min(axis=1))
        if np.abs(nxt - q).max() < tol:
            return nxt, nxt.argmin(axis=1)
        q = nxt
    raise NonConvergence(f"value iteration did not reach {tol} in {max_iter} sweeps")


def policy_table(mdp: FiniteMDP, theta: np.ndarray) -> np.ndarray:
    """Gibbs policy probabilities (S,A) from the MDP's feature table."""
    if mdp.features is None:
        raise ValueError("MDP has no feature table")
    logits = mdp.features @ np.asarray(theta, dtype=float)
    return softmax(logits)


def policy_evaluation(mdp: FiniteMDP, pi: np.ndarray) -> np.ndarray:
    """Exact Q^pi via the linear Bellman system (no optimization)."""
    s, a = mdp.rewards.shape
    n = s * a
    # Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) sum_a' pi(a'|s') Q(s',a')
    coupling = np.einsum("sat,tb->satb", mdp.transitions, pi).reshape(n, n)
    q = np.linalg.solve(np.eye(n) - mdp.gamma * coupling, mdp.rewards.reshape(n))
    return q.reshape(s, a)


def discounted_visitation(mdp: FiniteMDP, pi: np.ndarray, tail_tol: float = 1e-12) -> np.ndarray:
    """d(x) = sum_k gamma^k P(x_k = x | start, pi), series truncated once the
    remaining tail mass gamma^k/(1-gamma) drops below tail_tol."""
    p_pi = np.einsum("sa,sat->st", pi, mdp.transitions)
    d = np.zeros(mdp.n_states)
    v = mdp.start.copy()
    weight = 1.0
    while weight / (1.0 - mdp.gamma) > tail_tol:
        d += weight * v
        v = v @ p_pi
        weight *= mdp.gamma
    return d


def average_reward(mdp: FiniteMDP, theta: np.ndarray) -> float:
    """Exact discounted return rho(theta) from the start distribution."""
    pi = policy_table(mdp, theta)
    q = policy_evaluation(mdp, pi)
    return float(mdp.start @ np.einsum("sa,sa->s", pi, q))


def exact_policy_gradient(mdp: FiniteMDP, theta: np.ndarray) -> np.ndarray:
    """grad rho = sum_x d(x) sum_a grad pi(x,a) Q^pi(x,a), all terms exact."""
    pi = policy_table(mdp, theta)
    q = policy_evaluation(mdp, pi)
    d = discounted_visitation(mdp, pi)
    # grad pi(s,a) = pi(s,a) * (phi_sa - sum_b pi(s,b) phi_sb)
    mean_phi = np.einsum("sa,sad->sd", pi, mdp.features)
    score = mdp.features - mean_phi[:, None, :]
    return np.einsum("s,sa,sad,sa->d", d, pi, score, q)


def compatible_weights(mdp: FiniteMDP, theta: np.ndarray) -> np.ndarray:
    """omega minimizing the d,pi-weighted squared error between Q^pi and the
    compatible critic omega . (phi_sa - sum_b pi phi_sb)."""
    pi = policy_table(mdp, theta)
    q = policy_evaluation(mdp, pi)
    d = discounted_visitation(mdp, pi)
    mean_phi = np.einsum("sa,sad->sd", pi, mdp.features)
    psi = mdp.features - mean_phi[:, None, :]
    w = d[:, None] * pi
    a_mat = np.einsum("sa,sad,sae->de", w, psi, psi)
    b_vec = np.einsum("sa,sa,sad->d", w, q, psi)
    return np.linalg.lstsq(a_mat, b_vec, rcond=None)[0]
