"""Gibbs policy, compatible linear critic, replay training loop, and MDP oracles."""

from .features import ActionGrid, FeatureMap, StateObs, obs_from_state
from .policy import GibbsPolicy, softmax
from .replay import ReplayBuffer, Transition
from .mdp import (
    FiniteMDP,
    average_reward,
    compatible_weights,
    discounted_visitation,
    exact_policy_gradient,
    policy_evaluation,
    value_iteration_oracle,
)
from .training import (
    TrainConfig,
    TrainResult,
    actor_update,
    critic_update,
    load_checkpoint,
    policy_gradient_estimate,
    save_checkpoint,
    sync_targets,
    td_target,
    train,
)
from .agent import ShortfallAgent

__all__ = [
    "ActionGrid",
    "FeatureMap",
    "StateObs",
    "obs_from_state",
    "GibbsPolicy",
    "softmax",
    "ReplayBuffer",
    "Transition",
    "FiniteMDP",
    "average_reward",
    "compatible_weights",
    "discounted_visitation",
    "exact_policy_gradient",
    "policy_evaluation",
    "value_iteration_oracle",
    "TrainConfig",
    "TrainResult",
    "actor_update",
    "critic_update",
    "load_checkpoint",
    "policy_gradient_estimate",
    "save_checkpoint",
    "sync_targets",
    "td_target",
    "train",
    "ShortfallAgent",
]
