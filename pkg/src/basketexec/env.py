"""Episodic liquidation environment over the basket dynamics.

Stepping is pure: callers own the state and the random generator, so many
rollouts can run in parallel as long as each owns its generator. Reward is
the negated shortfall increment -sum_i a_i * x_i, so the undiscounted episode
return telescopes to -F_K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import (
    DEFAULT_RULES,
    BasketPreset,
    ExecutionRules,
    MarketArrays,
    MarketState,
    _step_with_arrays,
)
from .metrics import EpisodeReport, TradeLedger, synth_volume_profile

DEFAULT_DAILY_VOLUME = 1e6


@dataclass(frozen=True)
class StepOutcome:
    state: MarketState
    executed: np.ndarray
    reward: float
    price_at_execution: np.ndarray


class LiquidationEnv:
    """Fixed-horizon liquidation of one basket preset.

    force_complete dumps any remaining inventory on the final step (clip
    bound waived for that forced trade), matching the requirement that the
    execution finishes within the horizon.
    """

    def __init__(
        self,
        preset: BasketPreset,
        horizon: int,
        rules: ExecutionRules = DEFAULT_RULES,
        force_complete: bool = True,
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.preset = preset
        self.horizon = int(horizon)
        self.rules = rules
        self.force_complete = force_complete
        self.specs = preset.specs()
        self.cov = preset.cov()
        self._arrays = MarketArrays.build(self.specs, self.cov)
        volume = preset.daily_volume
        if volume is None:
            volume = np.full(preset.n, DEFAULT_DAILY_VOLUME)
        self.volume_profile = np.column_stack(
            [synth_volume_profile(self.horizon, v) for v in volume]
        )

    @property
    def n(self) -> int:
        return self.preset.n

    def reset(self) -> MarketState:
        return self.preset.initial_state()

    def is_final_action(self, state: MarketState) -> bool:
        return state.step == self.horizon - 1

    def step(self, state: MarketState, shares, rng: np.random.Generator) -> StepOutcome:
        """Execute one trade; the trade prints at the current period's price."""
        shares = np.asarray(shares, dtype=float)
        enforce_clip = True
        if self.force_complete and self.is_final_action(state):
            shares = state.remaining
            enforce_clip = False
        nxt, executed = _step_with_arrays(
            state, shares, rng.standard_normal(self.n), self._arrays,
            self.rules, enforce_clip,
        )
        reward = -float(executed @ state.errors)
        return StepOutcome(
            state=nxt,
            executed=executed,
            reward=reward,
            price_at_execution=state.prices,
        )


def rollout(env: LiquidationEnv, policy, rng: np.random.Generator) -> EpisodeReport:
    """Run one full episode; policy(state, rng) -> shares vector.

    Returns the per-step EpisodeReport; tracking errors and prices are those
    at which each trade printed.
    """
    state = env.reset()
    m = env.horizon
    shares = np.zeros((m, env.n))
    prices = np.zeros((m, env.n))
    for k in range(m):
        outcome = env.step(state, policy(state, rng), rng)
        shares[k] = outcome.executed
        prices[k] = outcome.price_at_execution
        state = outcome.state
    ledger = TradeLedger(
        steps=np.arange(1, m + 1),
        shares=shares,
        prices=prices,
        volumes=env.volume_profile.copy(),
    )
    return EpisodeReport.from_ledger(env.preset.symbols, ledger, env.preset.arrival_price)
