"""VWAP benchmarks, shortfall accounting, and per-rollout episode reports.

Shortfall follows the signed convention F = sum_j a_j * (S_j - arrival): a
sale below the arrival price contributes negatively, and lower F is better
under the minimization objective. The learner's reward is the negated
increment -(F_k - F_{k-1}) so episode return telescopes to -F_K.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NoExecutions, ZeroVolume


@dataclass(frozen=True)
class TradeLedger:
    """Aligned per-step execution records for one rollout.

    Row j holds trading period steps[j] (1-based): executed shares, the price
    each asset traded at that period, and the period's market volume.
    """

    steps: np.ndarray  # (m,) int
    shares: np.ndarray  # (m, n)
    prices: np.ndarray  # (m, n)
    volumes: np.ndarray  # (m, n)

    def __post_init__(self):
        m, n = self.shares.shape
        if self.prices.shape != (m, n) or self.volumes.shape != (m, n):
            raise ValueError("ledger arrays misaligned")
        if self.steps.shape != (m,):
            raise ValueError("steps misaligned with rows")

    @property
    def n_assets(self) -> int:
        return self.shares.shape[1]

    def through(self, step: int) -> np.ndarray:
        return self.steps <= step


def market_vwap(ledger: TradeLedger, asset: int, through_step: int) -> float:
    """Volume-weighted market price of one asset over periods 1..through_step."""
    rows = ledger.through(through_step)
    vol = ledger.volumes[rows, asset]
    total = vol.sum()
    if total <= 0.0:
        raise ZeroVolume(f"no market volume for asset {asset} through step {through_step}")
    return float(vol @ ledger.prices[rows, asset] / total)


def trader_vwap(ledger: TradeLedger, asset: int, through_step: int) -> float:
    """Volume-weighted price of the trader's own executions through a step."""
    rows = ledger.through(through_step)
    shares = ledger.shares[rows, asset]
    total = shares.sum()
    if total <= 0.0:
        raise NoExecutions(f"no executions for asset {asset} through step {through_step}")
    return float(shares @ ledger.prices[rows, asset] / total)


def shortfall_per_asset(ledger: TradeLedger, arrival: float, asset: int, through_step: int) -> float:
    """Pathwise shortfall sum_j a_j*(S_j - arrival) for one asset."""
    rows = ledger.through(through_step)
    return float(ledger.shares[rows, asset] @ (ledger.prices[rows, asset] - arrival))


@dataclass(frozen=True)
class ShortfallReport:
    """Running shortfall and VWAP series derived from one ledger."""

    steps: np.ndarray  # (m,)
    per_asset: np.ndarray  # (m, n) running F_{i,k}
    total: np.ndarray  # (m,) running F_k = sum_i F_{i,k}
    trader_vwap: np.ndarray  # (m, n), NaN before the first execution
    market_vwap: np.ndarray  # (m, n), NaN while cumulative volume is zero


def total_shortfall(report: ShortfallReport) -> float:
    """Final basket shortfall F_K."""
    return float(report.total[-1]) if report.total.size else 0.0


def build_report(ledger: TradeLedger, arrival) -> ShortfallReport:
    arrival = np.asarray(arrival, dtype=float)
    contrib = ledger.shares * (ledger.prices - arrival)
    per_asset = np.cumsum(contrib, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cum_shares = np.cumsum(ledger.shares, axis=0)
        cum_vol = np.cumsum(ledger.volumes, axis=0)
        t_vwap = np.where(cum_shares > 0, np.cumsum(ledger.shares * ledger.prices, axis=0) / np.where(cum_shares > 0, cum_shares, 1.0), np.nan)
        m_vwap = np.where(cum_vol > 0, np.cumsum(ledger.volumes * ledger.prices, axis=0) / np.where(cum_vol > 0, cum_vol, 1.0), np.nan)
    return ShortfallReport(
        steps=ledger.steps.copy(),
        per_asset=per_asset,
        total=per_asset.sum(axis=1),
        trader_vwap=t_vwap,
        market_vwap=m_vwap,
    )


def synth_volume_profile(n_steps: int, daily_volume: float) -> np.ndarray:
    """Symmetric U-shaped intraday volume curve summing to daily_volume.

    Quadratic in the step index with ends 4x the midday trough; every entry
    is strictly positive.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not daily_volume > 0:
        raise ValueError("daily_volume must be positive")
    if n_steps == 1:
        return np.array([float(daily_volume)])
    t = (2.0 * np.arange(n_steps) - (n_steps - 1)) / (n_steps - 1)
    shape = 1.0 + 3.0 * t * t
    return daily_volume * shape / shape.sum()


@dataclass(frozen=True)
class EpisodeReport:
    """Everything recorded about one rollout, ready to serialize."""

    symbols: tuple[str, ...]
    ledger: TradeLedger
    errors: np.ndarray  # (m, n) tracking error at each trading period
    report: ShortfallReport

    @classmethod
    def from_ledger(cls, symbols: Sequence[str], ledger: TradeLedger, arrival) -> "EpisodeReport":
        arrival = np.asarray(arrival, dtype=float)
        return cls(
            symbols=tuple(symbols),
            ledger=ledger,
            errors=ledger.prices - arrival,
            report=build_report(ledger, arrival),
        )

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["step", "asset", "price", "action", "error",
                 "cum_shortfall", "trader_vwap", "market_vwap"]
            )
            for j, step in enumerate(self.ledger.steps):
                for i, sym in enumerate(self.symbols):
                    writer.writerow([
                        int(step),
                        sym,
                        repr(float(self.ledger.prices[j, i])),
                        repr(float(self.ledger.shares[j, i])),
                        repr(float(self.errors[j, i])),
                        repr(float(self.report.per_asset[j, i])),
                        repr(float(self.report.trader_vwap[j, i])),
                        repr(float(self.report.market_vwap[j, i])),
                    ])
