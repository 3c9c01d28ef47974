"""Intraday bar ingestion and drift/covariance estimation.

Returns are simple one-bar relative changes (the dynamics are an arithmetic
increment scheme, not a log scheme); estimates divide by the bar's time unit
tau so mu and sigma come out per time unit, directly pluggable into a preset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    InsufficientData,
    MissingFile,
    MissingSymbol,
    NonMonotoneTimestamps,
    ParseError,
)
from .market import BasketPreset


@dataclass(frozen=True)
class BarSeries:
    """Aligned bar records for a set of symbols on a common timestamp grid."""

    symbols: tuple[str, ...]
    timestamps: np.ndarray  # (m,) epoch seconds
    prices: np.ndarray  # (m, n)
    volumes: np.ndarray  # (m, n)
    tau: float = 1.0  # model time units per bar
    fills: int = 0  # forward-filled cells
    dropped: int = 0  # leading grid rows dropped before all symbols had data

    def __post_init__(self):
        m, n = self.prices.shape
        if len(self.symbols) != n or self.volumes.shape != (m, n) or self.timestamps.shape != (m,):
            raise ValueError("bar arrays misaligned")
        if np.any(np.diff(self.timestamps) <= 0):
            raise NonMonotoneTimestamps("timestamps must be strictly increasing")
        if np.any(self.prices <= 0):
            raise ValueError("prices must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def n_bars(self) -> int:
        return self.prices.shape[0]


def _parse_timestamp(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValueError(f"bad timestamp {raw!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def load_bars(path, symbols: Sequence[str], tau: float = 1.0) -> BarSeries:
    """Read `timestamp,symbol,price,volume` CSV rows into an aligned BarSeries.

    Timestamps may be epoch seconds or ISO-8601. Bars missing for one symbol
    at a grid timestamp are forward-filled (price carried, volume 0) and
    counted; grid rows before every symbol has traded are dropped and counted.
    """
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"bar file not found: {p}")
    symbols = list(symbols)
    per_symbol: dict[str, dict[float, tuple[float, float]]] = {s: {} for s in symbols}
    last_ts: dict[str, float] = {}
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "symbol", "price", "volume"]:
            raise ParseError(f"expected header timestamp,symbol,price,volume, got {header}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=line_no)
            sym = row[1].strip()
            if sym not in per_symbol:
                continue
            try:
                ts = _parse_timestamp(row[0].strip())
                price = float(row[2])
                volume = float(row[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=line_no) from None
            if price <= 0:
                raise ParseError(f"non-positive price {price}", line=line_no)
            if sym in last_ts and ts <= last_ts[sym]:
                raise NonMonotoneTimestamps(
                    f"timestamps for {sym} not strictly increasing at line {line_no}"
                )
            last_ts[sym] = ts
            per_symbol[sym][ts] = (price, volume)
    for sym in symbols:
        if not per_symbol[sym]:
            raise MissingSymbol(f"symbol {sym} not present in {p}")

    grid = sorted(set().union(*(d.keys() for d in per_symbol.values())))
    first_common = max(min(d.keys()) for d in per_symbol.values())
    kept = [t for t in grid if t >= first_common]
    dropped = len(grid) - len(kept)

    m, n = len(kept), len(symbols)
    prices = np.empty((m, n))
    volumes = np.zeros((m, n))
    fills = 0
    for j, sym in enumerate(symbols):
        series = per_symbol[sym]
        earlier = [t for t in series if t < first_common]
        last_price = series[max(earlier)][0] if earlier else None
        for i, t in enumerate(kept):
            if t in series:
                last_price, volumes[i, j] = series[t]
            else:
                fills += 1
            prices[i, j] = last_price
    return BarSeries(
        symbols=tuple(symbols),
        timestamps=np.asarray(kept, dtype=float),
        prices=prices,
        volumes=volumes,
        tau=tau,
        fills=fills,
        dropped=dropped,
    )


def relative_returns(series: BarSeries) -> np.ndarray:
    """One-bar relative price changes, shape (n_bars-1, n)."""
    return np.diff(series.prices, axis=0) / series.prices[:-1]


def estimate_mu(series: BarSeries) -> np.ndarray:
    """Per-asset drift per time unit: mean one-bar relative return / tau."""
    if series.n_bars < 2:
        raise InsufficientData("need at least 2 bars to estimate drift")
    return relative_returns(series).mean(axis=0) / series.tau


def estimate_cov(series: BarSeries) -> np.ndarray:
    """Per-time-unit covariance of relative returns, symmetrized and PSD-repaired."""
    sigma, _ = _cov_with_repair(series)
    return sigma


def _cov_with_repair(series: BarSeries) -> tuple[np.ndarray, float]:
    if series.n_bars < 3:
        raise InsufficientData("need at least 3 bars to estimate covariance")
    r = relative_returns(series)
    c = np.cov(r, rowvar=False, ddof=1).reshape(r.shape[1], r.shape[1])
    c = 0.5 * (c + c.T)
    eigvals, eigvecs = np.linalg.eigh(c)
    repair = float(max(0.0, -eigvals.min()))
    if repair > 0.0:
        c = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        c = 0.5 * (c + c.T)
    return c / series.tau, repair / series.tau


@dataclass(frozen=True)
class CalibrationResult:
    """Estimated dynamics parameters with their sampling errors."""

    mu: np.ndarray
    sigma: np.ndarray
    n_samples: int  # number of return observations
    se_mu: np.ndarray
    se_sigma: np.ndarray
    repair: float  # magnitude of the PSD eigenvalue clip, 0 when none


def calibrate(series: BarSeries) -> CalibrationResult:
    """Full parameter estimation for one aligned bar series."""
    mu = estimate_mu(series)
    sigma, repair = _cov_with_repair(series)
    r = relative_returns(series)
    m = r.shape[0]
    per_bar_cov = sigma * series.tau
    se_mu = np.sqrt(np.diag(per_bar_cov) / m) / series.tau
    d = np.diag(per_bar_cov)
    se_sigma = np.sqrt((np.outer(d, d) + per_bar_cov**2) / (m - 1)) / series.tau
    return CalibrationResult(
        mu=mu, sigma=sigma, n_samples=m, se_mu=se_mu, se_sigma=se_sigma, repair=repair
    )


def result_to_preset(
    result: CalibrationResult,
    series: BarSeries,
    impact_slope=None,
    max_clip=None,
    inventory=None,
    daily_volume=None,
    notes: str = "",
) -> BasketPreset:
    """Assemble a preset from calibrated dynamics plus execution parameters.

    Calibration cannot see impact or desk limits, so those default to
    documented placeholders (slope -1e-11, clip 200, inventory 100x clip).
    The arrival mark is the last observed price.
    """
    n = len(series.symbols)
    slope = np.full(n, -1e-11) if impact_slope is None else np.broadcast_to(np.asarray(impact_slope, dtype=float), (n,)).copy()
    clip = np.full(n, 200.0) if max_clip is None else np.broadcast_to(np.asarray(max_clip, dtype=float), (n,)).copy()
    inv = 100.0 * clip if inventory is None else np.broadcast_to(np.asarray(inventory, dtype=float), (n,)).copy()
    vol = None if daily_volume is None else np.broadcast_to(np.asarray(daily_volume, dtype=float), (n,)).copy()
    return BasketPreset(
        symbols=series.symbols,
        tau=series.tau,
        mu=result.mu,
        sigma=result.sigma,
        impact_slope=slope,
        max_clip=clip,
        inventory=inv,
        arrival_price=series.prices[-1],
        daily_volume=vol,
        notes=notes or "calibrated from bar data; impact/clip/inventory are placeholders",
    )


class DriftCovarianceCalibrator(BaseEstimator):
    """Estimator-API wrapper: fit on bars, read mu_ / sigma_ and their errors."""

    def __init__(self, tau: float = 1.0):
        self.tau = tau

    def fit(self, X, y=None):
        """X is a BarSeries or an (m, n) array of aligned positive prices."""
        if isinstance(X, BarSeries):
            series = X
        else:
            prices = np.asarray(X, dtype=float)
            if prices.ndim != 2:
                raise ValueError("price array must be 2-D (bars, assets)")
            series = BarSeries(
                symbols=tuple(f"A{i}" for i in range(prices.shape[1])),
                timestamps=np.arange(prices.shape[0], dtype=float),
                prices=prices,
                volumes=np.zeros_like(prices),
                tau=self.tau,
            )
        result = calibrate(series)
        self.mu_ = result.mu
        self.sigma_ = result.sigma
        self.se_mu_ = result.se_mu
        self.se_sigma_ = result.se_sigma
        self.n_samples_ = result.n_samples
        self.repair_ = result.repair
        return self
