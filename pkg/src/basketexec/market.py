"""Correlated multi-asset price dynamics with linear trade impact.

Discrete-time model: each step the relative price change of asset i is
``tau*(impact_slope_i*a_i + mu_i) + sqrt(tau)*(L z)_i`` where ``L L^T`` equals
the covariance of per-time-unit relative returns and ``z`` is a vector of
independent standard normals. The equivalent shortfall-tracking-error
recursion is obtained by exact substitution ``x = S - arrival`` and is the
form actually iterated, so the error/price identity holds by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    Asymmetric,
    ClipExceeded,
    InventoryExceeded,
    MissingFile,
    NotPositiveSemiDefinite,
)
from .validation import as_square_matrix, as_vector, check_symmetric

PRESET_FORMAT_VERSION = 1

# Pivots this far below zero (absolute) mean the matrix is not PSD; smaller
# negatives are rounding noise and clamp to zero.
_PIVOT_TOL = 1e-12


def cholesky_factor(cov) -> np.ndarray:
    """Lower-triangular L with L @ L.T == cov, tolerating zero pivots.

    Raises Asymmetric when the input is not symmetric to 1e-12 relative and
    NotPositiveSemiDefinite when a pivot falls below -1e-12.
    """
    a = as_square_matrix(cov, name="covariance")
    check_symmetric(a, rtol=1e-12, name="covariance")
    n = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot < -_PIVOT_TOL:
            raise NotPositiveSemiDefinite(f"pivot {pivot:.3e} at index {j}")
        lower[j, j] = math.sqrt(max(pivot, 0.0))
        if lower[j, j] > 0.0:
            for i in range(j + 1, n):
                lower[i, j] = (a[i, j] - lower[i, :j] @ lower[j, :j]) / lower[j, j]
        # zero pivot: a PSD matrix has zeros below, leave the column at 0
    return lower


@dataclass(frozen=True)
class AssetSpec:
    """Per-asset execution parameters.

    mu: per-step drift rate; impact_slope: relative price impact per share
    traded (negative when selling pressure); max_clip: largest trade per step;
    inventory: total shares to liquidate; arrival_price: benchmark price when
    the order was issued.
    """

    mu: float
    impact_slope: float
    max_clip: float
    inventory: float
    arrival_price: float

    def __post_init__(self):
        if not self.max_clip > 0:
            raise ValueError("max_clip must be positive")
        if not (math.isfinite(self.inventory) and self.inventory >= 0):
            raise ValueError("inventory must be finite and non-negative")
        if not self.arrival_price > 0:
            raise ValueError("arrival_price must be positive")
        if abs(self.impact_slope * self.max_clip) >= 1.0:
            raise ValueError("impact of a max-clip trade would reverse the price sign")


@dataclass(frozen=True)
class CovarianceSpec:
    """Symmetric PSD covariance of per-time-unit relative returns, with its factor."""

    matrix: np.ndarray
    chol: np.ndarray

    @classmethod
    def from_matrix(cls, matrix) -> "CovarianceSpec":
        m = as_square_matrix(matrix, name="covariance")
        check_symmetric(m, rtol=1e-12, name="covariance")
        m = 0.5 * (m + m.T)  # scrub rounding-level asymmetry
        return cls(matrix=m, chol=cholesky_factor(m))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NoiseDraw:
    """Raw standard-normal deviates for one step, with a provenance label."""

    z: np.ndarray
    seed_state: str = ""


def draw_noise(n: int, rng: np.random.Generator, index: int | None = None) -> NoiseDraw:
    """Draw n independent standard normals; index labels the draw for audit."""
    label = "" if index is None else f"{type(rng.bit_generator).__name__}:{index}"
    return NoiseDraw(z=rng.standard_normal(n), seed_state=label)


def sample_noise(chol: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One correlated noise vector L @ z with z ~ N(0, I)."""
    chol = np.asarray(chol, dtype=float)
    return chol @ rng.standard_normal(chol.shape[0])


def impact(spec: AssetSpec, shares: float) -> float:
    """Relative price-rate impact of trading `shares` at once."""
    if abs(shares) > spec.max_clip:
        raise ClipExceeded(f"|{shares}| exceeds clip {spec.max_clip}")
    return spec.impact_slope * shares


@dataclass(frozen=True)
class ExecutionRules:
    """Config flags governing how raw actions become executed trades."""

    allow_buy: bool = False
    strict_inventory: bool = False
    price_floor: float = 0.01


DEFAULT_RULES = ExecutionRules()


@dataclass(frozen=True)
class MarketState:
    """Immutable snapshot of the basket between trading periods.

    errors is maintained as exactly prices - arrival (bitwise) at construction
    and after every step. floor_hits counts price-floor clamps so far.
    """

    prices: np.ndarray
    errors: np.ndarray
    remaining: np.ndarray
    step: int
    tau: float
    floor_hits: int = 0

    @classmethod
    def initial(cls, specs: Sequence[AssetSpec], tau: float) -> "MarketState":
        arrival = np.array([s.arrival_price for s in specs], dtype=float)
        inventory = np.array([s.inventory for s in specs], dtype=float)
        return cls(
            prices=arrival.copy(),
            errors=arrival - arrival,
            remaining=inventory,
            step=0,
            tau=float(tau),
        )

    @property
    def n(self) -> int:
        return self.prices.shape[0]


@dataclass(frozen=True)
class MarketArrays:
    """Spec columns plus the covariance factor, cached for fast stepping."""

    mu: np.ndarray
    slope: np.ndarray
    clip: np.ndarray
    inventory: np.ndarray
    arrival: np.ndarray
    chol: np.ndarray

    @classmethod
    def build(cls, specs: Sequence[AssetSpec], cov: CovarianceSpec) -> "MarketArrays":
        return cls(
            mu=np.array([s.mu for s in specs], dtype=float),
            slope=np.array([s.impact_slope for s in specs], dtype=float),
            clip=np.array([s.max_clip for s in specs], dtype=float),
            inventory=np.array([s.inventory for s in specs], dtype=float),
            arrival=np.array([s.arrival_price for s in specs], dtype=float),
            chol=cov.chol,
        )


def _execute(a, remaining, clip, rules: ExecutionRules, enforce_clip: bool):
    if enforce_clip:
        if np.any(np.abs(a) > clip):
            raise ClipExceeded(f"action {a} outside clip bounds {clip}")
        if not rules.allow_buy and np.any(a < 0):
            raise ClipExceeded("negative trade with buying disabled")
    if rules.strict_inventory and np.any(a > remaining):
        raise InventoryExceeded(f"action {a} exceeds remaining inventory {remaining}")
    return np.where(a >= 0, np.minimum(a, remaining), a)


def executed_shares(
    state: MarketState,
    action,
    specs: Sequence[AssetSpec],
    rules: ExecutionRules = DEFAULT_RULES,
    enforce_clip: bool = True,
) -> np.ndarray:
    """Resolve a raw action into the trade actually executed this step.

    Sells beyond remaining inventory either clip to it (default) or raise
    InventoryExceeded in strict mode. Raises ClipExceeded for trades outside
    the admissible clip interval unless enforce_clip is off (terminal forced
    liquidation).
    """
    a = as_vector(action, n=state.n, name="action")
    clip = np.array([s.max_clip for s in specs], dtype=float)
    return _execute(a, state.remaining, clip, rules, enforce_clip)


def _advance(state: MarketState, executed: np.ndarray, lz: np.ndarray, arrays: MarketArrays):
    """One step of the tracking-error recursion (exact substitution form)."""
    growth = state.tau * (arrays.slope * executed + arrays.mu) + math.sqrt(state.tau) * lz
    return state.errors + growth * (state.errors + arrays.arrival)


def _step_with_arrays(
    state: MarketState,
    action,
    z: np.ndarray,
    arrays: MarketArrays,
    rules: ExecutionRules,
    enforce_clip: bool,
) -> tuple[MarketState, np.ndarray]:
    """Shared stepping kernel; returns (next state, executed shares)."""
    executed = _execute(action, state.remaining, arrays.clip, rules, enforce_clip)
    x_next = _advance(state, executed, arrays.chol @ z, arrays)
    prices = arrays.arrival + x_next
    hits = prices <= 0.0
    n_hits = int(np.count_nonzero(hits))
    if n_hits:
        prices = np.where(hits, rules.price_floor, prices)
    remaining = np.clip(state.remaining - executed, 0.0, arrays.inventory)
    nxt = MarketState(
        prices=prices,
        errors=prices - arrays.arrival,
        remaining=remaining,
        step=state.step + 1,
        tau=state.tau,
        floor_hits=state.floor_hits + n_hits,
    )
    return nxt, executed


def step_price(
    state: MarketState,
    action,
    noise: NoiseDraw,
    specs: Sequence[AssetSpec],
    cov: CovarianceSpec,
    rules: ExecutionRules = DEFAULT_RULES,
    enforce_clip: bool = True,
) -> MarketState:
    """Advance prices one trading period under the executed action and noise."""
    if noise.z.shape[0] != state.n:
        raise ValueError("noise length does not match asset count")
    a = as_vector(action, n=state.n, name="action")
    arrays = MarketArrays.build(specs, cov)
    nxt, _ = _step_with_arrays(state, a, noise.z, arrays, rules, enforce_clip)
    return nxt


def step_error(
    state: MarketState,
    action,
    noise: NoiseDraw,
    specs: Sequence[AssetSpec],
    cov: CovarianceSpec,
    rules: ExecutionRules = DEFAULT_RULES,
    enforce_clip: bool = True,
) -> np.ndarray:
    """Next tracking-error vector; identical dynamics to step_price."""
    if noise.z.shape[0] != state.n:
        raise ValueError("noise length does not match asset count")
    a = as_vector(action, n=state.n, name="action")
    arrays = MarketArrays.build(specs, cov)
    executed = _execute(a, state.remaining, arrays.clip, rules, enforce_clip)
    x_next = _advance(state, executed, arrays.chol @ noise.z, arrays)
    floor_x = rules.price_floor - arrays.arrival
    return np.where(arrays.arrival + x_next <= 0.0, floor_x, x_next)


@dataclass(frozen=True)
class BasketPreset:
    """Full parameter set for one basket: dynamics, impact, clips, inventory."""

    symbols: tuple[str, ...]
    tau: float
    mu: np.ndarray
    sigma: np.ndarray
    impact_slope: np.ndarray
    max_clip: np.ndarray
    inventory: np.ndarray
    arrival_price: np.ndarray
    daily_volume: np.ndarray | None = None
    notes: str = ""

    def __post_init__(self):
        n = len(self.symbols)
        object.__setattr__(self, "mu", as_vector(self.mu, n, "mu"))
        object.__setattr__(self, "sigma", as_square_matrix(self.sigma, n, "sigma"))
        object.__setattr__(self, "impact_slope", as_vector(self.impact_slope, n, "impact_slope"))
        object.__setattr__(self, "max_clip", as_vector(self.max_clip, n, "max_clip"))
        object.__setattr__(self, "inventory", as_vector(self.inventory, n, "inventory"))
        object.__setattr__(self, "arrival_price", as_vector(self.arrival_price, n, "arrival_price"))
        if self.daily_volume is not None:
            object.__setattr__(self, "daily_volume", as_vector(self.daily_volume, n, "daily_volume"))
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.specs()  # runs AssetSpec invariant checks

    @property
    def n(self) -> int:
        return len(self.symbols)

    def specs(self) -> list[AssetSpec]:
        return [
            AssetSpec(
                mu=float(self.mu[i]),
                impact_slope=float(self.impact_slope[i]),
                max_clip=float(self.max_clip[i]),
                inventory=float(self.inventory[i]),
                arrival_price=float(self.arrival_price[i]),
            )
            for i in range(self.n)
        ]

    def cov(self) -> CovarianceSpec:
        return CovarianceSpec.from_matrix(self.sigma)

    def initial_state(self) -> MarketState:
        return MarketState.initial(self.specs(), self.tau)

    def with_updates(self, **kwargs) -> "BasketPreset":
        return replace(self, **kwargs)


def save_preset(preset: BasketPreset, path) -> None:
    payload = {
        "format_version": PRESET_FORMAT_VERSION,
        "symbols": list(preset.symbols),
        "tau": preset.tau,
        "mu": preset.mu.tolist(),
        "sigma": preset.sigma.tolist(),
        "impact_slope": preset.impact_slope.tolist(),
        "max_clip": preset.max_clip.tolist(),
        "inventory": preset.inventory.tolist(),
        "arrival_price": preset.arrival_price.tolist(),
    }
    if preset.daily_volume is not None:
        payload["daily_volume"] = preset.daily_volume.tolist()
    if preset.notes:
        payload["notes"] = preset.notes
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _preset_from_payload(payload: dict) -> BasketPreset:
    version = payload.get("format_version", 1)
    if version != PRESET_FORMAT_VERSION:
        raise ValueError(f"unsupported preset format_version {version}")
    return BasketPreset(
        symbols=tuple(payload["symbols"]),
        tau=float(payload["tau"]),
        mu=payload["mu"],
        sigma=payload["sigma"],
        impact_slope=payload["impact_slope"],
        max_clip=payload["max_clip"],
        inventory=payload["inventory"],
        arrival_price=payload["arrival_price"],
        daily_volume=payload.get("daily_volume"),
        notes=payload.get("notes", ""),
    )


def builtin_preset_names() -> list[str]:
    root = resources.files("basketexec").joinpath("presets")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(path_or_name) -> BasketPreset:
    """Load a preset from a JSON file path or a builtin preset name."""
    p = Path(path_or_name)
    if p.suffix == ".json" or p.exists():
        if not p.exists():
            raise MissingFile(f"preset file not found: {p}")
        return _preset_from_payload(json.loads(p.read_text()))
    ref = resources.files("basketexec").joinpath("presets", f"{path_or_name}.json")
    if not ref.is_file():
        raise MissingFile(
            f"no preset file or builtin named {path_or_name!r}; "
            f"builtins: {', '.join(builtin_preset_names())}"
        )
    return _preset_from_payload(json.loads(ref.read_text()))


def simulate_price_paths(
    preset: BasketPreset, n_steps: int, rng: np.random.Generator
) -> np.ndarray:
    """No-trading price paths, shape (n_steps+1, n); row 0 is the arrival price.

    Vectorized fast path of the same per-step recursion as step_price with
    zero actions; no price-floor handling (raises if a step factor is not
    positive, which at calibrated scales would take a >1000-sigma draw).
    """
    z = rng.standard_normal((n_steps, preset.n))
    growth = preset.tau * preset.mu + math.sqrt(preset.tau) * (z @ preset.cov().chol.T)
    factors = 1.0 + growth
    if np.any(factors <= 0.0):
        raise ValueError("one-step factor went non-positive; use step_price with a floor")
    paths = np.empty((n_steps + 1, preset.n))
    paths[0] = preset.arrival_price
    np.cumprod(factors, axis=0, out=factors)
    paths[1:] = preset.arrival_price * factors
    return paths
