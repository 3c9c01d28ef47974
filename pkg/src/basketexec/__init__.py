"""Correlated-basket liquidation: simulator, shortfall metrics, and a
compatible actor-critic execution agent with a reproducible CLI harness."""

__version__ = "0.1.0"

from .market import (
    AssetSpec,
    BasketPreset,
    CovarianceSpec,
    ExecutionRules,
    MarketState,
    NoiseDraw,
    cholesky_factor,
    draw_noise,
    impact,
    load_preset,
    sample_noise,
    save_preset,
    simulate_price_paths,
    step_error,
    step_price,
)
from .metrics import (
    EpisodeReport,
    ShortfallReport,
    TradeLedger,
    build_report,
    market_vwap,
    shortfall_per_asset,
    synth_volume_profile,
    total_shortfall,
    trader_vwap,
)
from .env import LiquidationEnv, rollout
from .calibration import (
    BarSeries,
    CalibrationResult,
    DriftCovarianceCalibrator,
    calibrate,
    estimate_cov,
    estimate_mu,
    load_bars,
    relative_returns,
    result_to_preset,
)
from .rl import (
    ActionGrid,
    FeatureMap,
    FiniteMDP,
    GibbsPolicy,
    ReplayBuffer,
    ShortfallAgent,
    StateObs,
    TrainConfig,
    TrainResult,
    Transition,
    exact_policy_gradient,
    load_checkpoint,
    save_checkpoint,
    train,
    value_iteration_oracle,
)
from .harness import (
    EvalResult,
    ExperimentConfig,
    baseline_twap,
    evaluate,
    fixed_action_error_profile,
    load_config,
    make_policy,
    run_experiment,
)
