import json

import numpy as np
import pytest

from basketexec import (
    AssetSpec,
    BasketPreset,
    ExperimentConfig,
    LiquidationEnv,
    ShortfallAgent,
    TrainConfig,
    baseline_twap,
    evaluate,
    fixed_action_error_profile,
    load_preset,
    run_experiment,
)
from basketexec.errors import MissingFile
from basketexec.harness import config_from_dict, config_hash, make_policy
from basketexec.rl.features import StateObs


def quiet_pair():
    """Two assets, no noise, no drift, no impact: prices pinned at arrival."""
    return BasketPreset(
        symbols=("QA", "QB"),
        tau=1.0,
        mu=[0.0, 0.0],
        sigma=np.zeros((2, 2)),
        impact_slope=[0.0, 0.0],
        max_clip=[100.0, 100.0],
        inventory=[400.0, 200.0],
        arrival_price=[100.0, 50.0],
    )


def tiny_config(tmp_path, **overrides):
    train = dict(episodes=6, horizon=8, grid_levels=3, minibatch=8,
                 buffer_capacity=512, seed=None)
    payload = dict(
        preset="toy_one_asset",
        output_dir=str(tmp_path / "run"),
        seed=5,
        rollouts=4,
        baselines=("trained", "twap", "immediate", "random"),
        train=TrainConfig(**train),
        profile_rollouts=4,
    )
    payload.update(overrides)
    return ExperimentConfig(**payload)


class TestBaselineTwap:
    def test_even_split(self):
        spec = AssetSpec(mu=0, impact_slope=0, max_clip=50, inventory=100, arrival_price=10)
        assert np.array_equal(baseline_twap(spec, 4), [25.0, 25.0, 25.0, 25.0])

    def test_remainder_to_last(self):
        spec = AssetSpec(mu=0, impact_slope=0, max_clip=50, inventory=10, arrival_price=10)
        assert np.array_equal(baseline_twap(spec, 3), [3.0, 3.0, 4.0])

    def test_zero_inventory(self):
        spec = AssetSpec(mu=0, impact_slope=0, max_clip=50, inventory=0, arrival_price=10)
        assert np.array_equal(baseline_twap(spec, 5), np.zeros(5))


class TestPolicies:
    def test_immediate_exhausts_at_clip_rate(self):
        preset = quiet_pair()
        env = LiquidationEnv(preset, horizon=6)
        policy = make_policy("immediate", preset, 6)
        state = env.reset()
        rng = np.random.default_rng(0)
        executed = []
        for _ in range(6):
            out = env.step(state, policy(state, rng), rng)
            executed.append(out.executed.copy())
            state = out.state
        executed = np.array(executed)
        assert np.array_equal(executed[:, 0], [100, 100, 100, 100, 0, 0])
        assert np.array_equal(executed[:, 1], [100, 100, 0, 0, 0, 0])

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            make_policy("alpha", quiet_pair(), 5)


class TestEvaluate:
    def test_zero_policy_zero_shortfall(self, toy_preset):
        res = evaluate("zero", toy_preset, horizon=6, n_rollouts=3, seed=1,
                       force_complete=False)
        assert res.shortfall_mean == 0.0
        assert res.shortfall_se == 0.0
        # tracking error equals the uncontrolled deviation, generally nonzero
        assert np.any(res.error_mean != 0.0)

    def test_twap_on_quiet_preset_is_exactly_flat(self):
        res = evaluate("twap", quiet_pair(), horizon=8, n_rollouts=3, seed=2)
        assert res.shortfall_mean == 0.0
        assert np.all(res.error_mean == 0.0)

    def test_deterministic_under_seed(self, pair_preset):
        a = evaluate("random", pair_preset, horizon=6, n_rollouts=5, seed=9)
        b = evaluate("random", pair_preset, horizon=6, n_rollouts=5, seed=9)
        assert a.shortfall_mean == b.shortfall_mean
        assert np.array_equal(a.error_mean, b.error_mean)

    def test_rollout_count_guard(self, toy_preset):
        with pytest.raises(ValueError):
            evaluate("zero", toy_preset, horizon=5, n_rollouts=0, seed=0)


class TestFixedActionProfile:
    def test_zero_noise_matches_hand_recursion(self):
        preset = BasketPreset(
            symbols=("HA",), tau=1.0, mu=[0.002], sigma=[[0.0]],
            impact_slope=[-1e-4], max_clip=[50.0], inventory=[1e6],
            arrival_price=[80.0],
        )
        mean, se = fixed_action_error_profile(preset, 0, 25.0, n_rollouts=2, horizon=12)
        x, path = 0.0, []
        for _ in range(12):
            x = x + 1.0 * (-1e-4 * 25.0 + 0.002) * (x + 80.0)
            path.append(x)
        assert np.allclose(mean[:, 0], path, rtol=1e-12)
        assert np.all(se == 0.0)

    def test_idle_action_tracks_drift_mean(self, toy_preset):
        mean, se = fixed_action_error_profile(toy_preset, 0, 0.0, n_rollouts=4000, horizon=10, seed=3)
        x, path = 0.0, []
        for _ in range(10):
            x = x * (1.0 + toy_preset.mu[0]) + toy_preset.mu[0] * toy_preset.arrival_price[0]
            path.append(x)
        assert np.all(np.abs(mean[:, 0] - np.array(path)) < 4 * se[:, 0])

    def test_selling_lowers_error_path(self, toy_preset):
        # common random numbers: selling at the clip weakly lowers the mean
        # path versus idling
        idle, _ = fixed_action_error_profile(toy_preset, 0, 0.0, n_rollouts=200, horizon=10, seed=4)
        sold, _ = fixed_action_error_profile(toy_preset, 0, 100.0, n_rollouts=200, horizon=10, seed=4)
        assert np.all(sold <= idle + 1e-12)
        assert sold[-1, 0] < idle[-1, 0]

    def test_off_grid_action_rejected(self, toy_preset):
        with pytest.raises(ValueError):
            fixed_action_error_profile(toy_preset, 0, 33.3, n_rollouts=2, horizon=5)


class TestRunExperiment:
    def test_artifacts_complete(self, tmp_path):
        out = run_experiment(tiny_config(tmp_path))
        expected = [
            "preset.json", "config.json", "checkpoint.json", "diagnostics.csv",
            "comparison.csv", "tracking_error_mean.csv", "shortfall_mean.csv",
            "fixed_action_error.csv", "manifest.json",
        ]
        for name in expected:
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["complete"] is True
        assert manifest["seed"] == 5
        for name in ("trained", "twap", "immediate", "random"):
            assert (out / f"episode_report_{name}.csv").exists()

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_a = tiny_config(tmp_path, output_dir=str(tmp_path / "a"))
        cfg_b = tiny_config(tmp_path, output_dir=str(tmp_path / "b"))
        out_a = run_experiment(cfg_a)
        out_b = run_experiment(cfg_b)
        for csv_path in sorted(out_a.glob("*.csv")):
            assert csv_path.read_bytes() == (out_b / csv_path.name).read_bytes(), csv_path.name

    def test_missing_preset_leaves_no_directory(self, tmp_path):
        cfg = tiny_config(tmp_path, preset=str(tmp_path / "ghost.json"))
        with pytest.raises(MissingFile):
            run_experiment(cfg)
        assert not (tmp_path / "run").exists()


class TestConfig:
    def test_seed_flows_to_training(self, tmp_path):
        cfg = tiny_config(tmp_path)
        assert cfg.train.seed == 5

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BASKETEXEC_SEED", "99")
        monkeypatch.setenv("BASKETEXEC_OUTDIR", str(tmp_path / "env_out"))
        cfg = config_from_dict({
            "preset": "toy_one_asset",
            "output_dir": str(tmp_path / "ignored"),
            "seed": 1,
            "train": {"episodes": 2, "horizon": 4},
        })
        assert cfg.seed == 99
        assert cfg.train.seed == 99
        assert cfg.output_dir.endswith("env_out")

    def test_hash_stable_and_sensitive(self, tmp_path):
        a = tiny_config(tmp_path)
        b = tiny_config(tmp_path)
        assert config_hash(a) == config_hash(b)
        c = tiny_config(tmp_path, seed=6)
        assert config_hash(a) != config_hash(c)


class TestShortfallAgent:
    def test_fit_predict(self, toy_preset):
        agent = ShortfallAgent(episodes=6, horizon=8, grid_levels=3, minibatch=8, seed=13)
        agent.fit(toy_preset)
        assert agent.theta_.shape == agent.omega_.shape
        assert agent.diagnostics_["total_shortfall"].shape == (6,)
        row = np.array([[0.5, 300.0, 2.0]])
        trades = agent.predict(row)
        assert trades.shape == (1, 1)
        assert trades[0, 0] in (0.0, 50.0, 100.0)
        obs = StateObs(errors=np.array([0.5]), remaining=np.array([30.0]), step=2)
        assert agent.act(obs)[0] <= 30.0

    def test_predict_requires_fit(self):
        with pytest.raises(RuntimeError):
            ShortfallAgent().predict([[0.0, 1.0, 0.0]])

    def test_sklearn_params(self):
        agent = ShortfallAgent(gamma=0.9, episodes=3)
        params = agent.get_params()
        assert params["gamma"] == 0.9
        agent.set_params(episodes=7)
        assert agent.episodes == 7

    def test_predict_shape_guard(self, toy_preset):
        agent = ShortfallAgent(episodes=2, horizon=4, grid_levels=3, minibatch=4, seed=1)
        agent.fit(toy_preset)
        with pytest.raises(ValueError):
            agent.predict([[1.0, 2.0]])
