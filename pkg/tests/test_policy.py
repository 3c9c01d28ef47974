import numpy as np
import pytest
from scipy import stats

from basketexec.errors import NonFiniteLogit
from basketexec.rl import ActionGrid, FeatureMap, GibbsPolicy, StateObs, softmax


def make_policy(n_assets=2, levels=3, horizon=10):
    grid = ActionGrid.linear(np.full(n_assets, 100.0), levels)
    fmap = FeatureMap(
        grid=grid,
        arrival=np.full(n_assets, 100.0),
        inventory=np.full(n_assets, 400.0),
        horizon=horizon,
    )
    return GibbsPolicy(fmap)


def random_obs(policy, rng):
    n = policy.fmap.n_assets
    return StateObs(
        errors=rng.normal(0, 5.0, n),
        remaining=rng.uniform(0, 400.0, n),
        step=int(rng.integers(0, policy.fmap.horizon)),
    )


def bias_obs(n):
    """Observation whose only nonzero state feature is time-remaining = 1."""
    return StateObs(errors=np.zeros(n), remaining=np.zeros(n), step=0)


class TestSoftmax:
    def test_uniform_at_zero_theta(self):
        policy = make_policy(n_assets=1, levels=4)
        probs = policy.policy_probabilities(np.zeros(policy.dim), bias_obs(1))
        assert np.allclose(probs, 0.25, rtol=0, atol=1e-15)
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_closed_form_two_actions(self):
        # logits (ln 3, 0) -> (0.75, 0.25)
        policy = make_policy(n_assets=1, levels=2)
        theta = np.zeros(policy.dim)
        theta[2] = np.log(3.0)  # action-0 slot, time-remaining feature (=1)
        probs = policy.policy_probabilities(theta, bias_obs(1))
        assert np.allclose(probs, [0.75, 0.25], rtol=1e-12)

    def test_shift_invariance(self):
        policy = make_policy(n_assets=1, levels=3)
        rng = np.random.default_rng(0)
        theta = rng.normal(0, 1, policy.dim)
        obs = bias_obs(1)
        base = policy.policy_probabilities(theta, obs)
        shifted = theta.copy()
        shifted[2::3] += 7.5  # adds the same constant to every logit
        assert np.allclose(policy.policy_probabilities(shifted, obs), base, atol=1e-12)

    def test_mode_matches_argmax_logit(self):
        policy = make_policy(n_assets=1, levels=5)
        rng = np.random.default_rng(3)
        for _ in range(20):
            theta = rng.normal(0, 2, policy.dim)
            obs = random_obs(policy, rng)
            logits = policy.asset_logits(theta, obs)[0]
            probs = policy.policy_probabilities(theta, obs)
            assert probs.argmax() == logits.argmax()

    def test_non_finite_logit(self):
        policy = make_policy(n_assets=1, levels=3)
        theta = np.full(policy.dim, np.inf)
        with np.errstate(invalid="ignore"), pytest.raises(NonFiniteLogit):
            policy.policy_probabilities(theta, bias_obs(1))

    def test_sums_to_one_random(self):
        policy = make_policy(n_assets=2, levels=4)
        rng = np.random.default_rng(8)
        for _ in range(100):
            probs = policy.policy_probabilities(rng.normal(0, 3, policy.dim), random_obs(policy, rng))
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_factorized_equals_joint_enumeration(self):
        # independent route: joint softmax over exp(theta . phi) for every
        # enumerated joint action must equal the per-asset product
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(5)
        for _ in range(10):
            theta = rng.normal(0, 1.5, policy.dim)
            obs = random_obs(policy, rng)
            logits = np.array([
                theta @ policy.fmap.phi(obs, idx) for idx in policy.grid.joint_indices()
            ])
            joint = softmax(logits)
            assert np.allclose(policy.policy_probabilities(theta, obs), joint, atol=1e-12)


class TestCompatibleFeatures:
    def test_single_action_grid_zero(self):
        grid = ActionGrid(levels=(np.array([0.0]),))
        fmap = FeatureMap(grid=grid, arrival=[100.0], inventory=[10.0], horizon=5)
        policy = GibbsPolicy(fmap)
        psi = policy.compatible_features(np.zeros(policy.dim), bias_obs(1), (0,))
        assert np.array_equal(psi, np.zeros(policy.dim))

    def test_hand_case_two_orthogonal_features(self):
        # theta=0, two actions whose feature vectors occupy disjoint slots:
        # psi(a=0) puts +0.5 on its own slot, -0.5 on the other
        policy = make_policy(n_assets=1, levels=2)
        psi = policy.compatible_features(np.zeros(policy.dim), bias_obs(1), (0,))
        expected = np.array([0.0, 0.0, 0.5, 0.0, 0.0, -0.5])
        assert np.allclose(psi, expected, atol=1e-15)

    def test_centering_identity(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(11)
        for _ in range(50):
            theta = rng.normal(0, 2, policy.dim)
            obs = random_obs(policy, rng)
            probs = policy.policy_probabilities(theta, obs)
            acc = np.zeros(policy.dim)
            for p, idx in zip(probs, policy.grid.joint_indices()):
                acc += p * policy.compatible_features(theta, obs, idx)
            assert np.all(np.abs(acc) < 1e-12)

    def test_equals_finite_difference_score(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(13)
        h = 1e-6
        for _ in range(25):
            theta = rng.normal(0, 1, policy.dim)
            obs = random_obs(policy, rng)
            idx = tuple(rng.integers(0, 3, 2))
            psi = policy.compatible_features(theta, obs, idx)
            fd = np.zeros(policy.dim)
            for j in range(policy.dim):
                up, dn = theta.copy(), theta.copy()
                up[j] += h
                dn[j] -= h
                fd[j] = (
                    np.log(policy.joint_probability(up, obs, idx))
                    - np.log(policy.joint_probability(dn, obs, idx))
                ) / (2 * h)
            assert np.all(np.abs(psi - fd) < 1e-6)


class TestCriticValue:
    def test_zero_omega(self):
        policy = make_policy()
        rng = np.random.default_rng(2)
        for _ in range(10):
            obs = random_obs(policy, rng)
            theta = rng.normal(0, 1, policy.dim)
            assert policy.critic_value(np.zeros(policy.dim), theta, obs, (0, 0)) == 0.0

    def test_policy_weighted_mean_is_zero(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(4)
        for _ in range(50):
            theta = rng.normal(0, 1.5, policy.dim)
            omega = rng.normal(0, 2.0, policy.dim)
            obs = random_obs(policy, rng)
            probs = policy.policy_probabilities(theta, obs)
            mean_q = sum(
                p * policy.critic_value(omega, theta, obs, idx)
                for p, idx in zip(probs, policy.grid.joint_indices())
            )
            assert abs(mean_q) < 1e-10

    def test_gradient_in_omega_is_compatible_features(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(6)
        h = 1e-6
        theta = rng.normal(0, 1, policy.dim)
        omega = rng.normal(0, 1, policy.dim)
        obs = random_obs(policy, rng)
        idx = (1, 2)
        psi = policy.compatible_features(theta, obs, idx)
        for j in range(policy.dim):
            up, dn = omega.copy(), omega.copy()
            up[j] += h
            dn[j] -= h
            fd = (
                policy.critic_value(up, theta, obs, idx)
                - policy.critic_value(dn, theta, obs, idx)
            ) / (2 * h)
            assert abs(fd - psi[j]) < 1e-6

    def test_linearity_in_omega(self):
        policy = make_policy()
        rng = np.random.default_rng(7)
        theta = rng.normal(0, 1, policy.dim)
        obs = random_obs(policy, rng)
        w1, w2 = rng.normal(0, 1, policy.dim), rng.normal(0, 1, policy.dim)
        for idx in policy.grid.joint_indices():
            combo = policy.critic_value(3.0 * w1 - 0.5 * w2, theta, obs, tuple(idx))
            parts = 3.0 * policy.critic_value(w1, theta, obs, tuple(idx)) - 0.5 * policy.critic_value(w2, theta, obs, tuple(idx))
            assert combo == pytest.approx(parts, rel=1e-12, abs=1e-12)


class TestSelectAction:
    def test_epsilon_one_is_uniform(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(17)
        theta = rng.normal(0, 1, policy.dim)
        omega = rng.normal(0, 1, policy.dim)
        obs = random_obs(policy, rng)
        counts = np.zeros(9)
        for _ in range(10_000):
            idx, _ = policy.select_action(obs, theta, omega, 1.0, "gibbs", rng)
            counts[np.ravel_multi_index(idx, (3, 3))] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_epsilon_zero_greedy_is_critic_argmax(self):
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(19)
        for _ in range(20):
            theta = rng.normal(0, 1, policy.dim)
            omega = rng.normal(0, 1, policy.dim)
            obs = random_obs(policy, rng)
            idx, _ = policy.select_action(obs, theta, omega, 0.0, "greedy-eps", rng)
            values = [
                policy.critic_value(omega, theta, obs, tuple(j))
                for j in policy.grid.joint_indices()
            ]
            assert np.ravel_multi_index(idx, (3, 3)) == int(np.argmax(values))

    def test_greedy_ties_to_lowest_index(self):
        policy = make_policy(n_assets=1, levels=4)
        obs = bias_obs(1)
        idx, _ = policy.select_action(obs, np.zeros(policy.dim), np.zeros(policy.dim), 0.0, "greedy-eps", np.random.default_rng(0))
        assert idx == (0,)

    def test_gibbs_zero_theta_uniform(self):
        policy = make_policy(n_assets=1, levels=4)
        rng = np.random.default_rng(23)
        obs = bias_obs(1)
        counts = np.zeros(4)
        for _ in range(10_000):
            idx, _ = policy.select_action(obs, np.zeros(policy.dim), np.zeros(policy.dim), 0.0, "gibbs", rng)
            counts[idx[0]] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_selection_probability_floor(self):
        # exploration >= 0.05 gives every action positive mass at every state
        policy = make_policy(n_assets=2, levels=3)
        rng = np.random.default_rng(29)
        for mode in ("gibbs", "greedy-eps"):
            for _ in range(20):
                theta = rng.normal(0, 3, policy.dim)
                omega = rng.normal(0, 3, policy.dim)
                probs = policy.selection_probabilities(random_obs(policy, rng), theta, omega, 0.05, mode)
                assert probs.min() >= 0.05 / 9 - 1e-15
                assert abs(probs.sum() - 1.0) < 1e-12

    def test_shares_clipped_to_remaining(self):
        policy = make_policy(n_assets=1, levels=3)
        obs = StateObs(errors=np.zeros(1), remaining=np.array([30.0]), step=2)
        rng = np.random.default_rng(1)
        theta = np.zeros(policy.dim)
        theta[8] = 50.0  # force the max-sell action
        idx, shares = policy.select_action(obs, theta, np.zeros(policy.dim), 0.0, "gibbs", rng)
        assert idx == (2,)
        assert shares[0] == 30.0


class TestActionGrid:
    def test_linear_levels(self):
        grid = ActionGrid.linear([200.0], 5)
        assert np.array_equal(grid.levels[0], [0.0, 50.0, 100.0, 150.0, 200.0])

    def test_buy_mirrored(self):
        grid = ActionGrid.linear([100.0], 3, allow_buy=True)
        assert np.array_equal(grid.levels[0], [-100.0, -50.0, 0.0, 50.0, 100.0])

    def test_must_contain_zero(self):
        with pytest.raises(ValueError):
            ActionGrid(levels=(np.array([1.0, 2.0]),))

    def test_joint_enumeration(self):
        grid = ActionGrid.linear([10.0, 20.0], 3)
        joint = grid.joint_indices()
        assert joint.shape == (9, 2)
        assert grid.n_joint == 9
        assert np.array_equal(grid.shares((2, 1)), [10.0, 10.0])
