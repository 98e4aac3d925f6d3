# learning/tests/test_ppo.py
from __future__ import annotations

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.errors import ShapeMismatchError
from core.pydantic_models import PpoSection
from learning.services.policy import GaussianPolicy, value_network
from learning.services.ppo import PpoBatch, PpoLearner, clipped_surrogate, gae, normalize_advantages, ppo_update


def brute_force_advantages(rewards, values, dones, gamma, lam):
    """A_t = sum_k (gamma * lam)^k delta_{t+k}, truncated at the first terminal step."""
    n = len(rewards)
    adv = np.zeros(n)
    for t in range(n):
        total, scale = 0.0, 1.0
        for k in range(t, n):
            nxt = 0.0 if dones[k] else values[k + 1]
            total += scale * (rewards[k] + gamma * nxt - values[k])
            if dones[k]:
                break
            scale *= gamma * lam
        adv[t] = total
    return adv


class GaeTests(SimpleTestCase):
    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(1, 40))
            rewards = rng.normal(size=n)
            values = rng.normal(size=n + 1)
            dones = rng.random(n) < 0.15
            gamma, lam = float(rng.uniform(0.8, 1.0)), float(rng.uniform(0.0, 1.0))
            adv, ret = gae(rewards, values, dones, gamma, lam)
            np.testing.assert_allclose(adv, brute_force_advantages(rewards, values, dones, gamma, lam),
                                       rtol=0.0, atol=1e-12)
            np.testing.assert_allclose(ret, adv + values[:-1], atol=1e-12)

    def test_lambda_zero_is_one_step_td(self):
        rewards = np.array([1.0, 0.5, -0.2])
        values = np.array([0.3, 0.1, 0.4, 0.9])
        dones = np.array([False, False, False])
        adv, _ = gae(rewards, values, dones, gamma=0.9, lam=0.0)
        np.testing.assert_allclose(adv, rewards + 0.9 * values[1:] - values[:-1], atol=1e-12)

    def test_lambda_one_is_monte_carlo(self):
        rewards = np.array([1.0, 2.0, 3.0])
        values = np.array([0.5, -1.0, 2.0, 7.0])
        dones = np.array([False, False, True])
        adv, ret = gae(rewards, values, dones, gamma=1.0, lam=1.0)
        np.testing.assert_allclose(ret, [6.0, 5.0, 3.0], atol=1e-12)
        np.testing.assert_allclose(adv, [5.5, 6.0, 1.0], atol=1e-12)

    def test_terminal_cuts_bootstrap(self):
        adv, _ = gae([1.0, 1.0], [0.0, 0.0, 100.0], [False, True], gamma=0.99, lam=0.95)
        self.assertAlmostEqual(adv[1], 1.0, places=12)

    def test_length_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            gae([1.0, 2.0], [0.0, 0.0], [False, False], 0.99, 0.95)


class SurrogateTests(SimpleTestCase):
    def test_positive_advantage_is_capped(self):
        self.assertAlmostEqual(float(clipped_surrogate(1.5, 1.0, 0.2)), 1.2, places=12)
        self.assertAlmostEqual(float(clipped_surrogate(1.5, 2.0, 0.2)), 2.4, places=12)

    def test_negative_advantage_keeps_the_pessimistic_term(self):
        self.assertAlmostEqual(float(clipped_surrogate(1.5, -1.0, 0.2)), -1.5, places=12)
        self.assertAlmostEqual(float(clipped_surrogate(0.5, -1.0, 0.2)), -0.8, places=12)

    def test_inside_the_band_is_unclipped(self):
        self.assertAlmostEqual(float(clipped_surrogate(1.1, 3.0, 0.2)), 3.3, places=12)

    def test_normalized_advantages(self):
        adv = normalize_advantages(np.random.default_rng(3).normal(4.0, 9.0, 500))
        self.assertAlmostEqual(float(adv.mean()), 0.0, places=10)
        self.assertAlmostEqual(float(adv.std()), 1.0, places=6)


# ---------------------------------------------------------------------
# Learner
# ---------------------------------------------------------------------
def make_learner(rng, obs_dim=4, act_dim=2, **ppo):
    cfg = PpoSection(hidden=[6], **ppo)
    policy = GaussianPolicy.create(obs_dim, act_dim, cfg.hidden, rng, init_log_std=-0.5)
    # move the mean away from the near-zero init so every gradient path is exercised
    policy.mean = policy.mean.with_flat(policy.mean.flat() + rng.normal(0.0, 0.3, policy.mean.n_params))
    return PpoLearner(policy, value_network(obs_dim, cfg.hidden, rng), cfg)


def test_unchanged_policy_has_no_clipping():
    rng = np.random.default_rng(11)
    learner = make_learner(rng)
    obs = rng.normal(size=(32, 4))
    actions = rng.normal(size=(32, 2))
    old_logp = learner.policy.log_prob(obs, actions)
    stats, _ = learner.loss_and_grads(obs, actions, old_logp, rng.normal(size=32), rng.normal(size=32))
    assert stats["clip_fraction"] == 0.0
    assert stats["mean_ratio"] == pytest.approx(1.0, abs=1e-12)
    assert stats["approx_kl"] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(50 + seed)
    learner = make_learner(rng, entropy_coeff=0.02, value_coeff=0.7)
    obs = rng.normal(size=(12, 4))
    actions = rng.normal(size=(12, 2))
    # ratios stay inside the clip band so the loss is smooth around the current parameters
    old_logp = learner.policy.log_prob(obs, actions) + rng.uniform(-0.05, 0.05, 12)
    adv = rng.normal(size=12)
    ret = rng.normal(size=12)

    _, grad = learner.loss_and_grads(obs, actions, old_logp, adv, ret)
    theta = learner._flat()
    h = 1e-6
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        vals = []
        for sign in (1.0, -1.0):
            nudged = PpoLearner(learner.policy.copy(), learner.value.copy(), learner.config)
            nudged._assign(theta + sign * h * np.eye(1, theta.size, i)[0])
            stats, _ = nudged.loss_and_grads(obs, actions, old_logp, adv, ret)
            vals.append(stats["loss"])
        fd[i] = (vals[0] - vals[1]) / (2.0 * h)
    err = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad) + np.linalg.norm(fd), 1e-12)
    assert err <= 1e-4


def test_batch_rows_validated():
    with pytest.raises(ShapeMismatchError):
        PpoBatch(np.zeros((4, 2)), np.zeros((4, 1)), np.zeros(3), np.zeros(4), np.zeros(4))


def test_bandit_converges_to_optimal_mean():
    """One-dimensional bandit with reward -(a - 0.3)^2: the policy mean settles near 0.3."""
    rng = np.random.default_rng(5)
    cfg = PpoSection(learning_rate=0.01, hidden=[8], minibatch=64, epochs_per_update=4,
                     entropy_coeff=0.0, max_grad_norm=10.0)
    policy = GaussianPolicy.create(1, 1, cfg.hidden, rng, init_log_std=-1.0)
    learner = PpoLearner(policy, value_network(1, cfg.hidden, rng), cfg)
    obs = np.ones((256, 1))
    for update in range(200):
        mu = learner.policy.mean_action(obs)
        actions = mu + np.exp(learner.policy.log_std) * rng.standard_normal(mu.shape)
        logp = learner.policy.log_prob(obs, actions)
        r = -((actions[:, 0] - 0.3) ** 2)
        # single-step episodes: advantage is the reward against the batch mean
        batch = PpoBatch(obs, actions, logp, r - float(np.mean(r)), r)
        ppo_update(learner, batch, np.random.default_rng(update))
        if abs(float(learner.policy.mean_action(obs[0])[0]) - 0.3) < 0.01:
            break
    assert abs(float(learner.policy.mean_action(obs[0])[0]) - 0.3) <= 0.05
