# learning/tests/test_bc.py
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from django.test import SimpleTestCase

from core.errors import EmptyDatasetError, ShapeMismatchError
from learning.services import bc as bc_module
from learning.services import evaluation as evaluation_module
from learning.services.bc import BcSamples, bc_loss_and_grads, per_sample_loss, train_bc
from learning.services.normalize import RunningNorm
from learning.tests.factories import random_bc_policy, random_samples, small_bc_section


class BcSamplesTests(SimpleTestCase):
    def test_from_records_concatenates_steps(self):
        from datagen.tests.factories import fake_record

        rng = np.random.default_rng(0)
        recs = [fake_record(rng, 0, length=3), fake_record(rng, 1, length=0), fake_record(rng, 2, length=2)]
        samples = BcSamples.from_records(recs)
        self.assertEqual(samples.size, 5)
        self.assertEqual(samples.depth.shape, (5, 1024))
        self.assertEqual(samples.extra.shape, (5, 19))
        self.assertEqual(samples.actions.shape, (5, 14))
        np.testing.assert_array_equal(samples.extra[:3, :4], recs[0].contacts)

    def test_empty_dataset_is_rejected(self):
        with self.assertRaises(EmptyDatasetError):
            train_bc([], small_bc_section())


class BcLossTests(SimpleTestCase):
    def test_exact_prediction_has_zero_loss(self):
        rng = np.random.default_rng(1)
        policy = random_bc_policy(rng)
        depth, extra, _ = random_samples(rng, 8)
        actions = policy.predict_batch(depth, extra)
        self.assertLess(float(per_sample_loss(policy, depth, extra, actions).max()), 1e-20)

    def test_target_shape_checked(self):
        rng = np.random.default_rng(2)
        policy = random_bc_policy(rng)
        d, e, _ = random_samples(rng, 4)
        dn, en = policy.normalize_inputs(d, e)
        with self.assertRaises(ShapeMismatchError):
            bc_loss_and_grads(policy, dn, en, np.zeros((4, 3)))


@pytest.mark.parametrize("config", range(20))
def test_loss_gradient_matches_finite_differences(config):
    rng = np.random.default_rng(300 + config)
    policy = random_bc_policy(rng)
    d, e, a = random_samples(rng, 6)
    dn, en = policy.normalize_inputs(d, e)
    tn = policy.action_norm.normalize(a, clip=0)
    _, grad = bc_loss_and_grads(policy, dn, en, tn)

    theta = policy.flat()
    # spot-check encoder and trunk coordinates
    idx = np.concatenate([rng.choice(policy.encoder.n_params, 10, replace=False),
                          policy.encoder.n_params + rng.choice(policy.trunk.n_params, 10, replace=False)])
    h = 1e-6
    fd = np.zeros(idx.size)
    for j, i in enumerate(idx):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        fd[j] = (bc_loss_and_grads(policy.with_flat(up), dn, en, tn)[0]
                 - bc_loss_and_grads(policy.with_flat(down), dn, en, tn)[0]) / (2.0 * h)
    g = grad[idx]
    assert np.linalg.norm(g - fd) / max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12) <= 1e-4


# ---------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------
def test_memorizes_a_single_repeated_pair():
    rng = np.random.default_rng(3)
    d, e, a = random_samples(rng, 1)
    # a constant column has zero variance; the floor keeps it finite
    samples = BcSamples(np.repeat(d, 20, axis=0), np.repeat(e, 20, axis=0), np.repeat(a, 20, axis=0))
    _, result = train_bc(samples, small_bc_section(epochs=200, minibatch=20, lr=1e-2), seed=0)
    assert result.final_loss <= 1e-6


def test_fits_two_distinct_pairs():
    rng = np.random.default_rng(13)
    d, e, a = random_samples(rng, 2)
    samples = BcSamples(np.repeat(d, 10, axis=0), np.repeat(e, 10, axis=0), np.repeat(a, 10, axis=0))
    _, result = train_bc(samples, small_bc_section(epochs=400, minibatch=20, lr=1e-2), seed=0)
    assert result.final_loss <= 1e-3
    assert result.final_loss < result.epoch_losses[0]


def test_full_batch_loss_is_monotone_at_small_lr():
    rng = np.random.default_rng(4)
    samples = BcSamples(*random_samples(rng, 32))
    _, result = train_bc(samples, small_bc_section(epochs=20, minibatch=32, lr=1e-5), seed=1)
    losses = np.array(result.epoch_losses)
    assert np.all(np.diff(losses) <= 1e-12)
    assert losses[-1] < losses[0]


def test_training_is_deterministic_per_seed():
    rng = np.random.default_rng(5)
    samples = BcSamples(*random_samples(rng, 40))
    section = small_bc_section(epochs=3, minibatch=16)
    p1, r1 = train_bc(samples, section, seed=9)
    p2, r2 = train_bc(samples, section, seed=9)
    np.testing.assert_array_equal(p1.flat(), p2.flat())
    assert r1.epoch_losses == r2.epoch_losses
    p3, _ = train_bc(samples, section, seed=10)
    assert not np.array_equal(p1.flat(), p3.flat())


def test_untrained_policy_predicts_mean_action():
    rng = np.random.default_rng(6)
    d, e, a = random_samples(rng, 25)
    policy = random_bc_policy(rng, live_output=False)
    policy.action_norm = RunningNorm.fit(a).freeze()
    np.testing.assert_allclose(policy.predict_batch(d, e), np.tile(a.mean(axis=0), (25, 1)), atol=1e-12)


def test_policy_code_never_reads_privileged_observations():
    for module in (bc_module, evaluation_module):
        source = Path(module.__file__).read_text(encoding="utf-8")
        assert "privileged" not in source, module.__name__
