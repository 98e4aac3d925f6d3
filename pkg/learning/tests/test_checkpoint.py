# learning/tests/test_checkpoint.py
from __future__ import annotations

import struct

import numpy as np
import pytest

from core.enums import CheckpointKind
from core.errors import CheckpointError
from learning.services.bc import BcPolicy, load_bc_policy, save_bc_policy
from learning.services.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from learning.services.mlp import MlpParams
from learning.services.normalize import RunningNorm
from learning.services.policy import ResidualAgent, load_residual_agent
from learning.tests.factories import random_bc_policy, tiny_config
from sim.services.hand import default_hand


@pytest.fixture
def small_ckpt(rng):
    net = MlpParams.init((3, 4, 2), rng)
    norm = RunningNorm(rng.normal(size=3), rng.uniform(0.5, 2.0, 3), 17.0)
    return Checkpoint(CheckpointKind.RESIDUAL, 5, [net, MlpParams.init((3, 4, 1), rng)], np.array([-1.0, -0.5]), [norm])


def test_round_trip_is_exact(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    back = load_checkpoint(path)
    assert back.kind is CheckpointKind.RESIDUAL
    assert back.update == 5
    for a, b in zip(small_ckpt.nets, back.nets):
        assert a.sizes == b.sizes
        np.testing.assert_array_equal(a.flat(), b.flat())
    np.testing.assert_array_equal(back.log_std, small_ckpt.log_std)
    np.testing.assert_array_equal(back.norms[0].mean, small_ckpt.norms[0].mean)
    np.testing.assert_array_equal(back.norms[0].var, small_ckpt.norms[0].var)
    assert back.norms[0].count == 17.0
    assert back.norms[0].frozen


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_bad_magic(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_wrong_version(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_unknown_kind(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    data = bytearray(path.read_bytes())
    data[8:12] = struct.pack("<I", 7)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="kind"):
        load_checkpoint(path)


def test_truncated(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path, small_ckpt):
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_non_finite_weights(tmp_path, small_ckpt):
    small_ckpt.nets[0].weights[0][0, 0] = np.nan
    path = save_checkpoint(small_ckpt, tmp_path / "a.ckpt")
    with pytest.raises(CheckpointError, match="non-finite"):
        load_checkpoint(path)


# ---------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------
def test_residual_agent_round_trip(tmp_path):
    cfg = tiny_config()
    hand = default_hand()
    agent = ResidualAgent.create(hand, cfg.ppo, cfg.skill, np.random.default_rng(4))
    agent.obs_norm.update(np.random.default_rng(5).normal(size=(50, agent.policy.obs_dim)))
    save_checkpoint(agent.to_checkpoint(3), tmp_path / "policy.ckpt")
    back = load_residual_agent(tmp_path / "policy.ckpt", hand, cfg.skill)
    obs = np.random.default_rng(6).normal(size=agent.policy.obs_dim)
    np.testing.assert_array_equal(back.act(obs), agent.act(obs))
    np.testing.assert_array_equal(back.policy.log_std, agent.policy.log_std)
    np.testing.assert_array_equal(back.value.flat(), agent.value.flat())


def test_bc_policy_round_trip(tmp_path, rng):
    policy = random_bc_policy(rng)
    save_bc_policy(policy, tmp_path / "bc.ckpt", epochs=12)
    back = load_bc_policy(tmp_path / "bc.ckpt")
    assert back.encoder.tanh_output and not back.trunk.tanh_output
    depth = rng.uniform(0.3, 0.6, (3, 1024))
    extra = rng.normal(size=(3, 19))
    np.testing.assert_array_equal(back.predict_batch(depth, extra), policy.predict_batch(depth, extra))
    assert load_checkpoint(tmp_path / "bc.ckpt").update == 12


def test_kind_is_checked_when_loading_policies(tmp_path, rng):
    save_bc_policy(random_bc_policy(rng), tmp_path / "bc.ckpt")
    with pytest.raises(CheckpointError):
        load_residual_agent(tmp_path / "bc.ckpt", default_hand(), tiny_config().skill)
    cfg = tiny_config()
    agent = ResidualAgent.create(default_hand(), cfg.ppo, cfg.skill, rng)
    save_checkpoint(agent.to_checkpoint(0), tmp_path / "rl.ckpt")
    with pytest.raises(CheckpointError):
        BcPolicy.from_checkpoint(load_checkpoint(tmp_path / "rl.ckpt"))
