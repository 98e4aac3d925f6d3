# core/tests/test_configuration_service.py
import json

import pytest

from core.errors import ConfigError
from core.pydantic_models import RunConfig
from core.services.configuration_service import (
    RunRecorder,
    build_id,
    default_config_payload,
    load_run_config,
    package_build_id,
    parse_override,
)


def test_defaults_without_file():
    cfg = load_run_config()
    assert cfg == RunConfig()
    assert cfg.skill.horizon == 50
    assert cfg.ppo.hidden == [128, 128]


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 3, "ppo": {"total_updates": 7}}))
    cfg = load_run_config(path, ["ppo.total_updates=9", "bc.hidden=[32, 32]"])
    assert cfg.seed == 3
    assert cfg.ppo.total_updates == 9
    assert cfg.bc.hidden == [32, 32]
    # untouched keys keep their defaults
    assert cfg.ppo.gamma == 0.99


def test_mapping_overrides():
    cfg = load_run_config(overrides={"eval.trials": 2, "sampling.fixed_shape": [0.03, 0.03, 0.075, 1, 1]})
    assert cfg.eval.trials == 2
    assert cfg.sampling.fixed_shape == (0.03, 0.03, 0.075, 1.0, 1.0)


def test_parse_override():
    assert parse_override("ppo.total_updates=10") == ("ppo.total_updates", 10)
    assert parse_override("eval.phi_star=[1,2]") == ("eval.phi_star", [1, 2])
    assert parse_override("note=plain text") == ("note", "plain text")
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")


@pytest.mark.parametrize(
    "overrides",
    [
        ["ppo.bogus=1"],
        ["skill.horizon=1"],
        ["reward.force_band=[5, 1]"],
        ["sampling.eps=[0.01, 1.0]"],
        ["seed.inner=1"],
    ],
)
def test_rejects_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_run_config(overrides=overrides)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(bad)
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(listy)


def test_assignment_is_validated():
    cfg = RunConfig()
    with pytest.raises(ValueError):
        cfg.workers = 0


def test_default_payload_round_trips():
    payload = default_config_payload()
    assert len(payload["hand"]["fingers"]) == 4
    assert RunConfig.model_validate(payload).model_dump(mode="json") == payload


def test_build_id_names_the_package():
    assert build_id().startswith(package_build_id() + "/py")
    assert package_build_id().startswith("graspforge-")


def test_run_recorder_writes_provenance(tmp_path):
    rec = RunRecorder("gen-data", ["graspforge", "gen-data"], RunConfig(seed=5), tmp_path / "out")
    rec.record_timing("total_s", 1.23456)
    rec.extra["dataset"] = {"count": 2}
    path = rec.write()
    record = json.loads(path.read_text())
    assert record["command"] == "gen-data"
    assert record["seed"] == 5
    assert record["status"] == "ok"
    assert record["timings"] == {"total_s": 1.235}
    assert record["dataset"] == {"count": 2}
    assert record["config"]["seed"] == 5
