# core/tests/test_commands.py
import io
import json

import pytest

from graspforge.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, SUBCOMMANDS, main


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_help_lists_every_subcommand():
    code, out, _ = _run(["--help"])
    assert code == EXIT_OK
    for sub in SUBCOMMANDS:
        assert sub in out


def test_unknown_or_missing_subcommand_is_a_usage_error():
    code, _, err = _run(["launch"])
    assert code == EXIT_USAGE
    assert "unknown subcommand 'launch'" in err
    code, _, err = _run([])
    assert code == EXIT_USAGE
    assert "usage:" in err


def test_subcommand_help_exits_cleanly(capsys):
    assert main(["render", "--help"]) == EXIT_OK
    assert "--phi" in capsys.readouterr().out


def test_bad_flag_is_a_usage_error(capsys):
    assert main(["config", "--no-such-flag"]) == EXIT_USAGE
    assert main(["gen-data", "--out", "x"]) == EXIT_USAGE  # --episodes missing
    capsys.readouterr()


def test_emit_default_config():
    code, out, _ = _run(["config", "--emit-default"])
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["seed"] == 0
    assert len(payload["hand"]["fingers"]) == 4
    assert set(payload) >= {"sim", "camera", "skill", "reward", "ppo", "sampling", "datagen", "bc", "eval"}


def test_emit_default_config_to_file(tmp_path):
    target = tmp_path / "cfg" / "default.json"
    code, out, _ = _run(["config", "--emit-default", "--out", str(target)])
    assert code == EXIT_OK
    assert "Wrote reference config" in out
    assert json.loads(target.read_text())["ppo"]["clip"] == 0.2


def test_config_without_action_is_a_usage_error():
    code, _, err = _run(["config"])
    assert code == EXIT_USAGE
    assert "--emit-default" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["gen-data", "--out", "unused", "--episodes", "1", "--zero-residual", "--set", "ppo.bogus=1"],
        ["gen-data", "--out", "unused", "--episodes", "1", "--zero-residual", "--config", "/nonexistent.json"],
        ["inspect-data", "--data", "/nonexistent/dataset"],
    ],
)
def test_runtime_errors_exit_with_two(argv):
    code, _, err = _run(argv)
    assert code == EXIT_RUNTIME
    assert err.startswith(f"graspforge {argv[0]}: error:")
