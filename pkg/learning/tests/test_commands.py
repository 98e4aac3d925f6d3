# learning/tests/test_commands.py
import io
import json

import pytest

from graspforge.cli import EXIT_OK, EXIT_USAGE, main
from learning.tests.factories import tiny_config

PHI_STAR = [0.03, 0.03, 0.075, 1.0, 1.0]


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    return main(argv, stdout=out, stderr=err), out.getvalue(), err.getvalue()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.json"
    cfg = tiny_config(skill={"horizon": 10, "lift_steps": 5})
    path.write_text(cfg.model_dump_json(indent=2))
    return path


def test_train_rl_with_baseline_comparison(tmp_path, config_file):
    out = tmp_path / "rl"
    code, stdout, err = _run(["train-rl", "--config", str(config_file), "--out", str(out), "--eval-baseline"])
    assert code == EXIT_OK, err
    assert (out / "policy.ckpt").is_file()
    assert (out / "metrics.csv").read_text().startswith("update,")
    record = json.loads((out / "run.json").read_text())
    assert record["updates"] == [0, 0]
    assert record["baseline_comparison"]["episodes"] == 2
    assert "zero-residual" in stdout


def test_train_rl_rejects_zero_updates(tmp_path, config_file):
    code, _, err = _run(["train-rl", "--config", str(config_file), "--out", str(tmp_path / "rl"),
                         "--total-updates", "0"])
    assert code == EXIT_USAGE
    assert "--total-updates" in err


def test_plot_metrics(tmp_path, config_file):
    out = tmp_path / "rl"
    assert _run(["train-rl", "--config", str(config_file), "--out", str(out)])[0] == EXIT_OK
    png = tmp_path / "plots" / "curves.png"
    code, stdout, _ = _run(["plot-metrics", "--metrics", str(out / "metrics.csv"), "--out", str(png)])
    assert code == EXIT_OK
    assert png.read_bytes()[:4] == b"\x89PNG"
    assert "(1 updates)" in stdout

    code, _, _ = _run(["plot-metrics", "--metrics", str(tmp_path / "nope.csv"), "--out", str(png)])
    assert code == EXIT_USAGE


@pytest.mark.slow
def test_pipeline_from_data_to_experiment(tmp_path, config_file):
    """gen-data -> train-bc -> eval, then the narrow / augmented / mixed comparison."""
    cfg = ["--config", str(config_file)]
    narrow, augmented = tmp_path / "narrow", tmp_path / "augmented"
    assert _run(["gen-data", *cfg, "--out", str(narrow), "--episodes", "3", "--zero-residual",
                 "--keep-failures", "--set", f"sampling.fixed_shape={json.dumps(PHI_STAR)}"])[0] == EXIT_OK
    assert _run(["gen-data", *cfg, "--out", str(augmented), "--episodes", "3", "--zero-residual",
                 "--keep-failures", "--seed", "1"])[0] == EXIT_OK

    ckpt = tmp_path / "bc" / "policy.ckpt"
    code, stdout, err = _run(["train-bc", *cfg, "--data", f"{narrow},{augmented}", "--out", str(ckpt)])
    assert code == EXIT_OK, err
    assert ckpt.is_file()

    shapes = tmp_path / "shapes.json"
    shapes.write_text(json.dumps([{"phi_id": "star", "phi": PHI_STAR, "split": "id"},
                                  [0.05, 0.05, 0.1, 0.2, 1.8]]))
    report = tmp_path / "eval" / "eval.csv"
    code, stdout, err = _run(["eval", *cfg, "--ckpt", str(ckpt), "--shapes", str(shapes),
                              "--trials", "2", "--out", str(report)])
    assert code == EXIT_OK, err
    lines = report.read_text().splitlines()
    assert lines[0] == "phi_id,successes,trials,rate"
    assert lines[1].startswith("star,") and lines[1].split(",")[2] == "2"

    spec = tmp_path / "experiment.json"
    spec.write_text(json.dumps({"narrow_data": "narrow", "augmented_data": "augmented", "trials": 1,
                                "ood_shapes": [[0.05, 0.05, 0.1, 0.2, 1.8]], "seed": 3}))
    out = tmp_path / "experiment"
    code, stdout, err = _run(["experiment", *cfg, "--spec", str(spec), "--out", str(out)])
    assert code == EXIT_OK, err
    for name in ("report.txt", "results.csv", "eval_shapes.json", "success_bars.png", "run.json"):
        assert (out / name).is_file()
    for cond in ("narrow", "augmented", "mixed"):
        assert (out / cond / "policy.ckpt").is_file()
    assert "Direction check" in (out / "report.txt").read_text()
