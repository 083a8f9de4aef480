import json

import pandas as pd
import pytest

from grapApp.cli import build_parser, main


@pytest.fixture
def config_file(small_config, tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(small_config.to_yaml(), encoding="utf-8")
    return path


def test_run_writes_outputs(config_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "-c", str(config_file), "-o", str(out), "--method", "equal"]) == 0
    for name in ("trajectory.csv", "summary.csv", "config.yaml", "model.npz"):
        assert (out / name).exists()
    summary = json.loads(capsys.readouterr().out)
    assert summary["method"] == "equal"


def test_overrides(config_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "-c", str(config_file), "-o", str(out), "--steps", "8", "--seed", "2"]) == 0
    assert pd.read_csv(out / "summary.csv").loc[0, "steps"] == 8
    assert pd.read_csv(out / "summary.csv").loc[0, "seed"] == 2


def test_bad_config_exits_with_config_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("stepz: 3\n", encoding="utf-8")
    assert main(["run", "-c", str(bad)]) == 2
    assert main(["run", "-c", str(tmp_path / "missing.yaml")]) == 2


def test_fixed_weight_count_must_match(config_file):
    assert main(["run", "-c", str(config_file), "--method", "fixed:1,2"]) == 2


def test_divergence_exits_with_numerical_code(small_config, tmp_path):
    path = tmp_path / "diverge.yaml"
    path.write_text(
        small_config.model_copy(update={"lr": 1e8, "steps": 400}).to_yaml(), encoding="utf-8"
    )
    assert main(["run", "-c", str(path), "-o", str(tmp_path / "out")]) == 3


def test_tuned_divergence_exits_with_numerical_code(small_config, tmp_path):
    path = tmp_path / "diverge.yaml"
    path.write_text(
        small_config.model_copy(update={"lr": 1e8, "steps": 400}).to_yaml(), encoding="utf-8"
    )
    assert main(["tuned", "-c", str(path), "-o", str(tmp_path / "out")]) == 3


def test_verify_suite(capsys):
    assert main(["verify", "--suites", "gradcheck", "--seed", "1"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_generate(config_file, tmp_path):
    out = tmp_path / "data.csv"
    assert main(["generate", str(out), "-c", str(config_file)]) == 0
    frame = pd.read_csv(out)
    assert set(frame["split"]) == {"train", "val"}
    assert len(frame) == 192 + 64


def test_sweep_without_cache(config_file, tmp_path):
    out = tmp_path / "sweep"
    code = main(
        ["sweep", "-c", str(config_file), "-o", str(out), "--methods", "equal", "grap", "--seeds", "0", "1", "--no-cache"]
    )
    assert code == 0
    table = pd.read_csv(out / "sweep_summary.csv")
    assert list(table["label"]) == ["equal", "grap"]


def test_parser_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--suites", "nope"])
