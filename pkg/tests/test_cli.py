import json
from pathlib import Path

import pytest

from a2aopt.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_validate_prints_table(capsys):
    assert main(["validate"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "7/7 suites passed" in out


def test_attack_config_end_to_end(tmp_path, capsys):
    out = tmp_path / "attack"
    assert main(["attack", "--config", str(CONFIGS / "attack_opposite.json"), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["success_rate"] == 1.0 and report["kind"] == "attack"
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["gap_type"] == "opposite" and echoed["out"] == str(out)
    assert "success rate 1.000" in capsys.readouterr().out


def test_flags_override_config(tmp_path):
    out = tmp_path / "sim"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "converge", "seeds": [0, 1], "eta": 0.004, "turns": 200}))
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--eta", "0.003",
                 "--loss-mode", "sum", "--out", str(out)]) == EXIT_OK
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["seeds"] == [5] and echoed["eta"] == 0.003 and echoed["loss_mode"] == "sum"
    assert (out / "trajectory.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    args = ["sweep-angle", "--config", str(CONFIGS / "sweep_angle.json"), "--seed", "0"]
    for name in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("report.json", "plateaus.csv", "config.json", "run_meta.json"):
        assert (tmp_path / "a" / f).read_bytes() != b""
    for f in ("report.json", "plateaus.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_predict_does_not_simulate(tmp_path):
    out = tmp_path / "pred"
    assert main(["predict", "--config", str(CONFIGS / "sweep_angle.json"), "--seed", "1", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["rows"]) == 20 and "plateau_w" not in report["rows"][0]
    assert all(r["lower_w"] <= r["upper_w"] for r in report["rows"])


@pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"kind": "attack", "eta": -1}', '{"bogus": 1}'])
def test_malformed_config_exits_2_without_outputs(tmp_path, content):
    cfg = tmp_path / "bad.json"
    cfg.write_text(content)
    out = tmp_path / "out"
    assert main(["attack", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_missing_config_and_kind_mismatch(tmp_path):
    assert main(["attack", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(CONFIGS / "attack_opposite.json"),
                 "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert not (tmp_path / "x").exists()


def test_unknown_flag_is_rejected():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--turbo"])
    assert info.value.code == 2


def test_divergence_exit_code(tmp_path):
    out = tmp_path / "div"
    assert main(["simulate", "--seed", "0", "--eta", "5", "--out", str(out)]) == EXIT_DIVERGED
    row = json.loads((out / "report.json").read_text())["rows"][0]
    assert row["diverged"] and not row["stable"]


def test_backend_failure_exit_code(tmp_path, mock):
    mock.script.extend(["status429"])
    cfg = tmp_path / "llm.json"
    cfg.write_text(json.dumps({
        "kind": "converge", "d": 2, "n": 3, "turns": 3, "seeds": [0], "loss_mode": "sum",
        "backend_w": "llm", "backend_u": "llm",
        "endpoint": {"base_url": mock.base_url, "model_name": "m", "api_key_env": "A2A_TEST_KEY"},
    }))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_BACKEND


def test_train_lsa_writes_checkpoint(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"d": 2, "n": 3, "num_datasets": 4, "epochs": 2, "max_iter": 10, "eval_datasets": 2}))
    out = tmp_path / "lsa"
    assert main(["train-lsa", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == EXIT_OK
    ckpt = json.loads((out / "lsa.json").read_text())
    assert ckpt["train_meta"]["config"]["seed"] == 4 and ckpt["d"] == 2


def test_train_lsa_rejects_unknown_fields(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"epochz": 3}))
    assert main(["train-lsa", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()
