import csv
import filecmp
import os
import subprocess
from pathlib import Path

import pytest

BIN = os.environ.get("MMCAST_BIN", "mmcast")
CONFIGS = Path(__file__).resolve().parents[2] / "configs"
SMOKE = CONFIGS / "smoke.cfg"


def run(*args, check=None):
    p = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True)
    if check is not None:
        assert p.returncode == check, p.stdout + p.stderr
    return p


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    run("simulate", "--config", SMOKE, "--out", out, check=0)
    return out


@pytest.fixture(scope="module")
def pretrained(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "pre"
    run("train", "--config", SMOKE, "--data", data, "--out", out, check=0)
    return out


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_simulate_is_byte_identical(data, tmp_path):
    again = tmp_path / "again"
    run("simulate", "--config", SMOKE, "--out", again, check=0)
    names = sorted(p.name for p in data.iterdir())
    assert names == sorted(p.name for p in again.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(data, again, names, shallow=False)
    assert mismatch == [] and errors == []
    assert len(names) == 161


def test_missing_seed_is_a_validation_error(tmp_path):
    cfg = tmp_path / "noseed.cfg"
    cfg.write_text("sim.n_steps = 10\n")
    p = run("simulate", "--config", cfg, "--out", tmp_path / "o", check=1)
    assert "seed" in p.stderr


def test_unknown_key_is_a_validation_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = 1\nsim.n_stepz = 10\n")
    p = run("simulate", "--config", cfg, "--out", tmp_path / "o", check=1)
    assert "sim.n_stepz" in p.stderr


def test_seed_override_supplies_the_seed(tmp_path):
    cfg = tmp_path / "noseed.cfg"
    cfg.write_text(SMOKE.read_text().replace("seed = 7", ""))
    run("simulate", "--config", cfg, "--seed-override", 7, "--out", tmp_path / "o", check=0)


def test_bad_flags_exit_with_validation_code(tmp_path):
    run("simulate", "--config", SMOKE, check=1)
    run("nonsense", check=1)


def test_output_dir_refusal_and_force(data):
    p = run("simulate", "--config", SMOKE, "--out", data, check=1)
    assert "--force" in p.stderr
    run("simulate", "--config", SMOKE, "--out", data, "--force", check=0)


def test_verify_truth_against_itself(data, tmp_path):
    out = tmp_path / "verify"
    run("verify", "--config", SMOKE, "--forecast", data, "--truth", data, "--max-leads", 6,
        "--out", out, check=0)
    rows = read_csv(out / "metrics_data.csv")
    rmse = [r for r in rows if r["metric"] == "RMSE"]
    acc = [r for r in rows if r["metric"] == "ACC"]
    assert len(rmse) == 9 * 6 and len(acc) == 9 * 6
    assert all(float(r["value"]) == 0.0 for r in rmse)
    assert all(r["value"] == "nan" or abs(float(r["value"]) - 1.0) < 1e-9 for r in acc)
    assert (out / "skill_data.csv").exists()


def test_forecast_and_verify(pretrained, data, tmp_path):
    fc = tmp_path / "fc"
    p = run("forecast", "--checkpoint", pretrained / "final" / "model", "--data", data, "--init-time", 130,
            "--steps", 8, "--out", fc, check=0)
    assert "8 model evaluations" in p.stdout
    states = [x for x in fc.iterdir() if x.name != "manifest.txt"]
    assert len(states) == 8
    manifest = (fc / "manifest.txt").read_text()
    assert "kind = forecast" in manifest
    out = tmp_path / "verify"
    run("verify", "--config", SMOKE, "--forecast", fc, "--truth", data, "--out", out, check=0)
    rows = read_csv(out / "metrics_fc.csv")
    assert len(rows) == 2 * 9 * 8


def test_forecast_past_the_trajectory_end_is_rejected(pretrained, data, tmp_path):
    p = run("forecast", "--checkpoint", pretrained / "final" / "model", "--data", data, "--init-time", 100000,
            "--out", tmp_path / "fc")
    assert p.returncode != 0


def test_tampered_checkpoint_is_an_integrity_error(pretrained, data, tmp_path):
    ckpt = tmp_path / "ckpt"
    subprocess.run(["cp", "-r", str(pretrained / "final" / "model"), str(ckpt)], check=True)
    params = ckpt / "params.bin"
    raw = bytearray(params.read_bytes())
    raw[-1] ^= 0xFF
    params.write_bytes(bytes(raw))
    p = run("forecast", "--checkpoint", ckpt, "--data", data, "--init-time", 130, "--out",
            tmp_path / "fc", check=2)
    assert "integrity" in p.stderr


def test_training_writes_one_row_per_step(pretrained):
    lines = (pretrained / "loss_history.tsv").read_text().splitlines()
    assert len(lines) == 1 + 12


def test_resume_matches_uninterrupted(pretrained, data, tmp_path):
    out = tmp_path / "pre"
    p = run("train", "--config", SMOKE, "--data", data, "--out", out, "--stop-after", 7, check=0)
    assert "--resume" in p.stdout
    run("train", "--config", SMOKE, "--data", data, "--out", out, "--resume", check=0)
    assert (out / "loss_history.tsv").read_bytes() == (pretrained / "loss_history.tsv").read_bytes()
    assert (out / "final" / "model" / "params.bin").read_bytes() == \
        (pretrained / "final" / "model" / "params.bin").read_bytes()


def test_finetune_from_checkpoint(pretrained, data, tmp_path):
    out = tmp_path / "fine"
    run("finetune", "--config", SMOKE, "--data", data, "--init", pretrained / "final" / "model", "--out", out,
        check=0)
    lines = (out / "loss_history.tsv").read_text().splitlines()
    assert len(lines) == 1 + 12
    assert "init_checkpoint_hash" in (out / "manifest.txt").read_text()
