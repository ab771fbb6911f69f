import math
from pathlib import Path

import numpy as np
import pytest

import mmcast

SMOKE = (Path(__file__).resolve().parents[2] / "configs" / "smoke.cfg").read_text()


def test_latitude_weights_hand_value():
    assert mmcast.latitude_weights([60.0, 0.0, -60.0]) == pytest.approx([0.75, 1.5, 0.75], abs=1e-12)
    w = mmcast.latitude_weights(mmcast.regular_latitudes(32))
    assert np.mean(w) == pytest.approx(1.0, abs=1e-12)


def test_simulate_shapes_and_determinism():
    a = mmcast.simulate(SMOKE, 12)
    b = mmcast.simulate(SMOKE, 12)
    assert a["states"].shape == (12, 9, 8, 16)
    assert a["states"].dtype == np.float32
    assert len(a["channels"]) == 9
    assert np.array_equal(a["states"], b["states"])
    assert list(a["time_index"]) == list(range(12))


def test_config_errors_are_value_errors():
    with pytest.raises(mmcast.ValidationError, match="seed"):
        mmcast.simulate("sim.n_steps = 3\n")
    with pytest.raises(ValueError, match="bogus"):
        mmcast.simulate("seed = 1\nbogus = 2\n")
    keys = {k for k, *_ in mmcast.config_keys()}
    assert {"seed", "buffer.mix_ratio", "model.embed_dim"} <= keys


def test_metrics_identities():
    rng = np.random.default_rng(0)
    truth = rng.standard_normal((3, 4, 8)).astype(np.float32)
    clim = rng.standard_normal((3, 4, 8)).astype(np.float32)
    w = mmcast.latitude_weights(mmcast.regular_latitudes(4))
    assert mmcast.field_rmse(truth, truth, w) == [0.0, 0.0, 0.0]
    assert mmcast.field_acc(truth, truth, clim, w) == pytest.approx([1.0] * 3, abs=1e-6)
    assert mmcast.field_acc(2 * clim - truth, truth, clim, w) == pytest.approx([-1.0] * 3, abs=1e-6)
    assert mmcast.field_acc(clim, truth, clim, w) == [None] * 3


def test_skillful_lead_time():
    s = mmcast.skillful_lead_time([0.9, 0.7, 0.5], 0.6)
    assert s["lead_steps"] == 2
    assert s["days"] == 0.5
    assert s["fractional_days"] == pytest.approx(0.625)


def test_nll_values_and_gradients():
    mu = np.zeros((1, 1, 1))
    s = np.zeros((1, 1, 1))
    x = np.ones((1, 1, 1))
    assert mmcast.uncertainty_nll(mu, s, x) == pytest.approx(0.5)
    assert mmcast.uncertainty_nll(mu, s, x, include_constant=True) == pytest.approx(
        0.5 + 0.5 * math.log(2 * math.pi))
    rng = np.random.default_rng(1)
    mu, s, x = (rng.standard_normal((2, 3, 4)) for _ in range(3))
    d_mu, d_s = mmcast.nll_gradients(mu, s, x)
    n = mu.size
    assert d_mu == pytest.approx((mu - x) * np.exp(-s) / n)
    assert d_s == pytest.approx(0.5 * (1 - (x - mu) ** 2 * np.exp(-s)) / n)
    assert mmcast.uncertainty_nll(mu, np.zeros_like(s), x) == pytest.approx(
        0.5 * np.mean((x - mu) ** 2), rel=1e-12)


def test_seed_derivation_is_stable():
    assert mmcast.derive_seed(1, "sim") == mmcast.derive_seed(1, "sim")
    assert mmcast.derive_seed(1, "sim") != mmcast.derive_seed(1, "data")


def test_missing_checkpoint_raises(tmp_path):
    with pytest.raises(Exception):
        mmcast.Forecaster(tmp_path / "nope")


@pytest.mark.skipif("MMCAST_BIN" not in __import__("os").environ, reason="needs the mmcast tool")
def test_forecaster_matches_the_tool(tmp_path):
    import os
    import subprocess

    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMOKE)

    def tool(*args):
        subprocess.run([os.environ["MMCAST_BIN"], *map(str, args)], check=True, capture_output=True)

    tool("simulate", "--config", cfg, "--out", tmp_path / "data")
    tool("train", "--config", cfg, "--data", tmp_path / "data", "--out", tmp_path / "run")
    tool("forecast", "--checkpoint", tmp_path / "run" / "final" / "model", "--data", tmp_path / "data",
         "--init-time", 130, "--steps", 5, "--out", tmp_path / "fc")
    archive = mmcast.read_archive(tmp_path / "fc")
    assert archive["kind"] == "forecast"
    assert archive["init_time_index"] == 130
    truth = mmcast.read_archive(tmp_path / "data")
    f = mmcast.Forecaster(tmp_path / "run" / "final" / "model")
    out = f.rollout(truth["states"][130], 5, init_time=130)
    assert out.shape == (5, 9, 8, 16)
    assert np.array_equal(out, archive["states"])
    assert f.forward_calls == 5
    assert len(f.content_hash) == 64
