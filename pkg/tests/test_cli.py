import json

import numpy as np
import pytest
from PIL import Image as PILImage

from lcmflow import cli
from lcmflow.flowfield import FlowField
from lcmflow.imagecore import Image, load_image, save_image
from lcmflow.io_formats import read_flo, write_flo
from lcmflow.metrics import evaluate
from lcmflow.synth import noise_texture

FAST = ["--outer-iters", "2", "--inner-iters", "2"]


@pytest.fixture
def pair(tmp_path):
    a = noise_texture(40, 48, 5)
    save_image(Image(a), tmp_path / "a.png", bits=16)
    save_image(Image(np.roll(a, 2, axis=1)), tmp_path / "b.png", bits=16)
    return tmp_path / "a.png", tmp_path / "b.png"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_flow_identical_frames(pair, tmp_path):
    a, _ = pair
    assert run("flow", a, a, "--out", tmp_path / "o", *FAST) == 0
    w = read_flo(tmp_path / "o" / "flow.flo")
    assert np.all(w.u == 0) and np.all(w.v == 0)
    assert (tmp_path / "o" / "flow.png").is_file()


def test_flow_log_and_replay(pair, tmp_path):
    a, b = pair
    out1 = tmp_path / "r1"
    assert run("flow", a, b, "--out", out1, "--xi", "0.4", "--mesh-density", "3", *FAST) == 0
    log = json.loads((out1 / "run.log").read_text())
    assert log["params"]["xi"] == 0.4 and log["params"]["mesh_density"] == 3
    assert set(log["params"]) >= {"epsilon", "theta", "lam", "pyramid_factor", "cg_iters"}
    assert log["run"]["seed"] == 42
    out2 = tmp_path / "r2"
    assert run("flow", a, b, "--out", out2, "--config", out1 / "run.cfg") == 0
    assert (out1 / "flow.flo").read_bytes() == (out2 / "flow.flo").read_bytes()


def test_flags_override_config(pair, tmp_path):
    a, b = pair
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# settings\nxi = 0.3\nlambda=0.5\nouter-iters = 1\ninner_iters = 1\n")
    assert run("flow", a, b, "--out", tmp_path / "o", "--config", cfg, "--xi", "0.0") == 0
    p = json.loads((tmp_path / "o" / "run.log").read_text())["params"]
    assert (p["xi"], p["lam"], p["outer_iters"], p["inner_iters"]) == (0.0, 0.5, 1, 1)


def test_bad_config(pair, tmp_path, capsys):
    a, b = pair
    cfg = tmp_path / "c.cfg"
    cfg.write_text("bogus = 1\n")
    assert run("flow", a, b, "--config", cfg, "--out", tmp_path) == 2
    assert "bogus" in capsys.readouterr().err


def test_missing_file_exit_2(pair, tmp_path, capsys):
    a, _ = pair
    missing = tmp_path / "nope.png"
    assert run("flow", a, missing, "--out", tmp_path) == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_parameter_exit_2(pair, tmp_path):
    a, b = pair
    assert run("flow", a, b, "--out", tmp_path, "--epsilon", "-1") == 2


def test_shifted_pair_uniform_hue(tmp_path):
    # a vertical shift keeps the hue away from the wheel seam at +u
    a = noise_texture(40, 48, 5)
    save_image(Image(a), tmp_path / "a.png", bits=16)
    save_image(Image(np.roll(a, 2, axis=0)), tmp_path / "b.png", bits=16)
    assert run("flow", tmp_path / "a.png", tmp_path / "b.png", "--out", tmp_path / "o", "--xi", "0") == 0
    w = read_flo(tmp_path / "o" / "flow.flo")
    inner = (slice(8, -8), slice(8, -8))
    assert np.allclose(w.u[inner], 0.0, atol=0.1) and np.allclose(w.v[inner], 2.0, atol=0.1)
    rgb = np.asarray(PILImage.open(tmp_path / "o" / "flow.png"), float)
    assert np.ptp(rgb[inner].reshape(-1, 3), axis=0).max() <= 16


def test_evaluate_reports(tmp_path, capsys):
    rng = np.random.default_rng(0)
    w = FlowField(rng.normal(size=(5, 6)).astype(np.float32), rng.normal(size=(5, 6)).astype(np.float32))
    write_flo(w, tmp_path / "w.flo")
    assert run("evaluate", tmp_path / "w.flo", tmp_path / "w.flo", "--format", "json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mean_epe"] == 0 and rep["rms_epe"] == 0
    shifted = FlowField(w.u + 1.0, w.v)
    write_flo(shifted, tmp_path / "s.flo")
    assert run("evaluate", tmp_path / "s.flo", tmp_path / "w.flo", "--format", "json",
               "--out", tmp_path / "rep") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mean_epe"] == pytest.approx(1.0, abs=1e-6)
    direct = evaluate(read_flo(tmp_path / "s.flo"), read_flo(tmp_path / "w.flo"))
    assert rep == json.loads(direct.to_json())
    assert (tmp_path / "rep" / "report.json").is_file()


def test_evaluate_dimension_mismatch(tmp_path):
    write_flo(FlowField.zeros((3, 3)), tmp_path / "a.flo")
    write_flo(FlowField.zeros((3, 4)), tmp_path / "b.flo")
    assert run("evaluate", tmp_path / "a.flo", tmp_path / "b.flo") == 2


def test_degrade_deterministic(pair, tmp_path):
    a, b = pair
    for out in ("d1", "d2"):
        assert run("degrade", a, b, "--kind", "saltpepper", "--seed", "42", "--out", tmp_path / out) == 0
    for name in ("a_saltpepper.png", "b_saltpepper.png"):
        assert (tmp_path / "d1" / name).read_bytes() == (tmp_path / "d2" / name).read_bytes()
    assert run("degrade", a, "--kind", "smudge", "--out", tmp_path) == 2


def test_synth_outputs(tmp_path):
    assert run("synth", "--width", 64, "--height", 64, "--amplitude", 3, "--out", tmp_path / "s") == 0
    w = read_flo(tmp_path / "s" / "flow_001.flo")
    assert abs(np.hypot(w.u, w.v).max() - 3) <= 1e-6
    assert load_image(tmp_path / "s" / "frame_000.png").shape == (64, 64)
    assert run("synth", "--width", 64, "--height", 64, "--amplitude", 16, "--out", tmp_path) == 2


def test_interpolate_t0(pair, tmp_path):
    a, b = pair
    assert run("interpolate", a, b, "--t", "0", "--out", tmp_path / "i", *FAST) == 0
    out = load_image(tmp_path / "i" / "interpolated.png")
    assert np.array_equal(out.data, load_image(a).data)
    assert run("interpolate", a, b, "--t", "2", "--out", tmp_path / "i") == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["flow"])
    assert exc.value.code == 2
