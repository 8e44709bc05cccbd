import json
from pathlib import Path

import numpy as np
import pytest

from deautoconv.cli import config_from_dict, load_config, main, ConfigError
from deautoconv.grid import signal_from_csv
from deautoconv.synth import MeasurementSet

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "grid": {"q_min": 0.0, "q_max": 1.0, "n_points": 24},
    "kernel": {"variant": "constant", "c_re": 1.0},
    "pulse": {"shape": "smooth_single_peak", "widths": [0.15]},
    "noise": {"delta_percent": 0.0, "seed": 3},
    "solver": {"alpha_hat_grid": [0.1, 10.0], "max_iterations": 40, "patience": 5},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_synth_layout(tmp_path):
    cfg = dict(SMALL, noise={"delta_percent": 5.0, "seed": 1})
    assert main(["synth", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "m")]) == 0
    d = tmp_path / "m"
    assert len((d / "a_hat.csv").read_text().splitlines()) == 24 + 1
    assert len((d / "y_delta.csv").read_text().splitlines()) == 47 + 1
    meta = json.loads((d / "meta.json").read_text())
    assert meta["delta_percent"] == 5.0 and meta["seed"] == 1


def test_seed_flag_overrides(tmp_path):
    cfg = write(tmp_path, dict(SMALL, noise={"delta_percent": 5.0, "seed": 1}))
    main(["synth", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "9"])
    assert json.loads((tmp_path / "a" / "meta.json").read_text())["seed"] == 9


def test_noise_free_data_matches_truth(tmp_path):
    main(["synth", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "m")])
    ms = MeasurementSet.load(tmp_path / "m")
    from deautoconv.forward import apply_forward
    y = apply_forward(ms.kernel(), ms.ground_truth, ms.grid)
    assert np.linalg.norm(ms.y_delta.values - y) <= 0.05 * np.linalg.norm(y)


def test_reconstruct_outputs(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["synth", "--config", cfg, "--out", str(tmp_path / "m")])
    rc = main(["reconstruct", str(tmp_path / "m"), "--config", cfg, "--out", str(tmp_path / "r"), "--plot"])
    assert rc == 0
    r = tmp_path / "r"
    header = (r / "reconstruction.csv").read_text().splitlines()[0]
    assert header == "node,re,im,amplitude,phase,group_delay"
    assert len(list(r.glob("trace_*.csv"))) == 2
    s = json.loads((r / "summary.json").read_text())
    assert s["alpha_hat_star"] in (pytest.approx(0.1), pytest.approx(10.0))
    assert {"amp_rmse", "gd_rmse"} <= set(s["scores"])
    assert s["config"]["solver"]["alpha_hat_grid"] == [0.1, 10.0]
    assert all("l_star" in run and "deviation" in run for run in s["runs"])
    assert (r / "plot.csv").read_text().startswith("series,x,y\n")
    rec = signal_from_csv(r / "reconstruction.csv")
    assert len(rec) == 24


def test_reconstruct_exact_data_scores(tmp_path):
    # end-to-end regression on exact data with k = 1; threshold pinned at bring-up
    cfg = dict(SMALL, grid={"n_points": 48}, noise={"delta_percent": 0.01, "seed": 0},
               solver={"alpha_hat_grid": [0.01, 0.1, 1.0], "max_iterations": 200, "patience": 25})
    c = write(tmp_path, cfg)
    main(["synth", "--config", c, "--out", str(tmp_path / "m")])
    main(["reconstruct", str(tmp_path / "m"), "--config", c, "--out", str(tmp_path / "r")])
    s = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert s["scores"]["gd_rmse"] < 0.5
    assert s["scores"]["gd_rmse"] < s["scores"]["initial_gd_rmse"] / 5


def test_single_alpha(tmp_path):
    cfg = dict(SMALL, solver={"alpha_grid": [1e-3], "max_iterations": 10, "patience": 3})
    c = write(tmp_path, cfg)
    main(["synth", "--config", c, "--out", str(tmp_path / "m")])
    main(["reconstruct", str(tmp_path / "m"), "--config", c, "--out", str(tmp_path / "r")])
    s = json.loads((tmp_path / "r" / "summary.json").read_text())
    assert s["alpha_star"] == 1e-3


def test_replay_table1(tmp_path, capsys):
    rc = main(["reconstruct", "--replay", str(ROOT / "configs" / "table1_trace.csv"), "--out", str(tmp_path)])
    assert rc == 0
    assert json.loads((tmp_path / "summary.json").read_text())["l_star"] == 143
    assert "l_star = 143" in capsys.readouterr().out


def test_demo_illposed(tmp_path, capsys):
    cfg = {"kernel": {"variant": "constant"}, "illposed": {"r": 1.0, "n_points": 401}}
    assert main(["demo-illposed", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "d")]) == 0
    rows = (tmp_path / "d" / "illposed.csv").read_text().splitlines()
    assert rows[0] == "beta,perturbation_norm,image_diff_norm,bound"
    img = [float(r.split(",")[2]) for r in rows[1:]]
    assert len(img) == 4 and all(a > b for a, b in zip(img, img[1:]))
    s = json.loads((tmp_path / "d" / "summary.json").read_text())
    res = s["sign_ambiguity"]
    assert res["residual_x"] == pytest.approx(res["residual_minus_x"], rel=1e-13)


def test_demo_single_beta_and_bad_r(tmp_path):
    cfg = {"illposed": {"betas": [0.3], "n_points": 201}}
    main(["demo-illposed", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "d")])
    assert len((tmp_path / "d" / "illposed.csv").read_text().splitlines()) == 2
    cfg = {"illposed": {"r": 0.0}}
    assert main(["demo-illposed", "--config", write(tmp_path, cfg, "bad.json"), "--out", str(tmp_path / "e")]) == 2


def test_check_command(tmp_path, capsys):
    assert main(["check"]) == 0
    assert "FAIL" not in capsys.readouterr().out
    assert main(["check", "--corrupt-kernel"]) == 1
    assert "FAIL forward vs naive loop" in capsys.readouterr().out


def test_check_with_measurement(tmp_path, capsys):
    main(["synth", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "m")])
    assert main(["check", str(tmp_path / "m")]) == 0
    assert "truth reproduces y_delta" in capsys.readouterr().out


def test_config_errors(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"grid": {"n_points": 10,}}')
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "broken.json:1:" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="grid"):
        config_from_dict({"grid": {"n_points": 1}})
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict({"gird": {}})
    with pytest.raises(ConfigError):
        config_from_dict({"solver": {"alpha_grid": [1], "alpha_hat_grid": [1]}})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_missing_measurement(tmp_path):
    assert main(["reconstruct", str(tmp_path / "nothing"), "--out", str(tmp_path / "r")]) == 3


def test_shipped_configs_parse():
    for p in (ROOT / "configs").glob("*.json"):
        load_config(p)


def test_effective_config_round_trips():
    cfg = config_from_dict(SMALL)
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
