import json
import math
import os

import numpy as np
import pytest

from featselect.harness import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    cli_main,
    loglog_slope,
    run_experiment,
    trial_stream,
    trimmed_mean,
)

MS_SPEC = {
    "d": 64,
    "peaks": [{"intensity": 1.0, "center": 4 + 6 * k, "width": 1.5} for k in range(10)],
    "baseline": 0.0,
    "z_star_support": [1, 4, 7],
    "z_star_values": [1.0, -1.0, 0.5],
    "R": math.sqrt(3),
}

RATE_CFG = {
    "experiment": "rate",
    "model": {"ms_spec": MS_SPEC, "nonlinearity": {"kind": "sign"}},
    "m_grid": [100, 400],
    "trials": 4,
    "loss": "square",
    "constraint": {"kind": "l1_ball", "radius": math.sqrt(3)},
    "master_seed": 7,
    "solver": {"grad_tol": 1e-4, "max_iters": 2000},
}


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="experiment"):
        ExperimentConfig.from_json_dict({})
    with pytest.raises(ConfigError, match="m_grid"):
        ExperimentConfig.from_json_dict({"experiment": "rate", "m_grid": [400, 100]})
    with pytest.raises(ConfigError, match="trials"):
        ExperimentConfig.from_json_dict({"experiment": "rate", "trials": 0})
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_json_dict({"experiment": "rate", "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json_dict({"experiment": "nope"})


def test_trimmed_mean_drops_tails():
    vals = list(range(100))  # trim 5% each side -> mean of 5..94
    assert trimmed_mean(vals) == pytest.approx(np.mean(np.arange(5, 95)))
    assert trimmed_mean([1.0, 2.0, 3.0]) == 2.0  # too few to trim


def test_loglog_slope_exact_powerlaw():
    ms = [100, 400, 1600]
    errors = [10.0 * m**-0.25 for m in ms]
    assert loglog_slope(ms, errors) == pytest.approx(-0.25, abs=1e-12)


def test_trial_streams_distinct():
    seen = set()
    for mi in range(3):
        for t in range(3):
            s = trial_stream(9, mi, t)
            seen.add((s.master_seed, s.stream_id))
    assert len(seen) == 9


def test_rate_summary_recomputable_from_rows():
    cfg = ExperimentConfig.from_json_dict(RATE_CFG)
    res = run_experiment(cfg)
    for entry in res.summary["per_m"]:
        good = [
            r.error for r in res.rows
            if r.m == entry["m"] and r.converged and math.isfinite(r.error)
        ]
        assert entry["trimmed_mean"] == trimmed_mean(good)
        assert entry["n"] == sum(r.m == entry["m"] for r in res.rows)


def test_rate_rows_one_per_m_trial():
    cfg = ExperimentConfig.from_json_dict(RATE_CFG)
    res = run_experiment(cfg)
    keys = [(r.m, r.trial) for r in res.rows]
    assert keys == [(m, t) for m in cfg.m_grid for t in range(cfg.trials)]


def test_threaded_run_matches_serial():
    cfg = ExperimentConfig.from_json_dict(RATE_CFG)
    serial = run_experiment(cfg, threads=1)
    threaded = run_experiment(cfg, threads=4)
    assert serial.to_csv_text(7, 4) == threaded.to_csv_text(7, 4)
    assert serial.summary == threaded.summary


def test_csv_schema():
    cfg = ExperimentConfig.from_json_dict(RATE_CFG)
    res = run_experiment(cfg)
    text = res.to_csv_text(cfg.master_seed, cfg.trials)
    lines = text.splitlines()
    assert lines[0].startswith("#")
    assert lines[1] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2 + len(res.rows)
    assert "runtime" not in lines[1]


def test_noise_bounds_run():
    cfg = ExperimentConfig.from_json_dict({
        "experiment": "noise_bounds",
        "model": {"factor_model": {
            "A": [[1.0]], "B": [[1.0]], "z_star": [1.0],
            "nonlinearity": {"kind": "sign"},
        }},
        "m_grid": [500],
        "trials": 10,
        "constraint": {"kind": "l1_ball", "radius": 5.0},
        "master_seed": 3,
    })
    res = run_experiment(cfg)
    assert res.summary["epsilon_star"] == pytest.approx(1.5)  # 3*sqrt(1/4)
    assert res.summary["per_m"][0]["success_rate"] == 1.0


def test_noise_bounds_rejects_q_zero():
    cfg = ExperimentConfig.from_json_dict({
        "experiment": "noise_bounds",
        "model": {"ms_spec": MS_SPEC, "nonlinearity": {"kind": "sign"}},
        "constraint": {"kind": "l1_ball", "radius": 2.0},
    })
    with pytest.raises(ConfigError, match="noise atoms"):
        run_experiment(cfg)


def test_meanwidth_report_requires_sets():
    cfg = ExperimentConfig.from_json_dict({"experiment": "meanwidth_report"})
    with pytest.raises(ConfigError, match="sets"):
        run_experiment(cfg)


def test_cli_experiment_deterministic(tmp_path):
    cfg_path = tmp_path / "rate.json"
    cfg_path.write_text(json.dumps(RATE_CFG))
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        rc = cli_main([
            "experiment", "rate", "--config", str(cfg_path),
            "--seed", "7", "--out", str(out), "--threads", "2",
        ])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header = outs[0].decode().splitlines()[1]
    assert header.startswith("experiment,m,trial,error")


def test_cli_missing_config_exits_1(tmp_path):
    rc = cli_main([
        "experiment", "rate", "--config", str(tmp_path / "absent.json"),
        "--out", str(tmp_path / "x.csv"),
    ])
    assert rc == 1


def test_cli_malformed_config_exits_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli_main(["experiment", "rate", "--config", str(bad), "--out", str(tmp_path / "o.csv")])
    assert rc == 1


def test_cli_numerical_failure_exits_2(tmp_path):
    # a constraint set far too small for any representation of z_star
    cfg = dict(RATE_CFG, constraint={"kind": "l1_ball", "radius": 1e-8})
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = cli_main([
        "experiment", "rate", "--config", str(cfg_path),
        "--out", str(tmp_path / "o.csv"),
    ])
    assert rc == 2


def test_cli_trials_and_seed_override(tmp_path):
    cfg_path = tmp_path / "rate.json"
    cfg_path.write_text(json.dumps(RATE_CFG))
    out = tmp_path / "o.csv"
    rc = cli_main([
        "experiment", "rate", "--config", str(cfg_path),
        "--seed", "99", "--trials", "2", "--out", str(out),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert "seed=99" in lines[0] and "trials=2" in lines[0]
    assert len(lines) == 2 + 2 * 2  # comment + header + 2 m-values x 2 trials


def test_cli_gen_and_fit_roundtrip(tmp_path):
    model_path = tmp_path / "model.json"
    model_path.write_text(json.dumps({"ms_spec": MS_SPEC, "nonlinearity": {"kind": "sign"}}))
    data_path = tmp_path / "data.csv"
    rc = cli_main([
        "gen", "--config", str(model_path), "--seed", "5", "-m", "300",
        "--out", str(data_path),
    ])
    assert rc == 0
    lines = data_path.read_text().splitlines()
    assert lines[1].split(",")[0] == "y"
    assert len(lines) == 2 + 300
    beta_path = tmp_path / "beta.csv"
    rc = cli_main([
        "fit", "--data", str(data_path), "--radius", "1.74",
        "--out", str(beta_path),
    ])
    assert rc == 0
    beta = np.loadtxt(beta_path, skiprows=1)
    assert beta.shape == (64,)
    assert np.abs(beta).sum() <= 1.74 + 1e-9


def test_cli_fit_rejects_bad_data(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1\n1.0\n")  # ragged row
    assert cli_main(["fit", "--data", str(bad)]) == 1


def test_cli_plot_renders_figures(tmp_path):
    cfg_path = tmp_path / "rate.json"
    cfg_path.write_text(json.dumps(RATE_CFG))
    out = tmp_path / "r.csv"
    rc = cli_main([
        "experiment", "rate", "--config", str(cfg_path),
        "--out", str(out), "--plot", "--summary", str(tmp_path / "s.json"),
    ])
    assert rc == 0
    pngs = sorted(p.name for p in tmp_path.glob("*.png"))
    assert pngs == ["r_epsilon_hist.png", "r_error_vs_m.png"]
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["experiment"] == "rate"


def test_trial_permutation_leaves_summary_unchanged():
    cfg = ExperimentConfig.from_json_dict(RATE_CFG)
    res = run_experiment(cfg)
    from featselect.harness import _per_m_summary

    perm = list(res.rows)
    rng = np.random.default_rng(0)
    rng.shuffle(perm)
    assert _per_m_summary(perm) == res.summary["per_m"]
