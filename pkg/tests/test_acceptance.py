"""Acceptance suite: ten end-to-end criteria, each printing one PASS/FAIL
line. Run with `pytest -s tests/test_acceptance.py` to see the lines live."""

import json
import math
import time

import numpy as np
import pytest

from featselect.core import RngStream
from featselect.estimator import SolverConfig, lasso
from featselect.geometry import (
    distance,
    effdim_mc,
    identity_image,
    l1_ball,
    l2_ball,
    mean_width_mc,
    polytope,
    project,
)
from featselect.harness import ExperimentConfig, cli_main, run_experiment
from featselect.loss import MONTE_CARLO, model_params, square_loss
from featselect.model import FactorModel, Nonlinearity, sample
from featselect.msdata import (
    MsModelSpec,
    build_factor_model,
    build_raw_dictionaries,
    empirical_standardize,
    standardize_dictionaries,
)
from featselect.representation import (
    bitflip_probability,
    linear_mismatch_std,
    noise_parameter,
    optimal_representation,
    rescaled_outputs,
)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _report(n: int, ok: bool, desc: str) -> None:
    print(f"\ncriterion {n:02d} {'PASS' if ok else 'FAIL'} - {desc}", flush=True)
    assert ok, f"criterion {n}: {desc}"


def _well_separated_ms(d: int, p: int, intensity=1.0, baseline=0.0, width_frac=0.18):
    """p peaks spread evenly over d channels, several widths apart."""
    spacing = d / p
    return {
        "d": d,
        "peaks": [
            {
                "intensity": intensity,
                "center": spacing / 2 + spacing * k,
                "width": width_frac * spacing,
            }
            for k in range(p)
        ],
        "baseline": baseline,
        "z_star_support": [3, 9, 15],
        "z_star_values": [1.0, -1.0, 0.5],
        "R": math.sqrt(3),
    }


def _scalar_noise_model(sigma_star: float, f: Nonlinearity) -> FactorModel:
    """d = p = q = 1: x = s + sigma_star * n, so beta* = 1 gives exactly
    sigma_star^2 of representation noise."""
    return FactorModel(
        A=np.array([[1.0]]),
        B=np.array([[sigma_star]]),
        sigma=np.eye(1),
        z_star=np.array([1.0]),
        f=f,
    )


def test_criterion_01_rate_experiment():
    t0 = time.time()
    cfg = ExperimentConfig.from_json_dict({
        "experiment": "rate",
        "model": {"ms_spec": _well_separated_ms(256, 20), "nonlinearity": {"kind": "sign"}},
        "m_grid": [100, 400, 1600, 6400],
        "trials": 50,
        "loss": "square",
        "constraint": {"kind": "l1_ball", "radius": math.sqrt(3)},
        "master_seed": 7,
        "solver": {"grad_tol": 1e-4, "max_iters": 3000},
    })
    res = run_experiment(cfg, threads=1)
    means = [e["trimmed_mean"] for e in res.summary["per_m"]]
    elapsed = time.time() - t0
    ok = (
        res.summary["lambda_star"] == pytest.approx(SQRT_2_OVER_PI, abs=1e-9)
        and all(b < a for a, b in zip(means, means[1:]))
        and res.summary["loglog_slope"] <= -0.2
        and means[-1] <= 0.5 * means[0]
        and elapsed < 300
    )
    _report(
        1, ok,
        f"rate: trimmed means {['%.4f' % m for m in means]}, "
        f"slope {res.summary['loglog_slope']:.3f}, {elapsed:.0f}s",
    )


def test_criterion_02_model_parameters():
    t0 = time.time()
    loss = square_loss()
    checks = []
    mc = model_params(loss, Nonlinearity.sign(), method=MONTE_CARLO,
                      n_nodes_or_draws=10**6, rng=RngStream(2, 0))
    checks.append(abs(mc.mu - SQRT_2_OVER_PI) <= 3 * mc.stderr)
    for i, p in enumerate([0.0, 0.25, 0.5, 0.75, 1.0]):
        mc = model_params(loss, Nonlinearity.bit_flip(p), method=MONTE_CARLO,
                          n_nodes_or_draws=10**6, rng=RngStream(2, i + 1))
        mu_cf = (2 * p - 1) * SQRT_2_OVER_PI
        rho_sq_cf = 1.0 - (2.0 / math.pi) * (1 - 2 * p) ** 2
        checks.append(abs(mc.mu - mu_cf) <= 3 * mc.stderr)
        checks.append(abs(mc.rho_sq - rho_sq_cf) <= 3 * mc.stderr_rho_sq)
    elapsed = time.time() - t0
    ok = all(checks) and elapsed < 30
    _report(2, ok, f"model parameters: {sum(checks)}/{len(checks)} within 3 SE, {elapsed:.1f}s")


def test_criterion_03_noise_parameter_closed_forms():
    checks = []
    details = []
    # flip fraction vs p_star at m = 1e5
    m = 10**5
    for i, sig in enumerate([0.1, 0.5, 1.0]):
        model = _scalar_noise_model(sig, Nonlinearity.sign())
        ss = sample(model, m, RngStream(30, i))
        rep = optimal_representation(
            model.A.T, model.B.T, model.z_star, l1_ball(5.0, 1), mu=SQRT_2_OVER_PI
        )
        y_dd = rescaled_outputs(ss, rep.beta_star, model.f, model)
        flip = float(np.mean(ss.y != y_dd))
        p_star = bitflip_probability(sig)
        se = math.sqrt(p_star * (1 - p_star) / m)
        checks.append(abs(flip - p_star) <= 3 * se)
        details.append(f"flip(s={sig})={flip:.4f} vs {p_star:.4f}")
    # E[eps^2] for the linear rule
    for i, sig in enumerate([0.5, math.sqrt(3.0)]):
        model = _scalar_noise_model(sig, Nonlinearity.identity())
        ss = sample(model, m, RngStream(31, i))
        rep = optimal_representation(
            model.A.T, model.B.T, model.z_star, l1_ball(5.0, 1), mu=1.0
        )
        y_dd = rescaled_outputs(ss, rep.beta_star, model.f, model)
        sq = (ss.y - y_dd) ** 2
        target = 2.0 - 2.0 / math.sqrt(1.0 + sig**2)
        se = float(np.std(sq, ddof=1) / math.sqrt(m))
        checks.append(abs(float(np.mean(sq)) - target) <= 3 * se)
    # concentration over 200 trials at m = 1000
    model_b = _scalar_noise_model(1.0, Nonlinearity.sign())
    model_l = _scalar_noise_model(math.sqrt(3.0), Nonlinearity.identity())
    thr_b = 3.0 * math.sqrt(bitflip_probability(1.0))   # = 1.5
    thr_l = 2.0 * linear_mismatch_std(math.sqrt(3.0))   # = 2
    hits_b = hits_l = 0
    for t in range(200):
        ssb = sample(model_b, 1000, RngStream(32, t))
        ydd = rescaled_outputs(ssb, np.array([1.0]), model_b.f, model_b)
        hits_b += noise_parameter(ssb.y, ydd) <= thr_b
        ssl = sample(model_l, 1000, RngStream(33, t))
        ydd = rescaled_outputs(ssl, np.array([1.0]), model_l.f, model_l)
        hits_l += noise_parameter(ssl.y, ydd) <= thr_l
    checks.append(hits_b >= 190)
    checks.append(hits_l >= 190)
    ok = all(checks)
    _report(
        3, ok,
        f"noise parameter: {'; '.join(details)}; concentration "
        f"binary {hits_b}/200, linear {hits_l}/200",
    )


def test_criterion_04_optimal_representation():
    rep = optimal_representation(
        np.array([[1.0, 1.0]]), np.diag([1.0, 2.0]), np.array([1.0]),
        l1_ball(10.0, 2), mu=SQRT_2_OVER_PI,
    )
    ok = (
        np.allclose(rep.beta_star, [0.8, 0.2], atol=1e-3)
        and abs(rep.sigma_star_sq - 0.8) <= 1e-3
    )
    # random perturbation optimality on 20 instances
    gen = RngStream(44, 0).generator()
    for _ in range(20):
        p = int(gen.integers(1, 6))
        d = int(gen.integers(p, 11))
        D = gen.standard_normal((p, d))
        N = gen.standard_normal((d, d))
        z = gen.standard_normal(p)
        scale = float(np.linalg.norm(np.linalg.pinv(D) @ z)) + 1.0
        k = l2_ball(float(gen.uniform(2.0, 6.0)) * scale, d)
        mu = float(gen.uniform(0.2, 1.0))
        r = optimal_representation(D, N, z, k, mu)
        if r.feasibility_residual > 1e-4 * np.linalg.norm(z):
            ok = False
            break
        null = np.linalg.svd(D)[2][p:]
        obj = float(np.sum((N @ r.beta_star) ** 2))
        for _ in range(10):
            delta = null.T @ gen.standard_normal(null.shape[0]) * 0.1
            cand = r.beta_star + delta
            if distance(k.scaled(1.0 / mu), cand) > 1e-9:
                continue
            if float(np.sum((N @ cand) ** 2)) < obj - 1e-6:
                ok = False
    _report(4, ok, f"optimal representation: 2-var oracle sigma*^2={rep.sigma_star_sq:.5f}, "
                   "20 random instances optimal among feasible perturbations")


def test_criterion_05_estimator_correctness():
    rels = []
    ok = True
    for seed in range(10):
        gen = RngStream(50 + seed, 0).generator()
        X = gen.standard_normal((500, 5))
        y = X @ gen.standard_normal(5) + 0.1 * gen.standard_normal(500)
        oracle = np.linalg.lstsq(X, y, rcond=None)[0]
        res = lasso(X, y, R=1e6, cfg=SolverConfig(grad_tol=1e-9, max_iters=20000))
        rels.append(float(np.linalg.norm(res.beta_hat - oracle) / np.linalg.norm(oracle)))
        trace = res.objective_trace
        ok = ok and bool(np.all(trace[1:] <= trace[:-1] + 1e-12))
        ok = ok and distance(l1_ball(1e6, 5), res.beta_hat) <= 1e-9
    ok = ok and max(rels) <= 1e-3
    _report(5, ok, f"estimator: max relative gap to normal equations {max(rels):.2e}, "
                   "traces monotone, iterates feasible")


def test_criterion_06_projection_and_support():
    gen = RngStream(60, 0).generator()
    ok = True
    max_gap = 0.0
    for _ in range(100):
        d = int(gen.integers(1, 21))
        v = gen.standard_normal(d) * 3.0
        radius = float(gen.uniform(0.1, 3.0))
        got = project(l1_ball(radius, d), v)
        # 1-d oracle: bisection on the soft threshold theta
        if np.abs(v).sum() <= radius:
            want = v
        else:
            lo, hi = 0.0, float(np.abs(v).max())
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if np.maximum(np.abs(v) - mid, 0.0).sum() > radius:
                    lo = mid
                else:
                    hi = mid
            theta = 0.5 * (lo + hi)
            want = np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)
        max_gap = max(max_gap, float(np.max(np.abs(got - want))))
    ok = ok and max_gap <= 1e-6
    # nonexpansiveness on 100 random pairs
    for _ in range(100):
        d = int(gen.integers(1, 21))
        k = l1_ball(float(gen.uniform(0.1, 3.0)), d)
        u, v = gen.standard_normal(d) * 3, gen.standard_normal(d) * 3
        if np.linalg.norm(project(k, u) - project(k, v)) > np.linalg.norm(u - v) + 1e-9:
            ok = False
    _report(6, ok, f"projection: max oracle gap {max_gap:.2e}, nonexpansive on 100 pairs")


def test_criterion_07_mean_width():
    width, se = mean_width_mc(identity_image(l2_ball(1.0, 2)), 10**6, RngStream(70, 0))
    target = math.sqrt(math.pi / 2)
    ok = abs(width - target) <= 3 * se
    # convex-hull invariance for a 10-point set
    gen = RngStream(71, 0).generator()
    pts = gen.standard_normal((10, 3))
    pts -= pts.mean(axis=0)
    combos = 0.5 * (pts[:5] + pts[5:])
    w1, se1 = mean_width_mc(identity_image(polytope(pts)), 10**6, RngStream(72, 0))
    w2, se2 = mean_width_mc(
        identity_image(polytope(np.vstack([pts, combos]))), 10**6, RngStream(72, 1)
    )
    ok = ok and abs(w1 - w2) <= 3 * math.hypot(se1, se2)
    # effdim of sqrt(3) B_1 in R^100
    eff, _ = effdim_mc(identity_image(l1_ball(math.sqrt(3), 100)), 10**6, RngStream(73, 0))
    ok = ok and eff <= 2 * 3 * math.log(200)
    _report(7, ok, f"mean width: disk {width:.4f} vs {target:.4f} (se {se:.1e}), "
                   f"hull gap {abs(w1 - w2):.1e}, effdim {eff:.2f} <= {2*3*math.log(200):.2f}")


def test_criterion_08_standardization():
    spec = MsModelSpec.from_json_dict(_well_separated_ms(256, 20, baseline=0.15))
    D_raw, N_raw = build_raw_dictionaries(spec)
    D, N, report = standardize_dictionaries(D_raw, N_raw)
    live = ~report.floor_flags
    norms_sq = np.sum(D**2, axis=0) + np.sum(N**2, axis=0)
    ok = bool(np.all(np.abs(norms_sq[live] - 1.0) <= 1e-10))
    # empirical standardization exactness
    gen = RngStream(80, 0).generator()
    X = gen.standard_normal((1000, 8)) * gen.uniform(0.5, 3.0, 8) + gen.uniform(-2, 2, 8)
    Xs, _, _ = empirical_standardize(X)
    ok = ok and bool(np.all(np.abs(Xs.mean(axis=0)) <= 1e-10))
    ok = ok and bool(np.all(np.abs(Xs.std(axis=0) - 1.0) <= 1e-10))
    # empirical vs exact stds at m = 1e5 (standardized model: exact stds are 1)
    model = build_factor_model(spec, Nonlinearity.sign())
    ss = sample(model, 10**5, RngStream(81, 0))
    _, _, stds = empirical_standardize(ss.X)
    gap = float(np.max(np.abs(stds[live] - 1.0)))
    ok = ok and gap <= 0.02
    _report(8, ok, f"standardization: unit extended columns, exact empirical stats, "
                   f"max std gap {gap:.4f} at m=1e5")


def test_criterion_09_ms_recovery():
    t0 = time.time()
    ms = _well_separated_ms(1024, 20, intensity=3.0, baseline=0.1)
    ms["z_star_support"] = [4, 10, 16]
    ms["z_star_values"] = [1.0, -0.8, 0.6]
    ms["R"] = 3.0
    base = {
        "experiment": "ms_recovery",
        "m_grid": [2000],
        "trials": 50,
        "loss": "square",
        "master_seed": 9,
        "solver": {"grad_tol": 1e-3, "max_iters": 2000},
    }
    hi = run_experiment(ExperimentConfig.from_json_dict(
        {**base, "model": {"ms_spec": ms, "nonlinearity": {"kind": "sign"}}}
    ), threads=1)
    loc_hi = hi.summary["per_m"][0]["localization_mean"]
    control = run_experiment(ExperimentConfig.from_json_dict(
        {**base, "model": {"ms_spec": ms, "nonlinearity": {"kind": "bit_flip", "keep_prob": 0.5}}}
    ), threads=1)
    loc_0 = control.summary["per_m"][0]["localization_mean"]
    chance = 3 / 20
    elapsed = time.time() - t0
    ok = loc_hi >= 0.9 and loc_0 <= chance + 0.1 and elapsed < 600
    _report(9, ok, f"ms recovery: localization {loc_hi:.3f} (>= 0.9), "
                   f"mu=0 control {loc_0:.3f} (<= {chance + 0.1:.2f}), {elapsed:.0f}s")


def test_criterion_10_determinism(tmp_path):
    cfg = {
        "experiment": "rate",
        "model": {"ms_spec": _well_separated_ms(64, 10), "nonlinearity": {"kind": "sign"}},
        "m_grid": [100, 400],
        "trials": 5,
        "loss": "square",
        "constraint": {"kind": "l1_ball", "radius": math.sqrt(3)},
        "master_seed": 123,
        "solver": {"grad_tol": 1e-4, "max_iters": 2000},
    }
    cfg["model"]["ms_spec"]["z_star_support"] = [1, 4, 7]
    cfg_path = tmp_path / "rate.json"
    cfg_path.write_text(json.dumps(cfg))
    blobs = []
    for name, threads in (("a.csv", "1"), ("b.csv", "4")):
        out = tmp_path / name
        rc = cli_main([
            "experiment", "rate", "--config", str(cfg_path),
            "--seed", "123", "--out", str(out), "--threads", threads,
        ])
        assert rc == 0
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1]
    _report(10, ok, "determinism: same seed (serial and threaded) -> byte-identical CSV")
