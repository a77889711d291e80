"""Experiment orchestration and command-line interface: sample-complexity
rate runs, noise-parameter bound checks, synthetic-spectrum recovery,
mean-width tabulation, and model-parameter verification, all emitted as
deterministic CSV (plus optional JSON summary and figures)."""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import RngStream
from .estimator import NumericalError, SolverConfig, fit, to_signal_domain
from .geometry import (
    ConstraintSet,
    SetImage,
    bound_l1_image,
    bound_polytope,
    bound_slepian,
    effdim_mc,
    l1_ball,
    l2_ball,
    polytope,
)
from .loss import (
    CLOSED_FORM,
    MONTE_CARLO,
    QUADRATURE,
    IncompatibleLossError,
    LossFunction,
    logistic_loss,
    model_params,
    square_loss,
)
from .model import FactorModel, Nonlinearity, extended_dictionary, sample
from .msdata import MsModelSpec, build_factor_model
from .representation import (
    InfeasibleRepresentationError,
    Representation,
    bitflip_probability,
    linear_mismatch_std,
    noise_parameter,
    optimal_representation,
    rescaled_outputs,
    selection_error,
)

EXPERIMENTS = (
    "rate",
    "noise_bounds",
    "ms_recovery",
    "meanwidth_report",
    "model_params_report",
)

# Fixed, versioned result schema. Wall-clock timings are kept on the row
# objects only: the CSV must be byte-identical across re-runs of a seed.
CSV_COLUMNS = (
    "experiment",
    "m",
    "trial",
    "error",
    "epsilon",
    "epsilon_star",
    "sigma_star_sq",
    "lambda_star",
    "bound_value",
    "score",
    "converged",
)
CSV_SCHEMA = "featselect-results v1"
TRIM_FRACTION = 0.05


class ConfigError(ValueError):
    """Invalid or missing experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentRow:
    experiment: str
    m: int
    trial: int
    error: float
    epsilon: float = math.nan
    epsilon_star: float = math.nan
    sigma_star_sq: float = math.nan
    lambda_star: float = math.nan
    bound_value: float = math.nan
    score: float = math.nan
    converged: bool = True
    runtime_ms: float = 0.0  # in-memory diagnostic, never serialized


@dataclass
class ExperimentResult:
    rows: list[ExperimentRow]
    summary: dict

    def to_csv_text(self, master_seed: int, trials: int) -> str:
        buf = io.StringIO()
        buf.write(
            f"# {CSV_SCHEMA}: experiment={self.summary['experiment']} "
            f"seed={master_seed} trials={trials}\n"
        )
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for r in self.rows:
            buf.write(
                ",".join(
                    [
                        r.experiment,
                        str(r.m),
                        str(r.trial),
                        _fmt(r.error),
                        _fmt(r.epsilon),
                        _fmt(r.epsilon_star),
                        _fmt(r.sigma_star_sq),
                        _fmt(r.lambda_star),
                        _fmt(r.bound_value),
                        _fmt(r.score),
                        "1" if r.converged else "0",
                    ]
                )
                + "\n"
            )
        return buf.getvalue()

    def write_csv(self, path, master_seed: int, trials: int) -> None:
        Path(path).write_text(self.to_csv_text(master_seed, trials))


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: Optional[dict] = None
    m_grid: tuple[int, ...] = (1000,)
    trials: int = 1
    loss: str = "square"
    constraint: Optional[dict] = None
    master_seed: int = 0
    output: Optional[str] = None
    solver: Optional[dict] = None
    sets: tuple[dict, ...] = ()           # meanwidth_report only
    cases: tuple[dict, ...] = ()          # model_params_report only
    n_draws: int = 10**6                  # MC budget for the report runs
    config_dir: Optional[str] = None      # base for relative file references

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}"
            )
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if len(self.m_grid) < 1 or any(
            b <= a for a, b in zip(self.m_grid, self.m_grid[1:])
        ):
            raise ConfigError(f"m_grid must be strictly increasing, got {self.m_grid}")
        if any(m < 1 for m in self.m_grid):
            raise ConfigError(f"m_grid entries must be >= 1, got {self.m_grid}")
        if self.n_draws < 2:
            raise ConfigError(f"n_draws must be >= 2, got {self.n_draws}")

    @staticmethod
    def from_json_dict(doc: dict, config_dir: Optional[str] = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        if "experiment" not in doc:
            raise ConfigError("missing required field 'experiment'")
        known = {
            "experiment", "model", "m_grid", "trials", "loss", "constraint",
            "master_seed", "output", "solver", "sets", "cases", "n_draws",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            return ExperimentConfig(
                experiment=str(doc["experiment"]),
                model=doc.get("model"),
                m_grid=tuple(int(m) for m in doc.get("m_grid", [1000])),
                trials=int(doc.get("trials", 1)),
                loss=str(doc.get("loss", "square")),
                constraint=doc.get("constraint"),
                master_seed=int(doc.get("master_seed", 0)),
                output=doc.get("output"),
                solver=doc.get("solver"),
                sets=tuple(doc.get("sets", ())),
                cases=tuple(doc.get("cases", ())),
                n_draws=int(doc.get("n_draws", 10**6)),
                config_dir=config_dir,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @staticmethod
    def from_file(path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_json_dict(doc, config_dir=str(path.parent))


def loss_from_name(name: str) -> LossFunction:
    if name == "square":
        return square_loss()
    if name == "logistic":
        return logistic_loss()
    raise ConfigError(f"loss must be 'square' or 'logistic', got {name!r}")


def constraint_from_spec(spec: Optional[dict], dim: int) -> ConstraintSet:
    if spec is None:
        raise ConfigError("missing required field 'constraint'")
    kind = spec.get("kind")
    if kind == "l1_ball":
        return l1_ball(float(spec["radius"]), dim)
    if kind == "l2_ball":
        return l2_ball(float(spec["radius"]), dim)
    if kind == "polytope":
        return polytope(np.asarray(spec["vertices"], dtype=float))
    raise ConfigError(
        f"constraint.kind must be 'l1_ball', 'l2_ball' or 'polytope', got {kind!r}"
    )


def model_from_spec(spec: Optional[dict], config_dir: Optional[str] = None) -> FactorModel:
    """Build a FactorModel from an inline spec or a file reference.

    Accepted shapes: {"file": path}, {"factor_model": {...}}, or
    {"ms_spec": {...}, "nonlinearity": {...}, "corrupt_fraction": psi}.
    """
    if spec is None:
        raise ConfigError("missing required field 'model'")
    if "file" in spec:
        path = Path(spec["file"])
        if config_dir is not None and not path.is_absolute():
            path = Path(config_dir) / path
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"model file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {path} is not valid JSON: {exc}") from exc
        return model_from_spec(doc, config_dir=str(path.parent))
    try:
        if "factor_model" in spec:
            return FactorModel.from_json_dict(spec["factor_model"])
        if "ms_spec" in spec:
            ms = MsModelSpec.from_json_dict(spec["ms_spec"])
            if "nonlinearity" not in spec:
                raise ConfigError("model.ms_spec requires a 'nonlinearity' field")
            f = Nonlinearity.from_json_dict(spec["nonlinearity"])
            return build_factor_model(
                ms, f, corrupt_fraction=float(spec.get("corrupt_fraction", 0.0))
            )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model spec: {exc}") from exc
    raise ConfigError(
        "model spec must contain one of 'file', 'factor_model', 'ms_spec'"
    )


def solver_from_spec(spec: Optional[dict]) -> SolverConfig:
    if spec is None:
        return SolverConfig()
    known = {"max_iters", "grad_tol", "step_init", "step_shrink",
             "sufficient_decrease", "objective_tol"}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown solver field(s): {sorted(unknown)}")
    try:
        return SolverConfig(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver config: {exc}") from exc


def trial_stream(master_seed: int, m_index: int, trial: int) -> RngStream:
    """Independent stream per (m index, trial): both indices stay < 2^32."""
    return RngStream(master_seed, (np.uint64(m_index) << np.uint64(32)) + np.uint64(trial))


def trimmed_mean(values: Sequence[float], trim: float = TRIM_FRACTION) -> float:
    vals = np.sort(np.asarray(values, dtype=float))
    cut = int(math.floor(trim * len(vals)))
    kept = vals[cut : len(vals) - cut] if cut > 0 else vals
    return float(kept.mean())


def loglog_slope(ms: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(m)."""
    x = np.log(np.asarray(ms, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def _model_params_any(loss: LossFunction, f: Nonlinearity):
    """Closed form when available, quadrature otherwise."""
    try:
        return model_params(loss, f, method=CLOSED_FORM)
    except IncompatibleLossError:
        return model_params(loss, f, method=QUADRATURE)


def _epsilon_threshold(f: Nonlinearity, sigma_star: float) -> float:
    """Closed-form concentration threshold on the noise parameter, where one
    is known: 3*sqrt(p_star) for the sign rule, 2*sigma_bar for the noiseless
    linear rule."""
    if f.kind == "sign":
        return 3.0 * math.sqrt(bitflip_probability(sigma_star))
    if f.kind == "identity":
        return 2.0 * linear_mismatch_std(sigma_star)
    return math.nan


def _run_trials(
    tasks: Sequence[tuple[int, int, int]],
    worker: Callable[[int, int, int], ExperimentRow],
    threads: int,
) -> list[ExperimentRow]:
    """Run worker(m_index, m, trial) over all tasks; output order is fixed by
    (m, trial) regardless of scheduling."""
    if threads == 1 or len(tasks) == 1:
        rows = [worker(*t) for t in tasks]
    else:
        workers = threads if threads > 0 else (os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: worker(*t), tasks))
    return sorted(rows, key=lambda r: (r.m, r.trial))


def _per_m_summary(rows: Sequence[ExperimentRow], value=lambda r: r.error) -> list[dict]:
    out = []
    for m in sorted({r.m for r in rows}):
        group = [r for r in rows if r.m == m]
        # sorted so the statistics are exactly row-order independent
        good = sorted(value(r) for r in group if r.converged and math.isfinite(value(r)))
        entry = {
            "m": m,
            "n": len(group),
            "n_excluded": len(group) - len(good),
        }
        if good:
            entry["trimmed_mean"] = trimmed_mean(good)
            entry["mean"] = float(np.mean(good))
            entry["std"] = float(np.std(good, ddof=1)) if len(good) > 1 else 0.0
        out.append(entry)
    return out


def run_rate(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Selection-error decay across the sample-size grid."""
    model = model_from_spec(cfg.model, cfg.config_dir)
    loss = loss_from_name(cfg.loss)
    k = constraint_from_spec(cfg.constraint, model.d)
    solver = solver_from_spec(cfg.solver)
    D = model.A.T
    N = model.B.T
    mp = _model_params_any(loss, model.f)
    rep = optimal_representation(D, N, model.z_star, k, mp.mu)
    sigma_star = math.sqrt(rep.sigma_star_sq)
    eps_star = _epsilon_threshold(model.f, sigma_star)
    dtil = extended_dictionary(model)
    dmax = float(np.linalg.norm(dtil, axis=0).max())
    radius = float(cfg.constraint.get("radius", 1.0)) if cfg.constraint else 1.0

    def worker(mi: int, m: int, trial: int) -> ExperimentRow:
        t0 = time.perf_counter()
        ss = sample(model, m, trial_stream(cfg.master_seed, mi, trial))
        converged = True
        try:
            res = fit(ss.X, ss.y, loss, k, solver)
            converged = res.converged
            z_hat = to_signal_domain(res.beta_hat, D)
            error = selection_error(z_hat, model.z_star, rep.lambda_star, model.sqrt_sigma)
        except NumericalError:
            error, converged = math.nan, False
        y_dd = rescaled_outputs(ss, rep.beta_star, model.f, model)
        eps = noise_parameter(ss.y, y_dd)
        bound = (dmax**2 * radius**2 * math.log(2.0 * model.d) / m) ** 0.25
        return ExperimentRow(
            experiment="rate",
            m=m,
            trial=trial,
            error=error,
            epsilon=eps,
            epsilon_star=eps_star,
            sigma_star_sq=rep.sigma_star_sq,
            lambda_star=rep.lambda_star,
            bound_value=bound,
            converged=converged,
            runtime_ms=(time.perf_counter() - t0) * 1e3,
        )

    tasks = [
        (mi, m, t)
        for mi, m in enumerate(cfg.m_grid)
        for t in range(cfg.trials)
    ]
    rows = _run_trials(tasks, worker, threads)
    per_m = _per_m_summary(rows)
    with_mean = [e for e in per_m if "trimmed_mean" in e]
    summary = {
        "experiment": "rate",
        "m_grid": list(cfg.m_grid),
        "per_m": per_m,
        "n_nonconverged": sum(not r.converged for r in rows),
        "lambda_star": rep.lambda_star,
        "sigma_star_sq": rep.sigma_star_sq,
    }
    if len(with_mean) >= 2:
        summary["loglog_slope"] = loglog_slope(
            [e["m"] for e in with_mean], [e["trimmed_mean"] for e in with_mean]
        )
    return ExperimentResult(rows, summary)


def run_noise_bounds(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Noise parameter per trial versus its closed-form threshold."""
    model = model_from_spec(cfg.model, cfg.config_dir)
    if model.q == 0:
        raise ConfigError("noise_bounds requires a model with noise atoms (q > 0)")
    if _epsilon_threshold(model.f, 1.0) != _epsilon_threshold(model.f, 1.0):
        raise ConfigError(
            f"noise_bounds has no closed-form threshold for f = {model.f.kind!r}"
        )
    loss = loss_from_name(cfg.loss)
    k = constraint_from_spec(cfg.constraint, model.d)
    D = model.A.T
    N = model.B.T
    mp = _model_params_any(loss, model.f)
    rep = optimal_representation(D, N, model.z_star, k, mp.mu)
    sigma_star = math.sqrt(rep.sigma_star_sq)
    eps_star = _epsilon_threshold(model.f, sigma_star)

    def worker(mi: int, m: int, trial: int) -> ExperimentRow:
        t0 = time.perf_counter()
        ss = sample(model, m, trial_stream(cfg.master_seed, mi, trial))
        y_dd = rescaled_outputs(ss, rep.beta_star, model.f, model)
        eps = noise_parameter(ss.y, y_dd)
        return ExperimentRow(
            experiment="noise_bounds",
            m=m,
            trial=trial,
            error=eps,
            epsilon=eps,
            epsilon_star=eps_star,
            sigma_star_sq=rep.sigma_star_sq,
            lambda_star=rep.lambda_star,
            bound_value=eps_star,
            score=1.0 if eps <= eps_star else 0.0,
            runtime_ms=(time.perf_counter() - t0) * 1e3,
        )

    tasks = [
        (mi, m, t)
        for mi, m in enumerate(cfg.m_grid)
        for t in range(cfg.trials)
    ]
    rows = _run_trials(tasks, worker, threads)
    per_m = _per_m_summary(rows, value=lambda r: r.epsilon)
    for entry in per_m:
        group = [r for r in rows if r.m == entry["m"]]
        entry["success_rate"] = float(np.mean([r.score for r in group]))
        entry["epsilon_q95"] = float(np.quantile([r.epsilon for r in group], 0.95))
    summary = {
        "experiment": "noise_bounds",
        "m_grid": list(cfg.m_grid),
        "per_m": per_m,
        "epsilon_star": eps_star,
        "sigma_star_sq": rep.sigma_star_sq,
        "n_nonconverged": 0,
    }
    return ExperimentResult(rows, summary)


def run_ms_recovery(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Peak recovery on the synthetic spectrum model: selection error plus a
    support-localization score (fraction of the top-s entries of |z_hat| that
    land in supp(z_star))."""
    if cfg.model is None or ("ms_spec" not in cfg.model and "file" not in cfg.model):
        raise ConfigError("ms_recovery requires model.ms_spec (inline or via file)")
    spec_doc = cfg.model
    if "file" in spec_doc:
        path = Path(spec_doc["file"])
        if cfg.config_dir is not None and not path.is_absolute():
            path = Path(cfg.config_dir) / path
        try:
            spec_doc = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"model file not found: {path}") from exc
    ms = MsModelSpec.from_json_dict(spec_doc["ms_spec"])
    f = Nonlinearity.from_json_dict(spec_doc["nonlinearity"])
    model = build_factor_model(
        ms, f, corrupt_fraction=float(spec_doc.get("corrupt_fraction", 0.0))
    )
    loss = loss_from_name(cfg.loss)
    constraint_spec = cfg.constraint or {"kind": "l1_ball", "radius": ms.R}
    k = constraint_from_spec(constraint_spec, model.d)
    solver = solver_from_spec(cfg.solver)
    D = model.A.T
    N = model.B.T
    mp = _model_params_any(loss, model.f)
    rep = optimal_representation(D, N, model.z_star, k, mp.mu)
    support = set(ms.z_star_support)
    s = len(support)

    def worker(mi: int, m: int, trial: int) -> ExperimentRow:
        t0 = time.perf_counter()
        ss = sample(model, m, trial_stream(cfg.master_seed, mi, trial))
        converged = True
        try:
            res = fit(ss.X, ss.y, loss, k, solver)
            converged = res.converged
            z_hat = to_signal_domain(res.beta_hat, D)
            error = selection_error(z_hat, model.z_star, rep.lambda_star, model.sqrt_sigma)
            top = np.argsort(np.abs(z_hat), kind="stable")[::-1][:s]
            score = len(support.intersection(int(j) for j in top)) / s
        except NumericalError:
            error, score, converged = math.nan, math.nan, False
        return ExperimentRow(
            experiment="ms_recovery",
            m=m,
            trial=trial,
            error=error,
            sigma_star_sq=rep.sigma_star_sq,
            lambda_star=rep.lambda_star,
            score=score,
            converged=converged,
            runtime_ms=(time.perf_counter() - t0) * 1e3,
        )

    tasks = [
        (mi, m, t)
        for mi, m in enumerate(cfg.m_grid)
        for t in range(cfg.trials)
    ]
    rows = _run_trials(tasks, worker, threads)
    per_m = _per_m_summary(rows)
    for entry in per_m:
        scores = [
            r.score for r in rows
            if r.m == entry["m"] and r.converged and math.isfinite(r.score)
        ]
        entry["localization_mean"] = float(np.mean(scores)) if scores else math.nan
    summary = {
        "experiment": "ms_recovery",
        "m_grid": list(cfg.m_grid),
        "per_m": per_m,
        "lambda_star": rep.lambda_star,
        "sigma_star_sq": rep.sigma_star_sq,
        "s": s,
        "p": model.p,
        "n_nonconverged": sum(not r.converged for r in rows),
    }
    return ExperimentResult(rows, summary)


def _set_image_from_spec(spec: dict) -> tuple[SetImage, float]:
    """Build a (possibly mapped) constraint set and its closed-form
    effective-dimension upper bound."""
    kind = spec.get("kind")
    map_matrix = (
        np.asarray(spec["map"], dtype=float) if "map" in spec else None
    )
    if kind == "l1_ball":
        radius = float(spec["radius"])
        dim = int(spec["dim"])
        base = l1_ball(radius, dim)
        m = np.eye(dim) if map_matrix is None else map_matrix
        dmax = float(np.linalg.norm(m, axis=0).max())
        return SetImage(base, m), bound_l1_image(radius, dmax, dim)
    if kind == "l2_ball":
        radius = float(spec["radius"])
        dim = int(spec["dim"])
        base = l2_ball(radius, dim)
        m = np.eye(dim) if map_matrix is None else map_matrix
        # effdim of the unit ball is at most its dimension; push through M
        # by the operator-norm comparison.
        return SetImage(base, m), bound_slepian(m, radius**2 * dim)
    if kind == "polytope":
        verts = np.asarray(spec["vertices"], dtype=float)
        base = polytope(verts)
        m = np.eye(verts.shape[1]) if map_matrix is None else map_matrix
        if map_matrix is None:
            return SetImage(base, m), bound_polytope(verts)
        return SetImage(base, m), bound_slepian(m, bound_polytope(verts))
    raise ConfigError(f"set kind must be 'l1_ball', 'l2_ball' or 'polytope', got {kind!r}")


def run_meanwidth_report(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Monte-Carlo effective dimension against the closed-form upper bounds."""
    if not cfg.sets:
        raise ConfigError("meanwidth_report requires a non-empty 'sets' list")
    rows = []
    for i, spec in enumerate(cfg.sets):
        t0 = time.perf_counter()
        img, bound = _set_image_from_spec(spec)
        est, se = effdim_mc(img, cfg.n_draws, RngStream(cfg.master_seed, i))
        rows.append(
            ExperimentRow(
                experiment="meanwidth_report",
                m=cfg.n_draws,
                trial=i,
                error=est,
                epsilon=se,
                bound_value=bound,
                score=1.0 if est <= 4.0 * bound else 0.0,
                runtime_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
    summary = {
        "experiment": "meanwidth_report",
        "n_draws": cfg.n_draws,
        "n_sets": len(rows),
        "all_within_4x_bound": all(r.score == 1.0 for r in rows),
        "n_nonconverged": 0,
    }
    return ExperimentResult(rows, summary)


def run_model_params_report(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Monte-Carlo model parameters against their closed forms, per case."""
    if not cfg.cases:
        raise ConfigError("model_params_report requires a non-empty 'cases' list")
    rows = []
    for i, case in enumerate(cfg.cases):
        t0 = time.perf_counter()
        try:
            loss = loss_from_name(case.get("loss", "square"))
            f = Nonlinearity.from_json_dict(case["nonlinearity"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid case {i}: {exc}") from exc
        ref = _model_params_any(loss, f)
        mc = model_params(
            loss, f, method=MONTE_CARLO, n_nodes_or_draws=cfg.n_draws,
            rng=RngStream(cfg.master_seed, i),
        )
        gap = abs(mc.mu - ref.mu)
        rows.append(
            ExperimentRow(
                experiment="model_params_report",
                m=cfg.n_draws,
                trial=i,
                error=gap,
                epsilon=mc.stderr,
                epsilon_star=3.0 * mc.stderr,
                sigma_star_sq=ref.rho**2,
                lambda_star=ref.mu,
                bound_value=3.0 * mc.stderr,
                score=1.0 if gap <= 3.0 * mc.stderr else 0.0,
                runtime_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
    summary = {
        "experiment": "model_params_report",
        "n_draws": cfg.n_draws,
        "n_cases": len(rows),
        "all_within_3se": all(r.score == 1.0 for r in rows),
        "n_nonconverged": 0,
    }
    return ExperimentResult(rows, summary)


_RUNNERS = {
    "rate": run_rate,
    "noise_bounds": run_noise_bounds,
    "ms_recovery": run_ms_recovery,
    "meanwidth_report": run_meanwidth_report,
    "model_params_report": run_model_params_report,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return _RUNNERS[cfg.experiment](cfg, threads=threads)


# ---------------------------------------------------------------------------
# command-line interface


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featselect",
        description="Feature selection from factor-model data under noisy "
        "non-linear observations: data generation, fitting, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="sample a model to CSV")
    p_gen.add_argument("--config", required=True, help="model spec JSON file")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("-m", "--samples", type=int, default=1000)
    p_gen.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="run the estimator on CSV data")
    p_fit.add_argument("--data", required=True, help="CSV with columns y,x1..xd")
    p_fit.add_argument("--loss", default="square", choices=["square", "logistic"])
    p_fit.add_argument("--constraint", default="l1_ball", choices=["l1_ball", "l2_ball"])
    p_fit.add_argument("--radius", type=float, default=1.0)
    p_fit.add_argument("--out", help="write beta_hat as one-column CSV")

    p_exp = sub.add_parser("experiment", help="run a named experiment")
    p_exp.add_argument("name", choices=list(EXPERIMENTS))
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--seed", type=int, help="override master_seed")
    p_exp.add_argument("--out", help="override output path")
    p_exp.add_argument("--threads", type=int, default=0, help="0 = auto")
    p_exp.add_argument("--trials", type=int, help="override trial count")
    p_exp.add_argument("--summary", help="also write a JSON summary here")
    p_exp.add_argument(
        "--plot", action="store_true",
        help="render figures next to the CSV output",
    )
    return parser


def _cmd_gen(args) -> int:
    spec_path = Path(args.config)
    try:
        doc = json.loads(spec_path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"model spec file not found: {spec_path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"model spec is not valid JSON: {exc}") from exc
    model = model_from_spec(doc, config_dir=str(spec_path.parent))
    if args.samples < 1:
        raise ConfigError(f"samples must be >= 1, got {args.samples}")
    ss = sample(model, args.samples, RngStream(args.seed, 0))
    with open(args.out, "w") as fh:
        fh.write(f"# {CSV_SCHEMA}: gen seed={args.seed} m={args.samples} d={model.d}\n")
        fh.write("y," + ",".join(f"x{j+1}" for j in range(model.d)) + "\n")
        for yi, xi in zip(ss.y, ss.X):
            fh.write(_fmt(float(yi)) + "," + ",".join(_fmt(float(v)) for v in xi) + "\n")
    return 0


def _cmd_fit(args) -> int:
    try:
        lines = [
            ln for ln in Path(args.data).read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")
        ]
    except FileNotFoundError as exc:
        raise ConfigError(f"data file not found: {args.data}") from exc
    if lines:
        try:
            float(lines[0].split(",")[0])
        except ValueError:
            lines = lines[1:]  # header row
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"could not parse CSV data: {exc}") from exc
    if data.size == 0:
        raise ConfigError("data file contains no rows")
    if data.shape[1] < 2:
        raise ConfigError("data must have a label column plus at least one feature")
    y, X = data[:, 0], data[:, 1:]
    loss = loss_from_name(args.loss)
    if args.radius <= 0:
        raise ConfigError(f"radius must be positive, got {args.radius}")
    k = (
        l1_ball(args.radius, X.shape[1])
        if args.constraint == "l1_ball"
        else l2_ball(args.radius, X.shape[1])
    )
    res = fit(X, y, loss, k)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("beta\n")
            for v in res.beta_hat:
                fh.write(_fmt(float(v)) + "\n")
    else:
        print(",".join(_fmt(float(v)) for v in res.beta_hat))
    print(
        f"objective={res.objective:.6e} iterations={res.iterations} "
        f"converged={res.converged}",
        file=sys.stderr,
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if cfg.experiment != args.name:
        raise ConfigError(
            f"config is for experiment {cfg.experiment!r}, not {args.name!r}"
        )
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    out = args.out or cfg.output
    if out is None:
        raise ConfigError("no output path: set --out or the config 'output' field")
    result = run_experiment(cfg, threads=args.threads)
    result.write_csv(out, cfg.master_seed, cfg.trials)
    if args.summary:
        Path(args.summary).write_text(json.dumps(result.summary, indent=2) + "\n")
    if args.plot:
        from .report import render_figures

        paths = render_figures(result, Path(out).with_suffix(""))
        for p in paths:
            print(f"wrote {p}", file=sys.stderr)
    return 0


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_experiment(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, InfeasibleRepresentationError, np.linalg.LinAlgError,
            FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
