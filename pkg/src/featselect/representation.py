"""Optimal representing feature vectors, their noise variance / SNR /
scaling factors, the noise parameter, and the closed-form mismatch
quantities for linear and binary observation rules."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError
from .estimator import SolverConfig
from .geometry import ConstraintSet, distance, project
from .model import FactorModel, Nonlinearity, SampleSet

FEASIBILITY_REL_TOL = 1e-4
PENALTY_WEIGHTS = (1e2, 1e4, 1e6, 1e8)


class InfeasibleRepresentationError(RuntimeError):
    """No representing vector with D beta = z_star and mu beta in K was found."""


@dataclass(frozen=True)
class Representation:
    """An (approximately) optimal representation beta_star of z_star."""

    beta_star: np.ndarray
    sigma_star_sq: float
    snr: float
    tau_star: float
    lambda_star: float
    feasibility_residual: float
    constraint_residual: float

    def to_json_dict(self) -> dict:
        return {
            "beta_star": self.beta_star.tolist(),
            "sigma_star_sq": self.sigma_star_sq,
            "snr": self.snr,
            "tau_star": self.tau_star,
            "lambda_star": self.lambda_star,
            "feasibility_residual": self.feasibility_residual,
            "constraint_residual": self.constraint_residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _kkt_equality_solution(D: np.ndarray, N: np.ndarray, z_star: np.ndarray) -> np.ndarray:
    """Minimize ||N beta||^2 subject to D beta = z_star via the KKT system
    (least-squares solve picks a minimizer when it is non-unique)."""
    p, d = D.shape
    gram = 2.0 * N.T @ N if N.shape[0] > 0 else np.zeros((d, d))
    kkt = np.zeros((d + p, d + p))
    kkt[:d, :d] = gram
    kkt[:d, d:] = D.T
    kkt[d:, :d] = D
    rhs = np.concatenate([np.zeros(d), z_star])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:d]


def _fista_penalty_stage(
    N: np.ndarray,
    D: np.ndarray,
    z_star: np.ndarray,
    weight: float,
    k_feas: Optional[ConstraintSet],
    beta0: np.ndarray,
    max_iters: int,
) -> np.ndarray:
    """Minimize ||N b||^2 + weight * ||D b - z||^2 over the feasible set by
    accelerated projected gradient with monotone restart."""
    lip = 2.0 * (np.linalg.norm(N, 2) ** 2 if N.size else 0.0) + 2.0 * weight * np.linalg.norm(D, 2) ** 2
    step = 1.0 / max(lip, 1e-30)

    def grad(b):
        g = 2.0 * weight * D.T @ (D @ b - z_star)
        if N.size:
            g = g + 2.0 * N.T @ (N @ b)
        return g

    def obj(b):
        val = weight * float(np.sum((D @ b - z_star) ** 2))
        if N.size:
            val += float(np.sum((N @ b) ** 2))
        return val

    proj = (lambda b: project(k_feas, b)) if k_feas is not None else (lambda b: b)
    beta = proj(beta0)
    aux = beta.copy()
    t_mom = 1.0
    best, best_obj = beta.copy(), obj(beta)
    for _ in range(max_iters):
        new_beta = proj(aux - step * grad(aux))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom**2))
        new_obj = obj(new_beta)
        if new_obj > best_obj:  # monotone restart
            aux = best.copy()
            t_mom = 1.0
            new_beta = proj(aux - step * grad(aux))
            new_obj = obj(new_beta)
        move = float(np.linalg.norm(new_beta - beta))
        aux = new_beta + (t_mom - 1.0) / t_new * (new_beta - beta)
        beta, t_mom = new_beta, t_new
        if new_obj < best_obj:
            best, best_obj = beta.copy(), new_obj
        if move <= 1e-14 * (1.0 + float(np.linalg.norm(beta))):
            break
    return best


def optimal_representation(
    D: np.ndarray,
    N: np.ndarray,
    z_star: np.ndarray,
    k: ConstraintSet,
    mu: float,
    cfg: SolverConfig = SolverConfig(),
) -> Representation:
    """beta_star approximately minimizing ||N beta||^2 subject to
    D beta = z_star and mu * beta in K.

    Tries the exact KKT solution of the equality-constrained problem first;
    if that point violates the K constraint, falls back to quadratic-penalty
    continuation solved by accelerated projected gradient.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    N = np.asarray(N, dtype=float)
    if N.size == 0:
        N = np.zeros((0, D.shape[1]))
    N = np.atleast_2d(N)
    z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
    if D.shape[0] != z_star.shape[0] or N.shape[1] != D.shape[1]:
        raise DimensionError(
            f"shape mismatch: D {D.shape}, N {N.shape}, z_star {z_star.shape}"
        )
    z_norm = float(np.linalg.norm(z_star))
    k_feas = k.scaled(1.0 / mu) if mu != 0.0 else None

    beta = _kkt_equality_solution(D, N, z_star)
    if k_feas is not None and distance(k_feas, beta) > 1e-9:
        for weight in PENALTY_WEIGHTS:
            beta = _fista_penalty_stage(
                N, D, z_star, weight, k_feas, beta, cfg.max_iters
            )

    feasibility_residual = float(np.linalg.norm(D @ beta - z_star))
    if feasibility_residual > FEASIBILITY_REL_TOL * max(z_norm, 1e-300):
        raise InfeasibleRepresentationError(
            f"representation residual {feasibility_residual:.3e} exceeds "
            f"{FEASIBILITY_REL_TOL:.0e} * ||z_star||; K may be too small or D "
            "may not reach z_star"
        )
    sigma_star_sq = float(np.sum((N @ beta) ** 2)) if N.size else 0.0
    snr = z_norm**2 / sigma_star_sq if sigma_star_sq > 0 else math.inf
    tau_star = math.sqrt(z_norm**2 + sigma_star_sq)
    lambda_star = mu / tau_star
    constraint_residual = distance(k, mu * beta) if mu != 0.0 else 0.0
    return Representation(
        beta_star=beta,
        sigma_star_sq=sigma_star_sq,
        snr=snr,
        tau_star=tau_star,
        lambda_star=lambda_star,
        feasibility_residual=feasibility_residual,
        constraint_residual=constraint_residual,
    )


def rescaled_outputs(
    ss: SampleSet,
    beta_star: np.ndarray,
    f: Nonlinearity,
    model: FactorModel,
) -> np.ndarray:
    """y''_i = f(<x_i, beta_star> / tau_star), sharing each observation's
    nuisance draw with the original labels."""
    beta_star = np.asarray(beta_star, dtype=float)
    N = model.B.T
    sigma_star_sq = float(np.sum((N @ beta_star) ** 2)) if N.size else 0.0
    tau_star = math.sqrt(float(np.linalg.norm(model.z_star) ** 2) + sigma_star_sq)
    return f.apply(ss.X @ beta_star / tau_star, ss.xi)


def noise_parameter(y_ref: np.ndarray, y_dd: np.ndarray) -> float:
    """Root-mean-square mismatch sqrt(mean |y_ref - y_dd|^2)."""
    y_ref = np.asarray(y_ref, dtype=float)
    y_dd = np.asarray(y_dd, dtype=float)
    if y_ref.shape != y_dd.shape:
        raise DimensionError(f"length mismatch: {y_ref.shape} vs {y_dd.shape}")
    return float(np.sqrt(np.mean((y_ref - y_dd) ** 2)))


def bitflip_probability(sigma_star: float) -> float:
    """Probability that sign(s) != sign(s + n) for independent s ~ N(0,1)
    and n ~ N(0, sigma_star^2): 1/2 - arctan(1/sigma_star)/pi."""
    if sigma_star < 0:
        raise ValueError("sigma_star must be >= 0")
    if sigma_star == 0.0:
        return 0.0
    p = 0.5 - math.atan(1.0 / sigma_star) / math.pi
    return min(max(p, 0.0), 0.5 - 1e-300)


def linear_mismatch_std(sigma_star: float) -> float:
    """Std of y - y'' for the noisy-linear rule: sqrt(2 - 2/sqrt(1+sigma_star^2))."""
    if sigma_star < 0:
        raise ValueError("sigma_star must be >= 0")
    return math.sqrt(max(2.0 - 2.0 / math.sqrt(1.0 + sigma_star**2), 0.0))


def selection_error(
    z_hat: np.ndarray,
    z_star: np.ndarray,
    lambda_star: float,
    sqrt_sigma: Optional[np.ndarray] = None,
) -> float:
    """||sqrt(Sigma) (z_hat - lambda_star * z_star)||; identity weighting by
    default."""
    z_hat = np.asarray(z_hat, dtype=float)
    z_star = np.asarray(z_star, dtype=float)
    if z_hat.shape != z_star.shape:
        raise DimensionError(f"shape mismatch: {z_hat.shape} vs {z_star.shape}")
    diff = z_hat - lambda_star * z_star
    if sqrt_sigma is not None:
        sqrt_sigma = np.asarray(sqrt_sigma, dtype=float)
        if sqrt_sigma.shape != (z_hat.shape[0], z_hat.shape[0]):
            raise DimensionError(f"sqrt_sigma has shape {sqrt_sigma.shape}")
        diff = sqrt_sigma @ diff
    return float(np.linalg.norm(diff))
