"""Constrained empirical loss minimization by projected gradient descent
with backtracking line search, and the map back to the signal domain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError
from .geometry import ConstraintSet, project
from .loss import LossFunction, square_loss


class NumericalError(RuntimeError):
    """Non-finite loss or gradient encountered during a solve."""


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-7          # on the norm of the gradient mapping
    step_init: float = 1.0
    step_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    objective_tol: float = 1e-12    # relative decrease floor

    def __post_init__(self):
        if min(self.max_iters, self.grad_tol, self.step_init, self.step_shrink,
               self.sufficient_decrease, self.objective_tol) <= 0:
            raise ValueError("all solver parameters must be positive")


@dataclass
class FitResult:
    beta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray
    grad_mapping_norm: float
    z_hat: Optional[np.ndarray] = None


def fit(
    X: np.ndarray,
    y: np.ndarray,
    loss: LossFunction,
    k: ConstraintSet,
    cfg: SolverConfig = SolverConfig(),
) -> FitResult:
    """Minimize (1/m) sum_i L(<x_i, beta>, y_i) over beta in K.

    Projected gradient descent from beta = 0 (feasible since 0 in K), with
    Armijo backtracking. Stops when the gradient mapping
    ||beta - project(beta - t * grad)|| / t drops below grad_tol.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionError(f"X is {X.shape}, y is {y.shape}")
    m, d = X.shape
    if d != k.dim:
        raise DimensionError(f"X has {d} columns, constraint set has dim {k.dim}")

    def objective(beta: np.ndarray) -> float:
        return float(np.mean(loss.value(X @ beta, y)))

    def gradient(beta: np.ndarray) -> np.ndarray:
        return X.T @ loss.d1(X @ beta, y) / m

    beta = project(k, np.zeros(d))
    obj = objective(beta)
    trace = [obj]
    step = cfg.step_init
    converged = False
    gm_norm = np.inf
    stall_count = 0
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        grad = gradient(beta)
        if not (np.isfinite(obj) and np.all(np.isfinite(grad))):
            raise NumericalError(
                f"non-finite loss/gradient at iteration {iterations}: "
                f"objective={obj}, ||beta||={np.linalg.norm(beta):.3e}"
            )
        step = min(step * 2.0, cfg.step_init)
        candidate = None
        while step > 1e-16:
            candidate = project(k, beta - step * grad)
            delta = candidate - beta
            new_obj = objective(candidate)
            if new_obj <= obj - cfg.sufficient_decrease / step * float(delta @ delta):
                break
            step *= cfg.step_shrink
            candidate = None
        if candidate is None:
            converged = True  # line search exhausted: numerically stationary
            break
        gm_norm = float(np.linalg.norm(candidate - beta)) / step
        decrease = obj - new_obj
        beta, obj = candidate, new_obj
        trace.append(obj)
        if gm_norm <= cfg.grad_tol:
            converged = True
            break
        if decrease <= cfg.objective_tol * max(1.0, abs(obj)):
            stall_count += 1
            if stall_count >= 20:
                converged = True  # objective plateau: accepted as stationary
                break
        else:
            stall_count = 0
    if gm_norm <= cfg.grad_tol:
        converged = True
    return FitResult(
        beta_hat=beta,
        objective=obj,
        iterations=iterations,
        converged=converged,
        objective_trace=np.array(trace),
        grad_mapping_norm=gm_norm,
    )


def to_signal_domain(beta_hat: np.ndarray, D: np.ndarray) -> np.ndarray:
    """z_hat = D @ beta_hat."""
    D = np.asarray(D, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if D.shape[1] != beta_hat.shape[0]:
        raise DimensionError(f"D is {D.shape}, beta_hat has length {beta_hat.shape[0]}")
    return D @ beta_hat


def lasso(
    X: np.ndarray,
    y: np.ndarray,
    R: float,
    cfg: SolverConfig = SolverConfig(),
) -> FitResult:
    """Square-loss fit constrained to the l1 ball of radius R."""
    from .geometry import l1_ball

    X = np.asarray(X, dtype=float)
    return fit(X, y, square_loss(), l1_ball(R, X.shape[1]), cfg)
