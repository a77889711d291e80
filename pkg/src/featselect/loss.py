"""Loss functions (square, logistic) and the scalar model parameters
mu, rho, eta of a (loss, non-linearity) pair.

mu solves E[L'(mu*g, f(g)) * g] = 0 for g ~ N(0,1); rho^2 and eta^2 are the
corresponding deviation moments E[L'(mu*g, f(g))^2] and
E[L'(mu*g, f(g))^2 * g^2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import expit

from .core import RngStream
from .model import (
    BIT_FLIP_KIND,
    IDENTITY_KIND,
    LINEAR_NOISE_KIND,
    SIGN_KIND,
    Nonlinearity,
    sign0,
)

SQUARE = "square"
LOGISTIC = "logistic"

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
MONTE_CARLO = "monte_carlo"

ROOT_BRACKET = (-10.0, 10.0)
ROOT_TOL = 1e-8


class IncompatibleLossError(ValueError):
    """The scalar map mu -> E[L'(mu g, f(g)) g] has no root on the bracket."""


@dataclass(frozen=True)
class LossFunction:
    """Twice-differentiable loss L(v, y), strictly convex in v.

    Custom losses (used as negative controls in verification) can be built
    by passing explicit callables with kind="custom".
    """

    kind: str
    value_fn: Optional[Callable] = None
    d1_fn: Optional[Callable] = None
    d2_fn: Optional[Callable] = None
    custom_lipschitz_d1: float = 1.0

    def value(self, v, y):
        v, y = np.asarray(v, dtype=float), np.asarray(y, dtype=float)
        if self.kind == SQUARE:
            return 0.5 * (v - y) ** 2
        if self.kind == LOGISTIC:
            return -y * v + np.logaddexp(0.0, -y * v)
        return self.value_fn(v, y)

    def d1(self, v, y):
        v, y = np.asarray(v, dtype=float), np.asarray(y, dtype=float)
        if self.kind == SQUARE:
            return v - y
        if self.kind == LOGISTIC:
            return -y * (1.0 + expit(-y * v))
        return self.d1_fn(v, y)

    def d2(self, v, y):
        v, y = np.asarray(v, dtype=float), np.asarray(y, dtype=float)
        if self.kind == SQUARE:
            return np.ones(np.broadcast(v, y).shape)
        if self.kind == LOGISTIC:
            s = expit(-y * v)
            return s * (1.0 - s)
        return self.d2_fn(v, y)

    @property
    def lipschitz_d1(self) -> float:
        if self.kind == SQUARE:
            return 1.0
        if self.kind == LOGISTIC:
            # |L'(v,1) - L'(v,-1)| = 3 for every v, and |1 - (-1)| = 2
            return 1.5
        return self.custom_lipschitz_d1

    def convexity_floor(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == SQUARE:
            return np.ones(v.shape)
        if self.kind == LOGISTIC:
            # min over y in {-1,+1} of sigma(-yv)(1-sigma(-yv))
            e = np.exp(np.abs(v))
            return e / (1.0 + e) ** 2
        raise NotImplementedError(f"no convexity floor for kind {self.kind!r}")


def square_loss() -> LossFunction:
    return LossFunction(SQUARE)


def logistic_loss() -> LossFunction:
    return LossFunction(LOGISTIC)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters of a (loss, non-linearity) pair."""

    mu: float
    rho: float
    eta: float
    method: str
    stderr: Optional[float] = None          # standard error of mu (Monte Carlo)
    stderr_rho_sq: Optional[float] = None
    stderr_eta_sq: Optional[float] = None
    root_residual: float = 0.0

    @property
    def rho_sq(self) -> float:
        return self.rho**2

    @property
    def eta_sq(self) -> float:
        return self.eta**2

    @property
    def recovery_impossible(self) -> bool:
        """True when mu is (statistically) indistinguishable from zero, in
        which case observations carry no recoverable signal direction."""
        floor = 1e-8 if self.stderr is None else max(3.0 * self.stderr, 1e-8)
        return abs(self.mu) <= floor


def _gauss_expect(h: Callable[[float], float]) -> float:
    """E[h(g)] for g ~ N(0,1), split at 0 to tolerate sign discontinuities."""
    density = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    lo, _ = quad(lambda t: h(t) * density(t), -np.inf, 0.0, limit=200)
    hi, _ = quad(lambda t: h(t) * density(t), 0.0, np.inf, limit=200)
    return lo + hi


def _output_mixture(f: Nonlinearity) -> Callable[[float], list[tuple[float, float]]]:
    """For quadrature: map g to weighted possible outputs (weight, f-value).

    Supports deterministic f and the two-valued bit_flip; continuous nuisance
    (linear_noise with noise_std > 0) has no finite mixture and is rejected.
    """
    if f.kind == SIGN_KIND:
        return lambda g: [(1.0, float(sign0(g)))]
    if f.kind == IDENTITY_KIND:
        return lambda g: [(1.0, g)]
    if f.kind == BIT_FLIP_KIND:
        p = f.keep_prob
        return lambda g: [(p, float(sign0(g))), (1.0 - p, -float(sign0(g)))]
    if f.kind == LINEAR_NOISE_KIND and f.noise_std == 0.0:
        return lambda g: [(1.0, f.scale * g)]
    raise ValueError(
        f"quadrature unsupported for non-linearity {f.kind!r} with continuous nuisance"
    )


def _quadrature_moment(loss: LossFunction, f: Nonlinearity, mu: float, weight: str) -> float:
    mix = _output_mixture(f)

    def h(g: float) -> float:
        total = 0.0
        for w, y in mix(g):
            lp = float(loss.d1(mu * g, y))
            if weight == "root":
                total += w * lp * g
            elif weight == "rho":
                total += w * lp * lp
            else:  # eta
                total += w * lp * lp * g * g
        return total

    return _gauss_expect(h)


def root_residual(loss: LossFunction, f: Nonlinearity, mu: float) -> float:
    """|E[L'(mu g, f(g)) g]| evaluated by adaptive quadrature."""
    return abs(_quadrature_moment(loss, f, mu, "root"))


def _solve_mu_bisection(h: Callable[[float], float]) -> float:
    a, b = ROOT_BRACKET
    ha, hb = h(a), h(b)
    if ha == 0.0:
        return a
    if hb == 0.0:
        return b
    if ha * hb > 0.0:
        raise IncompatibleLossError(
            f"no sign change of E[L'(mu g, f(g)) g] on bracket {ROOT_BRACKET}"
        )
    for _ in range(200):
        mid = 0.5 * (a + b)
        hm = h(mid)
        if abs(hm) <= ROOT_TOL or (b - a) < 1e-14:
            return mid
        if ha * hm <= 0.0:
            b, hb = mid, hm
        else:
            a, ha = mid, hm
    return 0.5 * (a + b)


def _closed_form(loss: LossFunction, f: Nonlinearity) -> ModelParams:
    if loss.kind != SQUARE:
        raise IncompatibleLossError(f"no closed forms for loss kind {loss.kind!r}")
    if f.kind == IDENTITY_KIND:
        return ModelParams(1.0, 0.0, 0.0, CLOSED_FORM)
    if f.kind == SIGN_KIND:
        mu = math.sqrt(2.0 / math.pi)
        dev = math.sqrt(1.0 - 2.0 / math.pi)
        return ModelParams(mu, dev, dev, CLOSED_FORM)
    if f.kind == LINEAR_NOISE_KIND:
        return ModelParams(f.scale, f.noise_std, f.noise_std, CLOSED_FORM)
    # bit flip: mu = (2p-1) sqrt(2/pi), rho^2 = eta^2 = 1 - (2/pi)(1-2p)^2
    mu = (2.0 * f.keep_prob - 1.0) * math.sqrt(2.0 / math.pi)
    dev = math.sqrt(max(1.0 - mu * mu, 0.0))
    return ModelParams(mu, dev, dev, CLOSED_FORM)


def _quadrature(loss: LossFunction, f: Nonlinearity) -> ModelParams:
    if loss.kind == SQUARE:
        # L' = v - y: the root equation is mu - E[f(g) g] = 0.
        mix = _output_mixture(f)
        mu = _gauss_expect(lambda g: sum(w * y * g for w, y in mix(g)))
    else:
        mu = _solve_mu_bisection(lambda m: _quadrature_moment(loss, f, m, "root"))
    rho_sq = _quadrature_moment(loss, f, mu, "rho")
    eta_sq = _quadrature_moment(loss, f, mu, "eta")
    return ModelParams(
        mu,
        math.sqrt(max(rho_sq, 0.0)),
        math.sqrt(max(eta_sq, 0.0)),
        QUADRATURE,
        root_residual=root_residual(loss, f, mu),
    )


def _monte_carlo(loss: LossFunction, f: Nonlinearity, n_draws: int, rng: RngStream) -> ModelParams:
    gen = rng.generator()
    g = gen.standard_normal(n_draws)
    xi = f.draw_nuisance(n_draws, gen)
    y = f.apply(g, xi)
    if loss.kind == SQUARE:
        prods = y * g
        mu = float(np.mean(prods))
        stderr_mu = float(np.std(prods, ddof=1) / math.sqrt(n_draws))
    else:
        mu = _solve_mu_bisection(lambda m: float(np.mean(loss.d1(m * g, y) * g)))
        # delta-method SE of the root: sd(h-samples) / |dh/dmu|
        h_samples = loss.d1(mu * g, y) * g
        slope = float(np.mean(loss.d2(mu * g, y) * g * g))
        stderr_mu = float(np.std(h_samples, ddof=1) / math.sqrt(n_draws) / max(abs(slope), 1e-12))
    lp = loss.d1(mu * g, y)
    rho_samples = lp * lp
    eta_samples = rho_samples * g * g
    rho_sq = float(np.mean(rho_samples))
    eta_sq = float(np.mean(eta_samples))
    return ModelParams(
        mu,
        math.sqrt(max(rho_sq, 0.0)),
        math.sqrt(max(eta_sq, 0.0)),
        MONTE_CARLO,
        stderr=stderr_mu,
        stderr_rho_sq=float(np.std(rho_samples, ddof=1) / math.sqrt(n_draws)),
        stderr_eta_sq=float(np.std(eta_samples, ddof=1) / math.sqrt(n_draws)),
        root_residual=abs(float(np.mean(loss.d1(mu * g, y) * g))),
    )


def model_params(
    loss: LossFunction,
    f: Nonlinearity,
    method: str = CLOSED_FORM,
    n_nodes_or_draws: int = 10**6,
    rng: Optional[RngStream] = None,
) -> ModelParams:
    """Compute (mu, rho, eta) for the given pair by the requested method."""
    if method == CLOSED_FORM:
        return _closed_form(loss, f)
    if method == QUADRATURE:
        return _quadrature(loss, f)
    if method == MONTE_CARLO:
        if rng is None:
            raise ValueError("monte_carlo method requires an RngStream")
        return _monte_carlo(loss, f, n_nodes_or_draws, rng)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class LossConditionReport:
    """Outcome of checking regularity/convexity on a finite grid."""

    passed: bool
    violations: list = field(default_factory=list)  # (v, y, description)

    def __bool__(self) -> bool:
        return self.passed


def verify_loss_conditions(
    loss: LossFunction,
    v_grid: np.ndarray,
    y_grid: np.ndarray,
    fd_step: float = 1e-6,
    fd_tol: float = 1e-5,
) -> LossConditionReport:
    """Grid check of strict convexity, the Lipschitz bound on L' in y, and
    finite-difference consistency of L' with L."""
    report = LossConditionReport(passed=True)
    v_grid = np.asarray(v_grid, dtype=float)
    y_grid = np.asarray(y_grid, dtype=float)
    for v in v_grid:
        try:
            floor = float(loss.convexity_floor(v))
        except NotImplementedError:
            floor = 0.0
        if floor <= 0.0 and loss.kind in (SQUARE, LOGISTIC):
            report.violations.append((v, None, f"convexity floor {floor:.3e} not positive"))
        for y in y_grid:
            d2 = float(loss.d2(v, y))
            if d2 <= 0.0:
                report.violations.append((v, y, f"d2 = {d2:.3e} not positive"))
            if d2 + 1e-12 < floor:
                report.violations.append(
                    (v, y, f"d2 = {d2:.3e} below convexity floor {floor:.3e}")
                )
            fd = (float(loss.value(v + fd_step, y)) - float(loss.value(v - fd_step, y))) / (2 * fd_step)
            d1 = float(loss.d1(v, y))
            if abs(d1 - fd) > fd_tol * max(1.0, abs(d1)):
                report.violations.append((v, y, f"d1 = {d1:.6e} vs finite diff {fd:.6e}"))
        for y1 in y_grid:
            for y2 in y_grid:
                gap = abs(float(loss.d1(v, y1)) - float(loss.d1(v, y2)))
                bound = loss.lipschitz_d1 * abs(y1 - y2) + 1e-12
                if gap > bound:
                    report.violations.append(
                        (v, (y1, y2), f"Lipschitz violation: {gap:.3e} > {bound:.3e}")
                    )
    report.passed = not report.violations
    return report
