"""Convex constraint sets (scaled l1/l2 balls, finite-vertex polytopes),
their Euclidean projections and support functions, and Monte-Carlo
estimators / closed-form upper bounds for Gaussian mean width and
effective dimension."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError, RngStream, operator_norm

L1_BALL = "l1_ball"
L2_BALL = "l2_ball"
POLYTOPE = "polytope"

POLYTOPE_PROJ_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintSet:
    """A bounded convex set K containing the origin."""

    kind: str
    dim: int
    radius: float = 0.0
    vertices: Optional[np.ndarray] = None  # k x dim, polytope only

    def __post_init__(self):
        if self.kind in (L1_BALL, L2_BALL):
            if self.radius <= 0.0:
                raise ValueError(f"ball radius must be positive, got {self.radius}")
        elif self.kind == POLYTOPE:
            verts = np.atleast_2d(np.asarray(self.vertices, dtype=float))
            if verts.shape[0] < 1 or verts.shape[1] != self.dim:
                raise DimensionError(f"polytope vertices must be k x {self.dim}")
            object.__setattr__(self, "vertices", verts)
            # 0 in K is required; verify by a min-norm-point feasibility solve.
            dist = np.linalg.norm(_min_norm_point(verts))
            if dist > POLYTOPE_PROJ_TOL:
                raise ValueError(
                    f"polytope must contain the origin (distance {dist:.3e})"
                )
        else:
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    def scaled(self, factor: float) -> "ConstraintSet":
        """The set factor * K (used to realize mu * beta in K)."""
        if factor == 0.0:
            raise ValueError("cannot scale a constraint set by 0")
        if self.kind == POLYTOPE:
            return polytope(self.vertices * factor)
        return ConstraintSet(self.kind, self.dim, radius=self.radius * abs(factor))


def l1_ball(radius: float, dim: int) -> ConstraintSet:
    return ConstraintSet(L1_BALL, dim, radius=radius)


def l2_ball(radius: float, dim: int) -> ConstraintSet:
    return ConstraintSet(L2_BALL, dim, radius=radius)


def polytope(vertices: np.ndarray) -> ConstraintSet:
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    return ConstraintSet(POLYTOPE, vertices.shape[1], vertices=vertices)


def _project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Exact sort-and-threshold projection onto the l1 ball."""
    if np.abs(v).sum() <= radius:
        return v.copy()
    a = np.sort(np.abs(v))[::-1]
    cumsum = np.cumsum(a)
    idx = np.arange(1, len(a) + 1)
    positive = a - (cumsum - radius) / idx > 0
    rho = int(np.nonzero(positive)[0].max())
    theta = (cumsum[rho] - radius) / (rho + 1)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def _min_norm_point(points: np.ndarray, max_iters: Optional[int] = None) -> np.ndarray:
    """Wolfe's min-norm-point algorithm over the convex hull of the rows."""
    k = points.shape[0]
    if max_iters is None:
        max_iters = max(10 * k, 100)
    norms = np.einsum("ij,ij->i", points, points)
    active = [int(np.argmin(norms))]
    lam = np.array([1.0])
    x = points[active[0]].copy()
    for _ in range(max_iters):
        scores = points @ x
        j = int(np.argmin(scores))
        gap = float(x @ x) - float(scores[j])
        if gap <= POLYTOPE_PROJ_TOL**2 or j in active:
            return x
        active.append(j)
        lam = np.append(lam, 0.0)
        # minor cycles: restrict to the affine min-norm point over the
        # active set, dropping vertices whose weight would turn negative
        for _ in range(max_iters):
            sub = points[active]
            gram = sub @ sub.T
            n_act = len(active)
            lhs = np.zeros((n_act + 1, n_act + 1))
            lhs[0, 1:] = 1.0
            lhs[1:, 0] = 1.0
            lhs[1:, 1:] = gram
            rhs = np.zeros(n_act + 1)
            rhs[0] = 1.0
            try:
                sol = np.linalg.solve(lhs, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
            alpha = sol[1:]
            if np.all(alpha > 1e-12):
                lam = alpha
                x = lam @ sub
                break
            neg = alpha <= 1e-12
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(np.min(ratios))
            lam = (1.0 - theta) * lam + theta * alpha
            lam[lam < 1e-12] = 0.0
            keep = lam > 0.0
            active = [a for a, kf in zip(active, keep) if kf]
            lam = lam[keep]
            lam /= lam.sum()
            x = lam @ points[active]
    raise RuntimeError(
        f"min-norm-point did not reach tolerance {POLYTOPE_PROJ_TOL} "
        f"within {max_iters} iterations"
    )


def project(k: ConstraintSet, v: np.ndarray) -> np.ndarray:
    """Euclidean projection of v onto K."""
    v = np.asarray(v, dtype=float)
    if v.shape != (k.dim,):
        raise DimensionError(f"vector has shape {v.shape}, set has dim {k.dim}")
    if k.kind == L1_BALL:
        return _project_l1(v, k.radius)
    if k.kind == L2_BALL:
        norm = np.linalg.norm(v)
        if norm <= k.radius:
            return v.copy()
        return v * (k.radius / norm)
    # polytope: min-norm point of the vertex set shifted by -v
    return v + _min_norm_point(k.vertices - v)


def support_function(k: ConstraintSet, g: np.ndarray) -> float:
    """sup_{x in K} <g, x>, evaluated exactly."""
    g = np.asarray(g, dtype=float)
    if g.shape != (k.dim,):
        raise DimensionError(f"vector has shape {g.shape}, set has dim {k.dim}")
    if k.kind == L1_BALL:
        return k.radius * float(np.abs(g).max())
    if k.kind == L2_BALL:
        return k.radius * float(np.linalg.norm(g))
    scores = k.vertices @ g
    return float(scores[int(np.argmax(scores))])  # argmax: lowest index on ties


def distance(k: ConstraintSet, v: np.ndarray) -> float:
    """Euclidean distance from v to K (0 when feasible)."""
    return float(np.linalg.norm(np.asarray(v, dtype=float) - project(k, v)))


@dataclass(frozen=True)
class SetImage:
    """The image M @ K of a constraint set under a linear map (rows x dim)."""

    base: ConstraintSet
    map: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.map, dtype=float))
        object.__setattr__(self, "map", m)
        if m.shape[1] != self.base.dim:
            raise DimensionError(
                f"map has {m.shape[1]} columns, base set has dim {self.base.dim}"
            )


def identity_image(k: ConstraintSet) -> SetImage:
    return SetImage(k, np.eye(k.dim))


def _batch_support(k: ConstraintSet, G: np.ndarray) -> np.ndarray:
    """support_function of K at each row of G (vectorized)."""
    if k.kind == L1_BALL:
        return k.radius * np.abs(G).max(axis=1)
    if k.kind == L2_BALL:
        return k.radius * np.linalg.norm(G, axis=1)
    return (G @ k.vertices.T).max(axis=1)


def mean_width_mc(img: SetImage, n_draws: int, rng: RngStream) -> tuple[float, float]:
    """Monte-Carlo estimate of the Gaussian mean width of M @ K.

    Uses sup_{x in MK} <g, x> = sup_{b in K} <M^T g, b>, averaging the exact
    support function over standard Gaussian draws in the image space.
    Returns (estimate, standard error).
    """
    if n_draws < 2:
        raise ValueError(f"need at least 2 draws, got {n_draws}")
    gen = rng.generator()
    rows = img.map.shape[0]
    chunk = 100_000
    total, total_sq, seen = 0.0, 0.0, 0
    while seen < n_draws:
        n = min(chunk, n_draws - seen)
        G = gen.standard_normal((n, rows))
        vals = _batch_support(img.base, G @ img.map)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        seen += n
    mean = total / n_draws
    var = max(total_sq / n_draws - mean**2, 0.0) * n_draws / (n_draws - 1)
    return mean, math.sqrt(var / n_draws)


def effdim_mc(img: SetImage, n_draws: int, rng: RngStream) -> tuple[float, float]:
    """Squared mean width estimate with delta-method standard error."""
    width, stderr = mean_width_mc(img, n_draws, rng)
    return width**2, 2.0 * abs(width) * stderr


def bound_sparse(s: int, n: int) -> float:
    """Effective-dimension scale of s-sparse unit vectors in R^n (unit
    constant): s * log(2n / s)."""
    if s < 1 or n < 1:
        raise ValueError("need s >= 1 and n >= 1")
    return s * math.log(2.0 * n / s)


def bound_polytope(vertices: np.ndarray) -> float:
    """(max vertex norm)^2 * log(max(k, 2)) for a k-vertex polytope."""
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    max_norm_sq = float((np.linalg.norm(vertices, axis=1) ** 2).max())
    return max_norm_sq * math.log(max(vertices.shape[0], 2))


def bound_slepian(map_matrix: np.ndarray, effdim_k: float) -> float:
    """Slepian comparison bound ||M||^2 * effdim(K) for the image M @ K."""
    return operator_norm(np.asarray(map_matrix, dtype=float)) ** 2 * effdim_k


def bound_l1_image(R: float, dmax: float, d: int) -> float:
    """R^2 * dmax^2 * log(2d): effective-dimension scale of the image of a
    scaled l1 ball, dmax being the largest column norm of the dictionary."""
    if d < 1:
        raise ValueError("need d >= 1")
    return R**2 * dmax**2 * math.log(2.0 * d)
