"""Deterministic random streams and small dense-matrix primitives.

Everything downstream (sampling, solvers, Monte-Carlo verification) builds on
the two guarantees of this module: bit-reproducible random draws keyed by
``(master_seed, stream_id)``, and deterministic linear-algebra helpers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised on empty or non-conformant array shapes."""


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a matrix that must be PSD has a clearly negative eigenvalue."""


@dataclass(frozen=True)
class RngStream:
    """A reproducible, splittable random stream.

    The underlying generator is Philox (counter-based), keyed by the pair
    ``(master_seed, stream_id)``. Distinct keys yield statistically
    independent sequences, so one stream per trial parallelizes without
    shared state.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngStream":
        """Derive a further independent stream (used for per-chunk draws)."""
        mixed = (int(self.stream_id) * 0x9E3779B97F4A7C15 + int(offset)) % 2**64
        return RngStream(self.master_seed, mixed)


def sample_std_gaussian_vector(rng: RngStream | np.random.Generator, n: int) -> np.ndarray:
    """Draw n independent N(0,1) values, deterministically for a given stream."""
    if n < 1:
        raise DimensionError(f"need n >= 1, got n={n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return gen.standard_normal(n)


def sym_sqrt(sigma: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root S of sigma with S @ S == sigma.

    tol bounds both the accepted asymmetry and how negative an eigenvalue may
    be before the input is rejected; eigenvalues in (-tol, 0) are clamped to 0.
    Defaults to 1e-10 times the largest eigenvalue magnitude.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {sigma.shape}")
    scale = max(np.abs(sigma).max(), 1.0)
    if tol is None:
        tol = 1e-10 * scale
    asym = np.abs(sigma - sigma.T).max()
    if asym > tol:
        raise DimensionError(f"matrix not symmetric: max asymmetry {asym:.3e} > tol {tol:.3e}")
    sym = 0.5 * (sigma + sigma.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -tol:
        raise NotPositiveSemidefiniteError(
            f"eigenvalue {eigvals.min():.3e} below -tol ({-tol:.3e})"
        )
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (root + root.T)


def operator_norm(m: np.ndarray, rel_tol: float = 1e-9, max_iters: int = 10_000) -> float:
    """Largest singular value via power iteration on M^T M.

    The start vector is deterministic (all ones, normalized), so repeated
    calls give identical results.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={m.ndim}")
    if m.size == 0:
        return 0.0
    n = m.shape[1]
    v = np.ones(n) / np.sqrt(n)
    gram = m.T @ m
    prev = 0.0
    for _ in range(max_iters):
        w = gram @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        est = np.sqrt(float(v @ (gram @ v)))
        if abs(est - prev) <= rel_tol * max(est, 1e-300):
            return est
        prev = est
    return prev
