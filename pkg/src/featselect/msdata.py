"""Synthetic mass-spectrometry data models: Gaussian-shaped peak atoms,
per-channel baseline noise, and standardization of dictionaries / samples."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DimensionError, operator_norm, sym_sqrt
from .model import FactorModel, Nonlinearity


@dataclass(frozen=True)
class PeakSpec:
    """One Gaussian peak: height `intensity`, channel-unit `center` and
    `width` (the atom is intensity * exp(-(t - center)^2 / width^2))."""

    intensity: float
    center: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"peak width must be positive, got {self.width}")
        if self.intensity < 0:
            raise ValueError(f"peak intensity must be >= 0, got {self.intensity}")


@dataclass(frozen=True)
class MsModelSpec:
    """A full synthetic spectrum model: d channels, p peaks, per-channel
    baseline noise levels, signal covariance, sparse ground truth, and the
    l1 scaling parameter R."""

    d: int
    peaks: tuple[PeakSpec, ...]
    baseline: np.ndarray          # length-d noise stds, >= 0
    sigma: np.ndarray             # p x p covariance of the signal factors
    z_star_support: tuple[int, ...]
    z_star_values: tuple[float, ...]
    R: float

    def __post_init__(self):
        if len(self.peaks) < 1:
            raise ValueError("need at least one peak")
        baseline = np.broadcast_to(
            np.asarray(self.baseline, dtype=float), (self.d,)
        ).copy()
        if baseline.min() < 0:
            raise ValueError("baseline noise levels must be nonnegative")
        object.__setattr__(self, "baseline", baseline)
        object.__setattr__(self, "peaks", tuple(self.peaks))
        p = len(self.peaks)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (p, p):
            raise DimensionError(f"sigma must be {p}x{p}, got {sigma.shape}")
        object.__setattr__(self, "sigma", sigma)
        if len(self.z_star_support) != len(self.z_star_values):
            raise ValueError("z_star support and values must have equal length")
        if any(not 0 <= j < p for j in self.z_star_support):
            raise ValueError("z_star support indices must point at peaks")

    @property
    def p(self) -> int:
        return len(self.peaks)

    def z_star(self) -> np.ndarray:
        """Ground-truth signal, normalized so that ||sqrt(sigma) z|| = 1."""
        z = np.zeros(self.p)
        for j, v in zip(self.z_star_support, self.z_star_values):
            z[j] = v
        norm = np.linalg.norm(sym_sqrt(self.sigma) @ z)
        if norm == 0:
            raise ValueError("z_star must be non-zero")
        return z / norm

    @staticmethod
    def from_json_dict(doc: dict) -> "MsModelSpec":
        peaks = tuple(
            PeakSpec(float(pk["intensity"]), float(pk["center"]), float(pk["width"]))
            for pk in doc["peaks"]
        )
        p = len(peaks)
        sigma_spec = doc.get("sigma", "identity")
        if sigma_spec == "identity":
            sigma = np.eye(p)
        elif isinstance(sigma_spec, dict) and "diagonal" in sigma_spec:
            sigma = np.diag(np.asarray(sigma_spec["diagonal"], dtype=float))
        else:
            sigma = np.asarray(sigma_spec, dtype=float)
        return MsModelSpec(
            d=int(doc["d"]),
            peaks=peaks,
            baseline=np.asarray(doc.get("baseline", 0.0), dtype=float),
            sigma=sigma,
            z_star_support=tuple(int(j) for j in doc["z_star_support"]),
            z_star_values=tuple(float(v) for v in doc["z_star_values"]),
            R=float(doc["R"]),
        )

    @staticmethod
    def from_json(text: str) -> "MsModelSpec":
        return MsModelSpec.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class StandardizationReport:
    raw_stds: np.ndarray
    floor_flags: np.ndarray  # True where the variance floor was applied


def build_raw_dictionaries(spec: MsModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Raw feature dictionary (p x d, row k samples peak k on channels
    1..d) and raw diagonal noise dictionary (d x d of baseline stds)."""
    t = np.arange(1, spec.d + 1, dtype=float)
    D_raw = np.empty((spec.p, spec.d))
    for k, pk in enumerate(spec.peaks):
        D_raw[k] = pk.intensity * np.exp(-((t - pk.center) ** 2) / pk.width**2)
    N_raw = np.diag(spec.baseline)
    return D_raw, N_raw


def standardize_dictionaries(
    D_raw: np.ndarray,
    N_raw: np.ndarray,
    floor: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, StandardizationReport]:
    """Divide each extended column by its feature-variable std
    sqrt(||D'_j||^2 + ||N'_j||^2), flooring (and flagging) degenerate
    columns instead of dropping them."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    D_raw = np.atleast_2d(np.asarray(D_raw, dtype=float))
    N_raw = np.atleast_2d(np.asarray(N_raw, dtype=float))
    if N_raw.shape[1] != D_raw.shape[1]:
        raise DimensionError(
            f"column mismatch: D is {D_raw.shape}, N is {N_raw.shape}"
        )
    raw_stds = np.sqrt(
        np.einsum("ij,ij->j", D_raw, D_raw) + np.einsum("ij,ij->j", N_raw, N_raw)
    )
    floor_flags = raw_stds < floor
    divisors = np.where(floor_flags, floor, raw_stds)
    D = np.where(floor_flags, 0.0, D_raw / divisors)
    N = np.where(floor_flags, 0.0, N_raw / divisors)
    return D, N, StandardizationReport(raw_stds, floor_flags)


def empirical_standardize(
    X: np.ndarray,
    floor: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and rescale each column to zero mean / unit std using the
    population (1/m) variance. Constant columns are floored and map to
    zeros. Returns (X_std, means, stds)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 2:
        raise DimensionError(f"need at least 2 samples, got {X.shape[0]}")
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population convention
    divisors = np.where(stds < floor, floor, stds)
    return (X - means) / divisors, means, stds


def suggested_radius(s: int, sqrt_sigma_inv_norm: float = 1.0) -> float:
    """Heuristic l1 radius sqrt(s) * ||sqrt(Sigma)^-1|| for s-sparse targets."""
    if s < 1:
        raise ValueError("need s >= 1")
    return math.sqrt(s) * sqrt_sigma_inv_norm


def build_factor_model(
    spec: MsModelSpec,
    f: Nonlinearity,
    corrupt_fraction: float = 0.0,
) -> FactorModel:
    """Assemble the standardized factor model for a spectrum spec.

    Noise atoms are per-channel (q = d); channels with zero baseline and
    zero peak mass keep floored (zero) columns.
    """
    D_raw, N_raw = build_raw_dictionaries(spec)
    D, N, _ = standardize_dictionaries(D_raw, N_raw)
    if not np.any(N):  # zero baseline everywhere: drop the noise atoms (q = 0)
        N = np.zeros((0, spec.d))
    return FactorModel(
        A=D.T,
        B=N.T,
        sigma=spec.sigma,
        z_star=spec.z_star(),
        f=f,
        corrupt_fraction=corrupt_fraction,
    )


def sqrt_sigma_inv_norm(sigma: np.ndarray) -> float:
    """||sqrt(Sigma)^-1||, the operator norm of the inverse matrix root."""
    root = sym_sqrt(np.asarray(sigma, dtype=float))
    return operator_norm(np.linalg.inv(root))


def write_matrix_csv(path, matrix: np.ndarray, header: Sequence[str] | None = None) -> None:
    """Dump a dictionary or sample matrix as plain CSV for inspection."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    np.savetxt(
        path,
        matrix,
        delimiter=",",
        header=",".join(header) if header else "",
        comments="",
        fmt="%.17g",
    )
