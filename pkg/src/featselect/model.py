"""Generative factor models: hidden signal factors, noise factors, and
non-linear (possibly random) observation rules, plus optional adversarial
label corruption."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DimensionError, RngStream, sym_sqrt

SIGN_KIND = "sign"
IDENTITY_KIND = "identity"
LINEAR_NOISE_KIND = "linear_noise"
BIT_FLIP_KIND = "bit_flip"


def sign0(u: np.ndarray) -> np.ndarray:
    """Sign with the measure-zero convention sign(0) := +1."""
    return np.where(np.asarray(u) >= 0.0, 1.0, -1.0)


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar observation rule y = f(<s, z_star>).

    Randomness is observation-wise: each sample gets an independent nuisance
    draw (the additive noise of ``linear_noise``, the +/-1 multiplier of
    ``bit_flip``). The nuisance draws are exposed separately so that true and
    rescaled outputs can share them.
    """

    kind: str
    scale: float = 1.0       # linear_noise slope
    noise_std: float = 0.0   # linear_noise additive noise std
    keep_prob: float = 1.0   # bit_flip probability of keeping the sign

    def __post_init__(self):
        if self.kind not in (SIGN_KIND, IDENTITY_KIND, LINEAR_NOISE_KIND, BIT_FLIP_KIND):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if not 0.0 <= self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must lie in [0, 1], got {self.keep_prob}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    @staticmethod
    def sign() -> "Nonlinearity":
        return Nonlinearity(SIGN_KIND)

    @staticmethod
    def identity() -> "Nonlinearity":
        return Nonlinearity(IDENTITY_KIND)

    @staticmethod
    def linear_noise(scale: float, noise_std: float) -> "Nonlinearity":
        return Nonlinearity(LINEAR_NOISE_KIND, scale=scale, noise_std=noise_std)

    @staticmethod
    def bit_flip(keep_prob: float) -> "Nonlinearity":
        return Nonlinearity(BIT_FLIP_KIND, keep_prob=keep_prob)

    @property
    def observation_domain(self) -> str:
        if self.kind in (SIGN_KIND, BIT_FLIP_KIND):
            return "{-1,+1}"
        return "reals"

    @property
    def is_random(self) -> bool:
        return self.kind == BIT_FLIP_KIND or (
            self.kind == LINEAR_NOISE_KIND and self.noise_std > 0.0
        )

    def draw_nuisance(self, m: int, gen: np.random.Generator) -> Optional[np.ndarray]:
        """One independent nuisance draw per observation, or None if f is
        deterministic."""
        if self.kind == LINEAR_NOISE_KIND:
            return self.noise_std * gen.standard_normal(m)
        if self.kind == BIT_FLIP_KIND:
            return np.where(gen.random(m) < self.keep_prob, 1.0, -1.0)
        return None

    def apply(self, u: np.ndarray, xi: Optional[np.ndarray] = None) -> np.ndarray:
        """Evaluate f at u, reusing the given nuisance draws."""
        u = np.asarray(u, dtype=float)
        if self.kind == SIGN_KIND:
            return sign0(u)
        if self.kind == IDENTITY_KIND:
            return u.copy()
        if self.kind == LINEAR_NOISE_KIND:
            out = self.scale * u
            if xi is not None:
                out = out + xi
            return out
        # bit flip
        if xi is None:
            raise ValueError("bit_flip evaluation requires nuisance draws")
        return xi * sign0(u)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scale": self.scale,
            "noise_std": self.noise_std,
            "keep_prob": self.keep_prob,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "Nonlinearity":
        return Nonlinearity(
            kind=doc["kind"],
            scale=float(doc.get("scale", 1.0)),
            noise_std=float(doc.get("noise_std", 0.0)),
            keep_prob=float(doc.get("keep_prob", 1.0)),
        )


@dataclass(frozen=True)
class FactorModel:
    """The generative triple (feature atoms A, noise atoms B, covariance
    Sigma) together with the ground-truth signal and observation rule.

    A has the p feature atoms as columns (d x p), B the q noise atoms
    (d x q, q may be 0). Normalization ||sqrt(Sigma) z_star|| = 1 is enforced
    at construction.
    """

    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    z_star: np.ndarray
    f: Nonlinearity
    corrupt_fraction: float = 0.0
    sqrt_sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.size == 0:
            B = np.zeros((A.shape[0], 0))
        B = np.atleast_2d(B)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        z_star = np.atleast_1d(np.asarray(self.z_star, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "z_star", z_star)
        d, p = A.shape
        if B.shape[0] != d:
            raise DimensionError(f"A has d={d} rows but B has {B.shape[0]}")
        if sigma.shape != (p, p):
            raise DimensionError(f"sigma must be {p}x{p}, got {sigma.shape}")
        if z_star.shape != (p,):
            raise DimensionError(f"z_star must have length {p}, got {z_star.shape}")
        if not 0.0 <= self.corrupt_fraction <= 1.0:
            raise ValueError("corrupt_fraction must lie in [0, 1]")
        root = sym_sqrt(sigma)
        eigmin = np.linalg.eigvalsh(sigma).min()
        if eigmin <= 0.0:
            raise ValueError(f"sigma must be positive definite, min eigenvalue {eigmin:.3e}")
        norm = np.linalg.norm(root @ z_star)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(
                f"||sqrt(sigma) z_star|| must equal 1, got {norm:.12f}"
            )
        object.__setattr__(self, "sqrt_sigma", root)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[1]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "p": self.p,
            "q": self.q,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "sigma": "identity" if np.allclose(self.sigma, np.eye(self.p)) else self.sigma.tolist(),
            "z_star": self.z_star.tolist(),
            "nonlinearity": self.f.to_json_dict(),
            "corrupt_fraction": self.corrupt_fraction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @staticmethod
    def from_json_dict(doc: dict) -> "FactorModel":
        p = int(doc["p"]) if "p" in doc else np.asarray(doc["A"]).shape[1]
        sigma_spec = doc.get("sigma", "identity")
        if sigma_spec == "identity":
            sigma = np.eye(p)
        elif isinstance(sigma_spec, dict) and "diagonal" in sigma_spec:
            sigma = np.diag(np.asarray(sigma_spec["diagonal"], dtype=float))
        else:
            sigma = np.asarray(sigma_spec, dtype=float)
        A = np.asarray(doc["A"], dtype=float)
        B = np.asarray(doc.get("B", []), dtype=float)
        if B.size == 0:
            B = np.zeros((A.shape[0], 0))
        return FactorModel(
            A=A,
            B=B,
            sigma=sigma,
            z_star=np.asarray(doc["z_star"], dtype=float),
            f=Nonlinearity.from_json_dict(doc["nonlinearity"]),
            corrupt_fraction=float(doc.get("corrupt_fraction", 0.0)),
        )

    @staticmethod
    def from_json(text: str) -> "FactorModel":
        return FactorModel.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class SampleSet:
    """Raw samples plus retained ground truth for diagnostics.

    The estimator only ever sees (X, y); the factors S, Nfac, the clean
    labels y0, and the nuisance draws xi exist for verification code.
    """

    X: np.ndarray
    y: np.ndarray
    y0: np.ndarray
    S: np.ndarray
    Nfac: np.ndarray
    xi: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.X.shape[0]


def sample(model: FactorModel, m: int, rng: RngStream) -> SampleSet:
    """Draw m samples: s_i ~ N(0, Sigma), n_i ~ N(0, I_q),
    x_i = A s_i + B n_i, y0_i = f(<s_i, z_star>), with deterministic
    adversarial corruption of the first ceil(psi*m) labels."""
    if m < 1:
        raise DimensionError(f"need m >= 1, got {m}")
    gen = rng.generator()
    # Draw order is fixed: signal factors, noise factors, nuisance.
    S = gen.standard_normal((m, model.p)) @ model.sqrt_sigma
    Nfac = gen.standard_normal((m, model.q)) if model.q > 0 else np.zeros((m, 0))
    xi = model.f.draw_nuisance(m, gen)
    X = S @ model.A.T
    if model.q > 0:
        X = X + Nfac @ model.B.T
    y0 = model.f.apply(S @ model.z_star, xi)
    y = y0.copy()
    n_corrupt = int(np.ceil(model.corrupt_fraction * m)) if model.corrupt_fraction > 0 else 0
    if n_corrupt > 0:
        if model.f.observation_domain == "{-1,+1}":
            y[:n_corrupt] = -y[:n_corrupt]
        else:
            y[:n_corrupt] = y[:n_corrupt] + 2.0
    return SampleSet(X=X, y=y, y0=y0, S=S, Nfac=Nfac, xi=xi)


def adversarial_epsilon(ss: SampleSet) -> float:
    """Root-mean-square deviation of the corrupted labels from the clean
    single-index outputs."""
    return float(np.sqrt(np.mean((ss.y0 - ss.y) ** 2)))


def extended_dictionary(model: FactorModel) -> np.ndarray:
    """Stack the feature dictionary D = A^T on top of the noise dictionary
    N = B^T, giving a (p+q) x d matrix."""
    return np.vstack([model.A.T, model.B.T])


def sigma_weighted_extended_dictionary(model: FactorModel) -> np.ndarray:
    """Like extended_dictionary but with top block sqrt(Sigma) @ D."""
    return np.vstack([model.sqrt_sigma @ model.A.T, model.B.T])
