"""Symmetric-matrix primitives, task sampling and geometry constructors.

Convention used everywhere in the package: examples are the *columns* of
``X`` (shape ``d x n``), so a prompt geometry is ``S = X X^T / n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ArgumentError,
    DegenerateInputError,
    InfeasibleAngleError,
    NotPSDError,
)

Array = NDArray[np.float64]
ScaleMode = Literal["unit", "inv_dim"]
LossMode = Literal["mean", "sum"]

SYM_TOL = 1e-12
PSD_TOL = 1e-10


def rng_for(seed: int) -> np.random.Generator:
    """PCG64 generator; the only source of randomness in the package."""
    return np.random.default_rng(np.random.PCG64(int(seed)))


def is_symmetric(M: Array, tol: float = SYM_TOL) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return float(np.max(np.abs(M - M.T), initial=0.0)) <= tol * scale


def is_psd(M: Array, tol: float = PSD_TOL) -> bool:
    lam = np.linalg.eigvalsh(M)
    return bool(lam[0] >= -tol * max(abs(lam[-1]), np.finfo(float).tiny))


def as_sym(M, *, name: str = "matrix") -> Array:
    """Validate and return ``M`` as a float array, symmetrized to kill rounding asymmetry."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ArgumentError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ArgumentError(f"{name} has non-finite entries")
    if not is_symmetric(M, tol=1e-8):
        raise ArgumentError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def as_vector(v, d: int | None = None, *, name: str = "vector") -> Array:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ArgumentError(f"{name} must be 1-D, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise ArgumentError(f"{name} has length {v.shape[0]}, expected {d}")
    return v


@dataclass(frozen=True)
class TaskData:
    """A noiseless regression task; ``X`` is ``d x n`` and ``y = X^T target``."""

    X: Array
    y: Array
    target: Array
    seed: int = 0

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ObjectivePair:
    w_star: Array
    u_star: Array

    @property
    def delta(self) -> Array:
        return self.u_star - self.w_star

    @property
    def d(self) -> int:
        return self.w_star.shape[0]


def make_task(X, target, seed: int = 0) -> TaskData:
    """Wrap given data and latent weight into a TaskData with ``y = X^T target``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ArgumentError(f"X must be a non-empty d x n array, got shape {X.shape}")
    target = as_vector(target, X.shape[0], name="target")
    return TaskData(X=X, y=X.T @ target, target=target, seed=int(seed))


def generate_task(d: int, n: int, scale_mode: ScaleMode = "inv_dim", seed: int = 0) -> TaskData:
    """Sample X and the latent weight i.i.d. Gaussian with variance 1 or 1/d."""
    if int(d) != d or int(n) != n or d < 1 or n < 1:
        raise ArgumentError(f"d and n must be positive integers, got d={d}, n={n}")
    if scale_mode == "unit":
        std = 1.0
    elif scale_mode == "inv_dim":
        std = 1.0 / np.sqrt(d)
    else:
        raise ArgumentError(f"unknown scale_mode {scale_mode!r}")
    rng = rng_for(seed)
    X = std * rng.standard_normal((d, n))
    target = std * rng.standard_normal(d)
    return make_task(X, target, seed)


def sample_covariance(X) -> Array:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ArgumentError(f"X must be d x n with n >= 1, got shape {X.shape}")
    S = X @ X.T / X.shape[1]
    return 0.5 * (S + S.T)


def task_geometry(task: TaskData, loss_mode: LossMode = "mean") -> Array:
    """The matrix an exact-gradient agent multiplies by: X X^T / n (mean) or X X^T (sum)."""
    S = sample_covariance(task.X)
    if loss_mode == "mean":
        return S
    if loss_mode == "sum":
        return S * task.n
    raise ArgumentError(f"unknown loss_mode {loss_mode!r}")


def projector_onto(v) -> Array:
    v = as_vector(v, name="v")
    nrm2 = float(v @ v)
    if not nrm2 > 0.0:
        raise DegenerateInputError("cannot project onto the span of a zero vector")
    P = np.outer(v, v) / nrm2
    return 0.5 * (P + P.T)


def spd_factor(S) -> Array:
    """Return ``L`` with ``L L^T = S`` via ``L = Q diag(sqrt(lam))``; PSD rank-deficient input is fine."""
    S = as_sym(S, name="S")
    lam, Q = np.linalg.eigh(S)
    norm = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
    if lam[0] < -1e-8 * norm:
        raise NotPSDError(f"smallest eigenvalue {lam[0]:.3e} is negative (||S|| = {norm:.3e})")
    return Q * np.sqrt(np.clip(lam, 0.0, None))


def random_spd(d: int, eig_low: float, eig_high: float, seed: int) -> Array:
    """Random rotation of a spectrum drawn uniformly from [eig_low, eig_high]."""
    if d < 1 or not 0 < eig_low <= eig_high:
        raise ArgumentError("need d >= 1 and 0 < eig_low <= eig_high")
    rng = rng_for(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    lam = rng.uniform(eig_low, eig_high, size=d)
    S = (Q * lam) @ Q.T
    return 0.5 * (S + S.T)


def random_unit(d: int, rng: np.random.Generator) -> Array:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def orthogonal_unit(a: Array, rng: np.random.Generator) -> Array:
    """A random unit vector orthogonal to the unit vector ``a``."""
    for _ in range(16):
        b = rng.standard_normal(a.shape[0])
        b -= (b @ a) * a
        b -= (b @ a) * a
        nb = np.linalg.norm(b)
        if nb > 1e-8:
            return b / nb
    raise DegenerateInputError("could not draw a vector orthogonal to a")


def pair_with_angle(
    d: int, theta: float, norm_w: float = 1.0, norm_u: float = 1.0, seed: int = 0
) -> ObjectivePair:
    """Targets with prescribed norms and angle; the plane they span is uniformly random."""
    if d < 1:
        raise ArgumentError("d must be >= 1")
    if not 0.0 <= theta <= np.pi:
        raise ArgumentError(f"theta must lie in [0, pi], got {theta}")
    if not (norm_w > 0 and norm_u > 0):
        raise ArgumentError("norms must be positive")
    rng = rng_for(seed)
    a = random_unit(d, rng)
    if theta == 0.0:
        u_dir = a
    elif theta == np.pi:
        u_dir = -a
    elif d == 1:
        raise InfeasibleAngleError(f"angle {theta} is not realizable in one dimension")
    else:
        b = orthogonal_unit(a, rng)
        u_dir = np.cos(theta) * a + np.sin(theta) * b
        u_dir /= np.linalg.norm(u_dir)
    return ObjectivePair(w_star=norm_w * a, u_star=norm_u * u_dir)


def angle_between(a: Array, b: Array) -> float:
    # atan2 form keeps precision near 0 and pi where arccos does not
    cross = np.linalg.norm(np.linalg.norm(b) * a - np.linalg.norm(a) * b)
    par = np.linalg.norm(np.linalg.norm(b) * a + np.linalg.norm(a) * b)
    return float(2.0 * np.arctan2(cross, par))
