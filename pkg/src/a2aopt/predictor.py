"""Simulation-free prediction of the limiting errors of both agents.

Leading order in eta, with ``S = S_W + S_U`` and ``Delta = u* - w*``::

    u_inf - u* ~ -S^{-1} S_W Delta
    w_inf - w* ~  S^{-1} S_U Delta
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, BlindDirectionError
from .geometry import Array, ObjectivePair, as_sym, as_vector

MAX_CONDITION = 1e10


@dataclass(frozen=True)
class PlateauPrediction:
    err_u: float
    err_w: float
    resid_u: Array
    resid_w: Array
    order_eta_note: float


@dataclass(frozen=True)
class AngleBounds:
    lower_u: float
    upper_u: float
    lower_w: float
    upper_w: float
    alpha_u: float
    beta_u: float
    alpha_w: float
    beta_w: float
    theta: float


@dataclass(frozen=True)
class CommutingPlateaus:
    err_u_sq: float
    err_w_sq: float


def _sum_eig(S_w: Array, S_u: Array) -> tuple[Array, Array]:
    S = S_w + S_u
    lam, Q = np.linalg.eigh(0.5 * (S + S.T))
    if lam[0] <= 0 or lam[-1] / lam[0] > MAX_CONDITION:
        raise BlindDirectionError(
            "S_W + S_U is singular: the misalignment has a direction neither agent can see "
            f"(eigenvalues {lam[0]:.3e} .. {lam[-1]:.3e})"
        )
    return lam, Q


def _check(S_w, S_u) -> tuple[Array, Array]:
    S_w = as_sym(S_w, name="S_w")
    S_u = as_sym(S_u, name="S_u")
    if S_w.shape != S_u.shape:
        raise ArgumentError(f"geometry shapes differ: {S_w.shape} vs {S_u.shape}")
    return S_w, S_u


def plateau_prediction(S_w, S_u, pair: ObjectivePair, eta: float = 0.0) -> PlateauPrediction:
    S_w, S_u = _check(S_w, S_u)
    delta = as_vector(pair.delta, S_w.shape[0], name="delta")
    lam, Q = _sum_eig(S_w, S_u)
    s_inv = lambda x: Q @ ((Q.T @ x) / lam)  # noqa: E731
    resid_u = -s_inv(S_w @ delta)
    resid_w = s_inv(S_u @ delta)
    return PlateauPrediction(
        err_u=float(np.linalg.norm(resid_u)),
        err_w=float(np.linalg.norm(resid_w)),
        resid_u=resid_u,
        resid_w=resid_w,
        order_eta_note=float(eta),
    )


def weighted_forms(S_w, S_u) -> tuple[Array, Array]:
    """``(S_W S^-2 S_W, S_U S^-2 S_U)`` with ``S^-2`` taken from the eigendecomposition of S."""
    S_w, S_u = _check(S_w, S_u)
    lam, Q = _sum_eig(S_w, S_u)
    s_inv2 = (Q / lam**2) @ Q.T
    C_u = S_w @ s_inv2 @ S_w
    C_w = S_u @ s_inv2 @ S_u
    return 0.5 * (C_u + C_u.T), 0.5 * (C_w + C_w.T)


def exact_residuals(S_w, S_u, pair: ObjectivePair, eta: float) -> tuple[Array, Array]:
    """Fixed-point residuals at finite eta: ``r_U = -(I-H) Delta``, ``r_W = M_W H Delta``."""
    S_w, S_u = _check(S_w, S_u)
    d = S_w.shape[0]
    delta = as_vector(pair.delta, d, name="delta")
    I = np.eye(d)
    H = np.linalg.solve(S_w + S_u - eta * S_u @ S_w, S_u)
    r_u = -(I - H) @ delta
    r_w = (I - eta * S_w) @ (H @ delta)
    return r_u, r_w


def commuting_plateaus(lam_w, lam_u, delta_tilde) -> CommutingPlateaus:
    lam_w = as_vector(lam_w, name="lam_w")
    lam_u = as_vector(lam_u, lam_w.shape[0], name="lam_u")
    dt = as_vector(delta_tilde, lam_w.shape[0], name="delta_tilde")
    tot = lam_w + lam_u
    if np.any(tot <= 0):
        raise BlindDirectionError(f"mode(s) {np.flatnonzero(tot <= 0).tolist()} are blind to both agents")
    return CommutingPlateaus(
        err_u_sq=float(np.sum((lam_w / tot) ** 2 * dt**2)),
        err_w_sq=float(np.sum((lam_u / tot) ** 2 * dt**2)),
    )


def r_min(theta):
    return np.minimum(1.0, np.sqrt(np.clip(1.0 - np.cos(theta), 0.0, None)))


def r_max(theta):
    return np.maximum(1.0, np.sqrt(np.clip(1.0 - np.cos(theta), 0.0, None)))


def angle_bounds(S_w, S_u, theta: float) -> AngleBounds:
    """Envelopes for the plateau normalized by ``sqrt(|w*|^2 + |u*|^2)``."""
    if not 0.0 <= theta <= np.pi:
        raise ArgumentError(f"theta must lie in [0, pi], got {theta}")
    C_u, C_w = weighted_forms(S_w, S_u)
    ev_u = np.clip(np.linalg.eigvalsh(C_u), 0.0, None)
    ev_w = np.clip(np.linalg.eigvalsh(C_w), 0.0, None)
    a_u, b_u = float(np.sqrt(ev_u[0])), float(np.sqrt(ev_u[-1]))
    a_w, b_w = float(np.sqrt(ev_w[0])), float(np.sqrt(ev_w[-1]))
    lo, hi = float(r_min(theta)), float(r_max(theta))
    return AngleBounds(
        lower_u=a_u * lo, upper_u=b_u * hi,
        lower_w=a_w * lo, upper_w=b_w * hi,
        alpha_u=a_u, beta_u=b_u, alpha_w=a_w, beta_w=b_w,
        theta=float(theta),
    )
