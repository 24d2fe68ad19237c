"""Asymmetric-convergence criterion and the white-box attack geometry.

Agent U (the attacker) reaches u* exactly while W keeps a residual iff

    (I - eta S_U) S_W Delta = 0    and    (eta S_W - I) Delta != 0.

The attack puts an eigenvalue spike 1/eta of S_U on ``v = S_W Delta`` and
keeps S_U isotropic (eigenvalue epsilon) on the orthogonal complement.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import (
    ArgumentError,
    BlindAttackError,
    DegenerateInputError,
    InfeasibleAttackError,
)
from .geometry import Array, LossMode, ObjectivePair, as_sym, as_vector, projector_onto, spd_factor

TOL_ABS = 1e-9
TOL_REL = 1e-8


@dataclass(frozen=True)
class AsymmetryDiagnosis:
    cancel_norm: float
    escape_norm: float
    holds: bool


@dataclass(frozen=True)
class AttackDesign:
    S_u: Array
    X_u: Array
    v: Array
    epsilon: float
    eta: float
    tau: float
    diagnosis: AsymmetryDiagnosis
    loss_mode: str = "mean"

    @property
    def n(self) -> int:
        return self.X_u.shape[1]

    def to_dict(self) -> dict:
        return {
            "S_u": self.S_u.tolist(),
            "X_u": self.X_u.tolist(),
            "v": self.v.tolist(),
            "epsilon": self.epsilon,
            "eta": self.eta,
            "tau": self.tau,
            "loss_mode": self.loss_mode,
            "diagnosis": {
                "cancel_norm": self.diagnosis.cancel_norm,
                "escape_norm": self.diagnosis.escape_norm,
                "holds": self.diagnosis.holds,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackDesign":
        S_u = as_sym(np.array(data["S_u"], dtype=float), name="S_u")
        X_u = np.array(data["X_u"], dtype=float)
        v = as_vector(np.array(data["v"], dtype=float), S_u.shape[0], name="v")
        if X_u.ndim != 2 or X_u.shape[0] != S_u.shape[0]:
            raise ArgumentError(f"X_u has shape {X_u.shape}, expected ({S_u.shape[0]}, n)")
        diag = data["diagnosis"]
        return cls(
            S_u=S_u, X_u=X_u, v=v,
            epsilon=float(data["epsilon"]), eta=float(data["eta"]), tau=float(data["tau"]),
            diagnosis=AsymmetryDiagnosis(float(diag["cancel_norm"]), float(diag["escape_norm"]),
                                         bool(diag["holds"])),
            loss_mode=str(data.get("loss_mode", "mean")),
        )

    @classmethod
    def from_json(cls, text: str) -> "AttackDesign":
        return cls.from_dict(json.loads(text))


def check_asymmetric(
    S_w, S_u, pair: ObjectivePair, eta: float, tol_abs: float = TOL_ABS, tol_rel: float = TOL_REL
) -> AsymmetryDiagnosis:
    S_w = as_sym(S_w, name="S_w")
    S_u = as_sym(S_u, name="S_u")
    d = S_w.shape[0]
    delta = as_vector(pair.delta, d, name="delta")
    nd = float(np.linalg.norm(delta))
    if nd == 0.0:
        raise DegenerateInputError("Delta = 0: the asymmetry criterion is vacuous")
    I = np.eye(d)
    cancel = float(np.linalg.norm((I - eta * S_u) @ (S_w @ delta)))
    escape = float(np.linalg.norm((eta * S_w - I) @ delta))
    thr = tol_abs + tol_rel * nd
    return AsymmetryDiagnosis(cancel_norm=cancel, escape_norm=escape, holds=bool(cancel <= thr and escape > thr))


def victim_residual(S_w, pair: ObjectivePair, eta: float) -> float:
    """Predicted ``|w_inf - w*|`` when the attacker converges exactly: ``|(eta S_W - I) Delta|``."""
    S_w = as_sym(S_w, name="S_w")
    return float(np.linalg.norm((eta * S_w - np.eye(S_w.shape[0])) @ pair.delta))


def realize_geometry(S, n: int, loss_mode: LossMode = "mean") -> Array:
    """Deterministic ``d x n`` data whose geometry is exactly S: ``scale * [L | 0]``."""
    L = spd_factor(S)
    d = L.shape[0]
    norms = np.linalg.norm(L, axis=0)
    cols = L[:, norms > 1e-12 * max(float(norms.max()), np.finfo(float).tiny)]
    if n < cols.shape[1]:
        raise ArgumentError(f"need at least {cols.shape[1]} columns to realize this geometry, got n={n}")
    X = np.zeros((d, n))
    X[:, : cols.shape[1]] = cols
    if loss_mode == "mean":
        X *= np.sqrt(n)
    elif loss_mode != "sum":
        raise ArgumentError(f"unknown loss_mode {loss_mode!r}")
    return X


def design_attack(
    S_w,
    pair: ObjectivePair,
    eta: float,
    tau: float = 0.1,
    n: int | None = None,
    epsilon: float | None = None,
    loss_mode: LossMode = "mean",
    tol: float = TOL_REL,
) -> AttackDesign:
    S_w = as_sym(S_w, name="S_w")
    d = S_w.shape[0]
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    delta = as_vector(pair.delta, d, name="delta")
    nd = float(np.linalg.norm(delta))
    if nd == 0.0:
        raise DegenerateInputError("Delta = 0: nothing to attack")
    v = S_w @ delta
    scale = max(float(np.linalg.norm(S_w, 2)), np.finfo(float).tiny)
    if np.linalg.norm(v) <= tol * scale * nd:
        raise BlindAttackError("S_W annihilates Delta; the spike direction v = S_W Delta is undefined")
    if np.linalg.norm(v - delta / eta) <= tol * nd / eta:
        raise InfeasibleAttackError(
            f"Delta is an eigenvector of S_W with eigenvalue 1/eta = {1 / eta:g}; choose a different eta"
        )
    if epsilon is None:
        if not 0 < tau < 1:
            raise ArgumentError(f"tau must lie in (0, 1), got {tau}")
        epsilon = (1.0 - tau) / eta
    if not 0 < epsilon < 1.0 / eta:
        raise ArgumentError(f"epsilon must lie in (0, 1/eta) = (0, {1 / eta:g}), got {epsilon}")
    P = projector_onto(v)
    S_u = P / eta + epsilon * (np.eye(d) - P)
    S_u = 0.5 * (S_u + S_u.T)
    X_u = realize_geometry(S_u, d if n is None else int(n), loss_mode)
    return AttackDesign(
        S_u=S_u, X_u=X_u, v=v, epsilon=float(epsilon), eta=float(eta), tau=float(tau),
        diagnosis=check_asymmetric(S_w, S_u, pair, eta),
        loss_mode=loss_mode,
    )


@dataclass(frozen=True)
class AttackOutcome:
    success: bool
    final_err_w: float
    final_err_u: float


def default_thresholds(pair: ObjectivePair) -> tuple[float, float]:
    """Victim threshold ``0.1 |Delta|`` and attacker threshold ``1e-3 max(1, |u*|)``."""
    return 0.1 * float(np.linalg.norm(pair.delta)), 1e-3 * max(1.0, float(np.linalg.norm(pair.u_star)))


def evaluate_attack(
    traj: Trajectory,
    pair: ObjectivePair,
    eps_victim: float | None = None,
    eps_attacker: float | None = None,
) -> AttackOutcome:
    """Success iff the victim stays farther than eps_victim and the attacker closer than eps_attacker."""
    if not traj.err_w or not traj.err_u:
        raise ArgumentError("trajectory is empty")
    e1, e2 = default_thresholds(pair)
    e1 = e1 if eps_victim is None else eps_victim
    e2 = e2 if eps_attacker is None else eps_attacker
    err_w = float(np.linalg.norm(traj.final_w - pair.w_star))
    err_u = float(np.linalg.norm(traj.final_u - pair.u_star))
    return AttackOutcome(success=bool(err_w > e1 and err_u < e2), final_err_w=err_w, final_err_u=err_u)
