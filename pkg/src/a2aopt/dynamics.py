"""Exact alternating gradient dynamics between two agents and their fixed point.

W speaks first from ``u_0 = 0``::

    w_{t+1} = u_t     - eta S_W (u_t     - w*)
    u_{t+1} = w_{t+1} - eta S_U (w_{t+1} - u*)
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DivergenceError, SingularSystemError
from .geometry import Array, as_sym, as_vector

DIVERGENCE_NORM = 1e12
PLATEAU_FRACTION = 0.1


@dataclass(frozen=True)
class AgentSpec:
    geometry: Array
    target: Array
    eta: float

    def __post_init__(self):
        S = as_sym(self.geometry, name="geometry")
        t = as_vector(self.target, S.shape[0], name="target")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ArgumentError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "geometry", S)
        object.__setattr__(self, "target", t)

    @property
    def d(self) -> int:
        return self.target.shape[0]


@dataclass
class Trajectory:
    """Shared state after every half-turn plus per-agent error curves.

    ``iterates[0]`` is the initial state; odd rows follow agent W (speaker 1),
    even rows > 0 follow agent U (speaker 2).  ``err_w[k]`` is measured after
    W's k-th turn and ``err_u[k]`` after U's k-th turn.
    """

    iterates: Array
    err_w: list[float]
    err_u: list[float]
    converged: bool
    turns_run: int
    w_star: Array | None = None
    u_star: Array | None = None
    eta: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.iterates.shape[1]

    @property
    def final_w(self) -> Array:
        return self.iterates[2 * self.turns_run - 1]

    @property
    def final_u(self) -> Array:
        return self.iterates[2 * self.turns_run]

    def speakers(self) -> list[str]:
        return ["init"] + ["W" if k % 2 else "U" for k in range(1, len(self.iterates))]


def step_agent(state, spec: AgentSpec) -> Array:
    state = np.asarray(state, dtype=float)
    if state.shape != spec.target.shape:
        raise ArgumentError(f"state has shape {state.shape}, expected {spec.target.shape}")
    return state - spec.eta * (spec.geometry @ (state - spec.target))


def _check_pair(spec_w: AgentSpec, spec_u: AgentSpec) -> None:
    if spec_w.d != spec_u.d:
        raise ArgumentError(f"agents disagree on dimension: {spec_w.d} vs {spec_u.d}")
    if spec_w.eta != spec_u.eta:
        raise ArgumentError(f"agents disagree on eta: {spec_w.eta} vs {spec_u.eta}")


def check_finite_state(state: Array, turn: int) -> None:
    if not np.all(np.isfinite(state)):
        raise DivergenceError("non-finite state", turn)
    if np.linalg.norm(state) > DIVERGENCE_NORM:
        raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g}", turn)


def run_alternating(
    spec_w: AgentSpec,
    spec_u: AgentSpec,
    max_turns: int = 10_000,
    stop_tol: float = 1e-10,
    u0=None,
) -> Trajectory:
    """Iterate both updates until the full-turn displacement drops to ``stop_tol``."""
    _check_pair(spec_w, spec_u)
    if max_turns < 1:
        raise ArgumentError("max_turns must be >= 1")
    d = spec_w.d
    Sw, Su, ws, us, eta = spec_w.geometry, spec_u.geometry, spec_w.target, spec_u.target, spec_w.eta
    states = np.empty((2 * max_turns + 1, d))
    states[0] = 0.0 if u0 is None else as_vector(u0, d, name="u0")
    err_w: list[float] = []
    err_u: list[float] = []
    u = states[0].copy()
    converged = False
    turns = 0
    for t in range(1, max_turns + 1):
        w = u - eta * (Sw @ (u - ws))
        u_next = w - eta * (Su @ (w - us))
        check_finite_state(u_next, t)
        states[2 * t - 1] = w
        states[2 * t] = u_next
        err_w.append(float(np.linalg.norm(w - ws)))
        err_u.append(float(np.linalg.norm(u_next - us)))
        turns = t
        if np.linalg.norm(u_next - u) <= stop_tol:
            converged = True
            u = u_next
            break
        u = u_next
    return Trajectory(
        iterates=states[: 2 * turns + 1].copy(),
        err_w=err_w,
        err_u=err_u,
        converged=converged,
        turns_run=turns,
        w_star=ws.copy(),
        u_star=us.copy(),
        eta=eta,
    )


def plateau(errors, fraction: float = PLATEAU_FRACTION) -> float:
    """Mean of the last ``fraction`` of an error curve (at least one sample)."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ArgumentError("empty error curve")
    k = max(1, int(np.ceil(fraction * errors.size)))
    return float(np.mean(errors[-k:]))


@dataclass(frozen=True)
class Stability:
    stable: bool
    eta_max: float


def stability_check(eta: float, S_w, S_u) -> Stability:
    lam_w = float(np.linalg.eigvalsh(as_sym(S_w, name="S_w"))[-1])
    lam_u = float(np.linalg.eigvalsh(as_sym(S_u, name="S_u"))[-1])
    bounds = [2.0 / lam for lam in (lam_w, lam_u) if lam > 0]
    eta_max = min(bounds) if bounds else float("inf")
    return Stability(stable=bool(0 < eta < eta_max), eta_max=eta_max)


@dataclass(frozen=True)
class FixedPoint:
    w_inf: Array
    u_inf: Array
    spectral_norm_product: float
    condition: float
    residual: float


def solve_fixed_point(spec_w: AgentSpec, spec_u: AgentSpec) -> FixedPoint:
    """Solve ``(I - M_U M_W) u = eta (M_U S_W w* + S_U u*)`` directly, then recover ``w``."""
    _check_pair(spec_w, spec_u)
    d, eta = spec_w.d, spec_w.eta
    Sw, Su, ws, us = spec_w.geometry, spec_u.geometry, spec_w.target, spec_u.target
    if not stability_check(eta, Sw, Su).stable:
        warnings.warn(f"eta={eta} violates the contraction bound; fixed point may be unreachable",
                      RuntimeWarning, stacklevel=2)
    I = np.eye(d)
    Mw = I - eta * Sw
    Mu = I - eta * Su
    system = I - Mu @ Mw
    cond = float(np.linalg.cond(system))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystemError(f"I - M_U M_W is singular to working precision (cond={cond:.3e})")
    rhs = eta * (Mu @ (Sw @ ws) + Su @ us)
    u_inf = np.linalg.solve(system, rhs)
    w_inf = Mw @ u_inf + eta * (Sw @ ws)
    res = max(
        float(np.linalg.norm(w_inf - (Mw @ u_inf + eta * Sw @ ws))),
        float(np.linalg.norm(u_inf - (Mu @ w_inf + eta * Su @ us))),
    )
    return FixedPoint(
        w_inf=w_inf,
        u_inf=u_inf,
        spectral_norm_product=float(np.linalg.norm(Mu, 2) * np.linalg.norm(Mw, 2)),
        condition=cond,
        residual=res,
    )
