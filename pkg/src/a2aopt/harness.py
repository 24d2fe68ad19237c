"""Agent backends, the model-agnostic interaction loop and experiment protocols.

Output files (all written atomically):

``trajectory.csv``
    ``turn, speaker, err_w, err_u, state_0 .. state_{d-1}``; one row per
    half-step, row 0 is the initial state.  ``turn`` counts half-steps.
``plateaus.csv``
    ``theta, seed, plateau_w, plateau_u, lower_w, upper_w, lower_u, upper_u,
    predicted_w, predicted_u, stable, config_hash``; plateaus normalized by
    ``sqrt(|w*|^2 + |u*|^2)``.
``curves.csv``
    ``turn, mean_err_w, std_err_w, mean_err_u, std_err_u`` over seeds.
``report.json``
    The ExperimentReport without wall-clock fields (``run_meta.json`` has those).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Protocol, Sequence

import numpy as np

from .adversary import design_attack, evaluate_attack, victim_residual
from .dynamics import Trajectory, check_finite_state, plateau, stability_check
from .errors import (
    ArgumentError,
    BackendError,
    BlindAttackError,
    ConfigError,
    DivergenceError,
    InfeasibleAttackError,
)
from .geometry import (
    Array,
    LossMode,
    ObjectivePair,
    TaskData,
    generate_task,
    make_task,
    orthogonal_unit,
    pair_with_angle,
    rng_for,
    task_geometry,
)
from .lsa import LsaParams, lsa_predict
from .predictor import angle_bounds, plateau_prediction

Kind = Literal["converge", "angle_sweep", "attack"]
GapType = Literal["orthogonal", "scaled", "opposite"]


class AgentBackend(Protocol):
    def __call__(self, task: TaskData, history: Array) -> Array: ...


def oracle_gradient(task: TaskData, w, loss_mode: LossMode = "mean") -> Array:
    w = np.asarray(w, dtype=float)
    if w.shape != (task.d,):
        raise ArgumentError(f"w has shape {w.shape}, expected ({task.d},)")
    g = task.X @ (task.X.T @ w - task.y)
    if loss_mode == "mean":
        return g / task.n
    if loss_mode == "sum":
        return g
    raise ArgumentError(f"unknown loss_mode {loss_mode!r}")


class ExactOracle:
    """Exact least-squares gradient at the newest iterate."""

    def __init__(self, loss_mode: LossMode = "mean"):
        self.loss_mode = loss_mode

    def __call__(self, task: TaskData, history: Array) -> Array:
        return oracle_gradient(task, history[-1], self.loss_mode)


class LsaAgent:
    def __init__(self, params: LsaParams):
        self.params = params

    def __call__(self, task: TaskData, history: Array) -> Array:
        return lsa_predict(self.params, task, history)


def run_interaction(
    a1: AgentBackend,
    a2: AgentBackend,
    task1: TaskData,
    task2: TaskData,
    eta: float,
    steps: int,
    stop_tol: float | None = None,
) -> Trajectory:
    """Alternate ``state <- state - eta * backend(task, history)``, agent 1 first, from 0.

    Each backend sees the full shared history (oldest first) as a read-only
    array view.  With ``stop_tol`` the run ends once a full step moves the
    state by at most that much.
    """
    if task1.d != task2.d:
        raise ArgumentError(f"tasks disagree on dimension: {task1.d} vs {task2.d}")
    if steps < 1:
        raise ArgumentError("steps must be >= 1")
    d = task1.d
    states = np.zeros((2 * steps + 1, d))
    err_w: list[float] = []
    err_u: list[float] = []
    converged = False
    done = 0
    for s in range(1, steps + 1):
        for k, agent, task, errs in ((2 * s - 1, a1, task1, err_w), (2 * s, a2, task2, err_u)):
            history = states[:k]
            history.flags.writeable = False
            try:
                g = np.asarray(agent(task, history), dtype=float)
            except (BackendError, DivergenceError):
                raise
            except Exception as exc:
                raise BackendError(f"backend failed: {exc!r}", k) from exc
            finally:
                history.flags.writeable = True
            if g.shape != (d,):
                raise BackendError(f"backend returned shape {g.shape}, expected ({d},)", k)
            if not np.all(np.isfinite(g)):
                raise BackendError("backend returned non-finite gradient", k)
            states[k] = states[k - 1] - eta * g
            check_finite_state(states[k], k)
            errs.append(float(np.linalg.norm(states[k] - task.target)))
        done = s
        if stop_tol is not None and np.linalg.norm(states[2 * s] - states[2 * s - 2]) <= stop_tol:
            converged = True
            break
    return Trajectory(
        iterates=states[: 2 * done + 1].copy(),
        err_w=err_w,
        err_u=err_u,
        converged=converged,
        turns_run=done,
        w_star=task1.target.copy(),
        u_star=task2.target.copy(),
        eta=eta,
    )


# ---------------------------------------------------------------- configs


@dataclass
class ExperimentConfig:
    kind: Kind = "converge"
    d: int = 10
    n: int = 20
    eta: float = 0.005
    turns: int = 5000
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    backend_w: str = "oracle"
    backend_u: str = "oracle"
    lsa_checkpoint: str | None = None
    endpoint: dict | None = None
    gap_type: GapType = "orthogonal"
    scaled_factor: float = 2.0
    eps_victim: float | None = None
    eps_attacker: float | None = None
    loss_mode: LossMode = "mean"
    scale_mode: str = "unit"
    tau: float = 0.1
    theta: float = math.pi / 2
    thetas: list[float] | None = None
    n_thetas: int = 10
    norm_w: float = 1.0
    norm_u: float = 1.0
    stop_tol: float | None = 1e-12
    plateau_fraction: float = 0.1
    victim_first: bool = True
    workers: int = 1
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in ("converge", "angle_sweep", "attack"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.d < 1 or self.n < 1 or self.turns < 1:
            raise ConfigError("d, n and turns must be >= 1")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.loss_mode not in ("mean", "sum"):
            raise ConfigError(f"unknown loss_mode {self.loss_mode!r}")
        if self.scale_mode not in ("unit", "inv_dim"):
            raise ConfigError(f"unknown scale_mode {self.scale_mode!r}")
        if self.gap_type not in ("orthogonal", "scaled", "opposite"):
            raise ConfigError(f"unknown gap_type {self.gap_type!r}")
        if self.gap_type == "scaled" and self.scaled_factor == 1.0:
            raise ConfigError("scaled gap needs scaled_factor != 1")
        if not 0.0 < self.plateau_fraction <= 1.0:
            raise ConfigError("plateau_fraction must lie in (0, 1]")
        for b in (self.backend_w, self.backend_u):
            if b not in ("oracle", "lsa", "llm"):
                raise ConfigError(f"unknown backend {b!r}")
            if b == "lsa" and not self.lsa_checkpoint:
                raise ConfigError("backend 'lsa' needs lsa_checkpoint")
            if b == "llm" and not self.endpoint:
                raise ConfigError("backend 'llm' needs an endpoint block")
            if b in ("lsa", "llm") and self.loss_mode != "sum":
                raise ConfigError(f"backend {b!r} predicts sum-mode gradients; set loss_mode to 'sum'")
        if self.kind == "attack" and self.n < self.d:
            raise ConfigError("attack realization needs n >= d")
        thetas = self.theta_grid() if self.kind == "angle_sweep" else [self.theta]
        if any(not 0.0 <= t <= math.pi for t in thetas):
            raise ConfigError("angles must lie in [0, pi]")
        return self

    def theta_grid(self) -> list[float]:
        if self.thetas is not None:
            return [float(t) for t in self.thetas]
        return np.linspace(0.0, math.pi, self.n_thetas).tolist()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.seeds = [int(s) for s in cfg.seeds]
        return cfg.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects numbers (output location and worker count excluded)."""
        data = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    config_hash: str
    rows: list[dict]
    aggregates: dict
    success_rate: float | None = None
    successes: int | None = None
    failed_construction: int = 0
    runtime_s: float = 0.0
    notes: dict = field(default_factory=dict)
    curves: dict | None = None
    trajectories: dict = field(default_factory=dict)

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = asdict(replace(self, curves=None, trajectories={}))
        out.pop("curves")
        out.pop("trajectories")
        if not include_runtime:
            out.pop("runtime_s")
        # the output location lives in config.json; keep reports location-independent
        out["config"] = {k: v for k, v in out["config"].items() if k != "out"}
        return _jsonable(out)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- backends


def make_backend(kind: str, cfg: ExperimentConfig) -> AgentBackend:
    if kind == "oracle":
        return ExactOracle(cfg.loss_mode)
    if kind == "lsa":
        params = LsaParams.load(cfg.lsa_checkpoint)
        trained_mode = params.train_meta.get("config", {}).get("loss_mode", "sum")
        if trained_mode != cfg.loss_mode:
            raise ConfigError(f"checkpoint was trained on {trained_mode}-mode gradients")
        return LsaAgent(params)
    if kind == "llm":
        from .llm_bridge import EndpointConfig, LlmAgent

        return LlmAgent(EndpointConfig.from_dict(cfg.endpoint))
    raise ConfigError(f"unknown backend {kind!r}")


def _sub_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1, dtype=np.uint64)[0])


def normalizer(pair: ObjectivePair) -> float:
    return float(np.sqrt(pair.w_star @ pair.w_star + pair.u_star @ pair.u_star))


# ---------------------------------------------------------------- protocols


def _misaligned_setup(cfg: ExperimentConfig, seed: int, theta: float) -> tuple[dict, TaskData, TaskData]:
    """Fresh data for both agents, targets at angle theta, plus closed-form predictions."""
    Xw = generate_task(cfg.d, cfg.n, cfg.scale_mode, _sub_seed(seed, 1)).X
    Xu = generate_task(cfg.d, cfg.n, cfg.scale_mode, _sub_seed(seed, 2)).X
    pair = pair_with_angle(cfg.d, theta, cfg.norm_w, cfg.norm_u, _sub_seed(seed, 3))
    task_w, task_u = make_task(Xw, pair.w_star, seed), make_task(Xu, pair.u_star, seed)
    S_w, S_u = task_geometry(task_w, cfg.loss_mode), task_geometry(task_u, cfg.loss_mode)
    stab = stability_check(cfg.eta, S_w, S_u)
    pred = plateau_prediction(S_w, S_u, pair, cfg.eta)
    bounds = angle_bounds(S_w, S_u, theta)
    norm = normalizer(pair)
    row: dict[str, Any] = {
        "theta": theta, "seed": seed, "stable": stab.stable, "eta_max": stab.eta_max,
        "delta_norm": float(np.linalg.norm(pair.delta)), "normalizer": norm,
        "lower_w": bounds.lower_w, "upper_w": bounds.upper_w,
        "lower_u": bounds.lower_u, "upper_u": bounds.upper_u,
        "predicted_w": pred.err_w / norm, "predicted_u": pred.err_u / norm,
        "predicted_abs_w": pred.err_w, "predicted_abs_u": pred.err_u,
    }
    return row, task_w, task_u


def misaligned_prediction(cfg: ExperimentConfig, seed: int, theta: float) -> dict:
    """Predictions and angle bounds for one (seed, theta) instance, without simulating."""
    return _misaligned_setup(cfg, seed, theta)[0]


def _misaligned_run(cfg: ExperimentConfig, seed: int, theta: float,
                    backends: tuple[AgentBackend, AgentBackend]) -> tuple[dict, Trajectory | None]:
    row, task_w, task_u = _misaligned_setup(cfg, seed, theta)
    norm = row["normalizer"]
    try:
        traj = run_interaction(*backends, task_w, task_u, cfg.eta, cfg.turns, cfg.stop_tol)
    except DivergenceError as exc:
        row.update(diverged=True, error=str(exc), plateau_w=None, plateau_u=None,
                   plateau_abs_w=None, plateau_abs_u=None, converged=False, turns_run=exc.turn // 2)
        return row, None
    pw = plateau(traj.err_w, cfg.plateau_fraction)
    pu = plateau(traj.err_u, cfg.plateau_fraction)
    row.update(
        diverged=False, converged=traj.converged, turns_run=traj.turns_run,
        plateau_abs_w=pw, plateau_abs_u=pu, plateau_w=pw / norm, plateau_u=pu / norm,
    )
    return row, traj


def attack_pair(task: TaskData, gap_type: GapType, scaled_factor: float, seed: int) -> ObjectivePair:
    w = task.target
    if gap_type == "orthogonal":
        nw = float(np.linalg.norm(w))
        u = nw * orthogonal_unit(w / nw, rng_for(_sub_seed(seed, 4)))
    elif gap_type == "scaled":
        u = scaled_factor * w
    elif gap_type == "opposite":
        u = -w
    else:
        raise ConfigError(f"unknown gap_type {gap_type!r}")
    return ObjectivePair(w_star=w.copy(), u_star=u)


def _attack_run(cfg: ExperimentConfig, seed: int,
                backends: tuple[AgentBackend, AgentBackend]) -> tuple[dict, Trajectory | None]:
    victim = generate_task(cfg.d, cfg.n, cfg.scale_mode, _sub_seed(seed, 1))
    pair = attack_pair(victim, cfg.gap_type, cfg.scaled_factor, seed)
    S_w = task_geometry(victim, cfg.loss_mode)
    row: dict[str, Any] = {"seed": seed, "gap_type": cfg.gap_type,
                           "delta_norm": float(np.linalg.norm(pair.delta)),
                           "u_star_norm": float(np.linalg.norm(pair.u_star))}
    try:
        design = design_attack(S_w, pair, cfg.eta, cfg.tau, cfg.n, loss_mode=cfg.loss_mode)
    except (InfeasibleAttackError, BlindAttackError) as exc:
        row.update(construction_failed=True, error=str(exc))
        return row, None
    attacker = make_task(design.X_u, pair.u_star, seed)
    stab = stability_check(cfg.eta, S_w, task_geometry(attacker, cfg.loss_mode))
    predicted = victim_residual(S_w, pair, cfg.eta)
    e1 = cfg.eps_victim if cfg.eps_victim is not None else 0.1 * row["delta_norm"]
    e2 = cfg.eps_attacker if cfg.eps_attacker is not None else 1e-3 * max(1.0, float(np.linalg.norm(pair.u_star)))
    row.update(construction_failed=False, stable=stab.stable, cancel_norm=design.diagnosis.cancel_norm,
               escape_norm=design.diagnosis.escape_norm, criterion_holds=design.diagnosis.holds,
               predicted_victim_residual=predicted, eps_victim=e1, eps_attacker=e2)
    if cfg.victim_first:
        t1, t2 = victim, attacker
    else:
        t1, t2 = attacker, victim
    try:
        traj = run_interaction(backends[0], backends[1], t1, t2, cfg.eta, cfg.turns, cfg.stop_tol)
    except DivergenceError as exc:
        row.update(diverged=True, success=False, error=str(exc))
        return row, None
    if not cfg.victim_first:
        # relabel so err_w/err_u always refer to victim/attacker
        traj = Trajectory(traj.iterates, traj.err_u, traj.err_w, traj.converged, traj.turns_run,
                          pair.w_star, pair.u_star, traj.eta)
    w_last = traj.iterates[2 * traj.turns_run - (1 if cfg.victim_first else 0)]
    u_last = traj.iterates[2 * traj.turns_run - (0 if cfg.victim_first else 1)]
    err_w = float(np.linalg.norm(w_last - pair.w_star))
    err_u = float(np.linalg.norm(u_last - pair.u_star))
    if cfg.victim_first:
        outcome = evaluate_attack(traj, pair, e1, e2)
        success = outcome.success
    else:
        success = bool(err_w > e1 and err_u < e2)
    row.update(diverged=False, converged=traj.converged, turns_run=traj.turns_run,
               final_err_w=err_w, final_err_u=err_u, success=success,
               victim_residual_gap=abs(err_w - predicted))
    return row, traj


def _seed_task(args: tuple[dict, int, float | None]) -> tuple[dict, dict | None]:
    """Worker entry point: rebuild config and backends in-process, run one (seed, theta)."""
    cfg_dict, seed, theta = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    backends = (make_backend(cfg.backend_w, cfg), make_backend(cfg.backend_u, cfg))
    if cfg.kind == "attack":
        row, traj = _attack_run(cfg, seed, backends)
    else:
        row, traj = _misaligned_run(cfg, seed, cfg.theta if theta is None else theta, backends)
    curves = None if traj is None else {"err_w": traj.err_w, "err_u": traj.err_u}
    return row, curves


def _run_all(cfg: ExperimentConfig, jobs: list[tuple[int, float | None]],
             backends: tuple[AgentBackend, AgentBackend] | None = None,
             keep: Callable[[int, float | None], bool] = lambda s, t: False):
    """Run every job; returns rows (sorted by theta, seed) and curves keyed by (seed, theta)."""
    cfg_dict = cfg.to_dict()
    cfg_dict["out"] = None
    results = []
    if cfg.workers > 1 and backends is None:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_seed_task, [(cfg_dict, s, t) for s, t in jobs]))
    else:
        backends = backends or (make_backend(cfg.backend_w, cfg), make_backend(cfg.backend_u, cfg))
        for s, t in jobs:
            if cfg.kind == "attack":
                row, traj = _attack_run(cfg, s, backends)
            else:
                row, traj = _misaligned_run(cfg, s, cfg.theta if t is None else t, backends)
            results.append((row, None if traj is None else {"err_w": traj.err_w, "err_u": traj.err_u,
                                                            "traj": traj if keep(s, t) else None}))
    order = sorted(range(len(jobs)), key=lambda i: (jobs[i][1] or 0.0, jobs[i][0]))
    rows = [results[i][0] for i in order]
    digest = cfg.hash()
    for r in rows:
        r["config_hash"] = digest
    curves = {jobs[i]: results[i][1] for i in order}
    return rows, curves


def _stats(values: Sequence[float | None]) -> dict:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "std": None, "count": 0}
    return {"mean": float(v.mean()), "std": float(v.std()), "count": int(v.size)}


def mean_std_curves(curves: list[dict]) -> dict:
    """Mean and std across runs, padding shorter (early-stopped) runs with their last value."""
    curves = [c for c in curves if c is not None]
    if not curves:
        return {"err_w_mean": [], "err_w_std": [], "err_u_mean": [], "err_u_std": []}
    out = {}
    for key in ("err_w", "err_u"):
        T = max(len(c[key]) for c in curves)
        M = np.array([np.pad(c[key], (0, T - len(c[key])), mode="edge") for c in curves])
        out[f"{key}_mean"] = M.mean(axis=0).tolist()
        out[f"{key}_std"] = M.std(axis=0).tolist()
    return out


def converge_experiment(cfg: ExperimentConfig, backends=None) -> ExperimentReport:
    """Error curves of both agents at a fixed objective angle, with closed-form plateau predictions."""
    if cfg.kind != "converge":
        raise ConfigError("converge_experiment needs kind='converge'")
    cfg.validate()
    t0 = time.perf_counter()
    rows, curves = _run_all(cfg, [(s, None) for s in cfg.seeds], backends, keep=lambda s, t: True)
    agg = {k: _stats([r.get(k) for r in rows]) for k in
           ("plateau_abs_w", "plateau_abs_u", "predicted_abs_w", "predicted_abs_u", "plateau_w", "plateau_u")}
    report = ExperimentReport(
        kind=cfg.kind, config=cfg.to_dict(), config_hash=cfg.hash(), rows=rows, aggregates=agg,
        notes=_notes(cfg), curves=mean_std_curves(list(curves.values())),
    )
    report.runtime_s = time.perf_counter() - t0
    report.trajectories = {s: c["traj"] for (s, _), c in curves.items() if c is not None and c.get("traj")}
    return report


def sweep_angles(cfg: ExperimentConfig, backends=None) -> ExperimentReport:
    """Plateau of both agents over a grid of objective angles, with the angle-envelope bounds."""
    if cfg.kind != "angle_sweep":
        raise ConfigError("sweep_angles needs kind='angle_sweep'")
    cfg.validate()
    t0 = time.perf_counter()
    jobs = [(s, t) for t in cfg.theta_grid() for s in cfg.seeds]
    rows, _ = _run_all(cfg, jobs, backends)
    per_theta = []
    for t in cfg.theta_grid():
        sel = [r for r in rows if r["theta"] == t]
        per_theta.append({
            "theta": t,
            "plateau_w": _stats([r["plateau_w"] for r in sel]),
            "plateau_u": _stats([r["plateau_u"] for r in sel]),
            "unstable": sum(not r["stable"] for r in sel),
            "diverged": sum(bool(r["diverged"]) for r in sel),
        })
    report = ExperimentReport(
        kind=cfg.kind, config=cfg.to_dict(), config_hash=cfg.hash(), rows=rows,
        aggregates={"per_theta": per_theta}, notes=_notes(cfg),
    )
    report.runtime_s = time.perf_counter() - t0
    return report


def attack_experiment(cfg: ExperimentConfig, backends=None) -> ExperimentReport:
    """White-box attack against the victim on every seed; success rate over constructible seeds."""
    if cfg.kind != "attack":
        raise ConfigError("attack_experiment needs kind='attack'")
    cfg.validate()
    t0 = time.perf_counter()
    rows, curves = _run_all(cfg, [(s, None) for s in cfg.seeds], backends)
    built = [r for r in rows if not r["construction_failed"]]
    successes = sum(bool(r.get("success")) for r in built)
    agg = {k: _stats([r.get(k) for r in built]) for k in
           ("final_err_w", "final_err_u", "predicted_victim_residual", "victim_residual_gap")}
    report = ExperimentReport(
        kind=cfg.kind, config=cfg.to_dict(), config_hash=cfg.hash(), rows=rows, aggregates=agg,
        success_rate=successes / len(built) if built else 0.0, successes=successes,
        failed_construction=len(rows) - len(built), notes=_notes(cfg),
        curves=mean_std_curves(list(curves.values())),
    )
    report.runtime_s = time.perf_counter() - t0
    return report


def _notes(cfg: ExperimentConfig) -> dict:
    notes = {
        "plateau_estimator": f"mean of last {cfg.plateau_fraction:g} of each agent's error curve",
        "normalization": "plateau_* divided by sqrt(|w*|^2+|u*|^2); plateau_abs_* unnormalized",
        "loss_mode": cfg.loss_mode,
    }
    if "llm" in (cfg.backend_w, cfg.backend_u):
        notes["reproducibility"] = "LLM-backed run: numbers depend on remote responses, see transcript"
    return notes


def run_experiment(cfg: ExperimentConfig, backends=None) -> ExperimentReport:
    return {"converge": converge_experiment, "angle_sweep": sweep_angles,
            "attack": attack_experiment}[cfg.kind](cfg, backends)


# ---------------------------------------------------------------- writers


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if x is None else (repr(float(x)) if isinstance(x, (float, np.floating)) else x)
                    for x in r])
    return buf.getvalue()


def trajectory_rows(traj: Trajectory) -> tuple[list[str], list[list]]:
    d = traj.d
    header = ["turn", "speaker", "err_w", "err_u"] + [f"state_{i}" for i in range(d)]
    rows = []
    for k, (spk, x) in enumerate(zip(traj.speakers(), traj.iterates)):
        ew = float(np.linalg.norm(x - traj.w_star)) if traj.w_star is not None else None
        eu = float(np.linalg.norm(x - traj.u_star)) if traj.u_star is not None else None
        rows.append([k, spk, ew, eu, *x.tolist()])
    return header, rows


def trajectory_csv(traj: Trajectory) -> str:
    return _csv(*trajectory_rows(traj))


def trajectory_jsonl(traj: Trajectory) -> str:
    header, rows = trajectory_rows(traj)
    lines = []
    for r in rows:
        rec = dict(zip(header[:4], r[:4]))
        rec["state"] = r[4:]
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


PLATEAU_COLUMNS = ["theta", "seed", "plateau_w", "plateau_u", "lower_w", "upper_w", "lower_u", "upper_u",
                   "predicted_w", "predicted_u", "stable", "config_hash"]


def plateaus_csv(report: ExperimentReport) -> str:
    return _csv(PLATEAU_COLUMNS, [[r.get(c) for c in PLATEAU_COLUMNS] for r in report.rows])


def curves_csv(curves: dict) -> str:
    n = len(curves["err_w_mean"])
    rows = [[t + 1, curves["err_w_mean"][t], curves["err_w_std"][t], curves["err_u_mean"][t],
             curves["err_u_std"][t]] for t in range(n)]
    return _csv(["turn", "mean_err_w", "std_err_w", "mean_err_u", "std_err_u"], rows)


def report_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def write_outputs(report: ExperimentReport, cfg: ExperimentConfig, out_dir: str | os.PathLike) -> list[Path]:
    """Write every artifact of a report plus a config echo; returns the paths written."""
    out = Path(out_dir)
    written = []

    def put(name: str, text: str):
        atomic_write(out / name, text)
        written.append(out / name)

    put("config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    put("report.json", report_json(report))
    put("run_meta.json", json.dumps({"runtime_s": report.runtime_s, "config_hash": report.config_hash},
                                    indent=2) + "\n")
    if report.kind == "angle_sweep":
        put("plateaus.csv", plateaus_csv(report))
    if report.curves:
        put("curves.csv", curves_csv(report.curves))
    trajs = report.trajectories
    if len(trajs) == 1:
        (traj,) = trajs.values()
        put("trajectory.csv", trajectory_csv(traj))
    else:
        for seed, traj in trajs.items():
            put(f"trajectories/seed_{seed}.csv", trajectory_csv(traj))
    return written
