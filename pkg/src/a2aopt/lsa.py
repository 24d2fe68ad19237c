"""Single-layer linear self-attention (LSA) agent.

Token layout for ``d``-dimensional regression with ``n`` examples and
iterate history ``w_0 .. w_t`` (``2d+2`` rows, ``n+t+1`` columns)::

    rows 0..d-1     X          | 0
    row  d          y          | 0
    rows d+1..2d    0          | w_0 ... w_t
    row  2d+1       0          | 1   ...   1

The map is ``f(Z) = Z + V Z (Z^T A Z) / n`` with ``n`` the number of data
columns.  Training regresses the least-squares gradient at the last history
token from the last output column; gradients are derived by hand.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import ArgumentError, TrainingDivergedError
from .geometry import Array, LossMode, ScaleMode, TaskData, generate_task, rng_for

log = logging.getLogger(__name__)

Readout = Literal["feature", "weight"]


@dataclass(frozen=True)
class TokenMatrix:
    d: int
    n: int
    entries: Array

    @property
    def history_len(self) -> int:
        return self.entries.shape[1] - self.n

    def blocks(self) -> tuple[Array, Array, Array]:
        """Read back ``(X, y, history)``; history rows are the iterates ``w_0 .. w_t``."""
        d, n, Z = self.d, self.n, self.entries
        return Z[:d, :n].copy(), Z[d, :n].copy(), Z[d + 1 : 2 * d + 1, n:].T.copy()


def build_tokens(task: TaskData, history) -> TokenMatrix:
    d, n = task.d, task.n
    H = np.asarray(history, dtype=float)
    if H.ndim == 1:
        H = H[None, :]
    if H.ndim != 2 or H.shape[0] < 1:
        raise ArgumentError("history must hold at least one iterate")
    if H.shape[1] != d:
        raise ArgumentError(f"history vectors have length {H.shape[1]}, expected {d}")
    if task.y.shape != (n,):
        raise ArgumentError(f"y has shape {task.y.shape}, expected ({n},)")
    Z = np.zeros((2 * d + 2, n + H.shape[0]))
    Z[:d, :n] = task.X
    Z[d, :n] = task.y
    Z[d + 1 : 2 * d + 1, n:] = H.T
    Z[2 * d + 1, n:] = 1.0
    return TokenMatrix(d=d, n=n, entries=Z)


@dataclass
class LsaParams:
    V: Array
    A: Array
    d: int
    n: int
    readout: Readout = "feature"
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        de = 2 * self.d + 2
        self.V = np.asarray(self.V, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        for name, M in (("V", self.V), ("A", self.A)):
            if M.shape != (de, de):
                raise ArgumentError(f"{name} must be {de}x{de}, got {M.shape}")
            if not np.all(np.isfinite(M)):
                raise ArgumentError(f"{name} has non-finite entries")
        if self.readout not in ("feature", "weight"):
            raise ArgumentError(f"unknown readout {self.readout!r}")

    @property
    def rows(self) -> slice:
        return readout_rows(self.d, self.readout)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "readout": self.readout,
            "V": self.V.tolist(),
            "A": self.A.tolist(),
            "train_meta": self.train_meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "LsaParams":
        try:
            return cls(
                V=np.array(data["V"], dtype=float),
                A=np.array(data["A"], dtype=float),
                d=int(data["d"]),
                n=int(data["n"]),
                readout=data.get("readout", "feature"),
                train_meta=dict(data.get("train_meta", {})),
            )
        except KeyError as exc:
            raise ArgumentError(f"checkpoint is missing field {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "LsaParams":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "LsaParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def readout_rows(d: int, readout: Readout) -> slice:
    # "weight" is the running-iterate block; "feature" is the X block, which is
    # zero in the history columns so no residual term leaks into the output
    return slice(d + 1, 2 * d + 1) if readout == "weight" else slice(0, d)


def lsa_forward(Z: TokenMatrix, params: LsaParams) -> tuple[Array, Array]:
    """Full forward pass; returns ``(Z_out, prediction)``."""
    E = Z.entries
    if Z.d != params.d or E.shape[0] != 2 * params.d + 2:
        raise ArgumentError(f"token matrix is for d={Z.d}, params for d={params.d}")
    Z_out = E + params.V @ E @ (E.T @ params.A @ E) / Z.n
    return Z_out, Z_out[params.rows, -1].copy()


def lsa_predict(params: LsaParams, task: TaskData, history) -> Array:
    """Last-column prediction without materializing Z; O((n + t) d) per call."""
    d, n = task.d, task.n
    if d != params.d:
        raise ArgumentError(f"task has d={d}, params expect d={params.d}")
    H = np.asarray(history, dtype=float)
    if H.ndim == 1:
        H = H[None, :]
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] != d:
        raise ArgumentError(f"history must be a non-empty (t+1) x {d} array")
    z = np.zeros(2 * d + 2)
    z[d + 1 : 2 * d + 1] = H[-1]
    z[-1] = 1.0
    q = params.A @ z
    s_data = task.X.T @ q[:d] + task.y * q[d]
    s_hist = H @ q[d + 1 : 2 * d + 1] + q[-1]
    p = np.empty(2 * d + 2)
    p[:d] = task.X @ s_data
    p[d] = task.y @ s_data
    p[d + 1 : 2 * d + 1] = H.T @ s_hist
    p[-1] = s_hist.sum()
    out = z + params.V @ p / n
    return out[params.rows].copy()


@dataclass(frozen=True)
class GdTrajectory:
    pairs: list[tuple[Array, Array]]
    eta: float
    truncated_at: int | None

    @property
    def iterates(self) -> Array:
        return np.array([w for w, _ in self.pairs])

    @property
    def gradients(self) -> Array:
        return np.array([g for _, g in self.pairs])


def lsq_gradient(X: Array, y: Array, w: Array, loss_mode: LossMode = "sum") -> Array:
    g = X @ (X.T @ w - y)
    if loss_mode == "sum":
        return g
    if loss_mode == "mean":
        return g / X.shape[1]
    raise ArgumentError(f"unknown loss_mode {loss_mode!r}")


def generate_trajectory(
    task: TaskData,
    eta: float,
    max_iter: int,
    loss_mode: LossMode = "sum",
    trunc_tol: float = 1e-3,
) -> GdTrajectory:
    """Gradient descent from ``w_0 = 0``, stopping once ``|g_t - g_{t-1}| <= trunc_tol`` (t >= 1)."""
    if max_iter < 1:
        raise ArgumentError("max_iter must be >= 1")
    w = np.zeros(task.d)
    g = lsq_gradient(task.X, task.y, w, loss_mode)
    pairs = [(w, g)]
    truncated_at = None
    for t in range(1, max_iter + 1):
        w = w - eta * g
        g_next = lsq_gradient(task.X, task.y, w, loss_mode)
        pairs.append((w, g_next))
        if np.linalg.norm(g_next - g) <= trunc_tol:
            truncated_at = t
            break
        g = g_next
    return GdTrajectory(pairs=pairs, eta=eta, truncated_at=truncated_at)


@dataclass
class TrainConfig:
    d: int = 10
    n: int = 20
    num_datasets: int = 100
    batch_size: int = 512
    epochs: int = 100
    eta: float = 0.005
    lr: float = 0.05
    lr_min: float = 0.005
    max_iter: int = 200
    trunc_tol: float = 1e-3
    scale_mode: ScaleMode = "inv_dim"
    loss_mode: LossMode = "sum"
    readout: Readout = "feature"
    init_std: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_datasets: int = 10
    seed: int = 0

    def validate(self) -> None:
        for name in ("d", "n", "num_datasets", "batch_size", "max_iter", "eval_datasets"):
            if int(getattr(self, name)) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ArgumentError("epochs must be >= 0")
        if not (self.eta > 0 and self.lr > 0 and 0 <= self.lr_min <= self.lr):
            raise ArgumentError("need eta > 0 and 0 <= lr_min <= lr")
        if self.readout not in ("feature", "weight"):
            raise ArgumentError(f"unknown readout {self.readout!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class PairSet:
    """Precomputed training pairs: last-token vector, full Gram matrix Z Z^T, target gradient."""

    z: Array  # (P, de)
    K: Array  # (P, de, de)
    g: Array  # (P, d)
    n: int


def _dataset_seeds(seed: int, count: int, stream: int) -> list[int]:
    ss = np.random.SeedSequence([int(seed), stream])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64)]


def build_pairs(tasks: Sequence[TaskData], eta: float, max_iter: int,
                loss_mode: LossMode = "sum", trunc_tol: float = 1e-3) -> PairSet:
    zs, Ks, gs = [], [], []
    n = tasks[0].n
    for task in tasks:
        d = task.d
        de = 2 * d + 2
        D = np.zeros((de, n))
        D[:d] = task.X
        D[d] = task.y
        K = D @ D.T
        traj = generate_trajectory(task, eta, max_iter, loss_mode, trunc_tol)
        for w, g in traj.pairs:
            h = np.zeros(de)
            h[d + 1 : 2 * d + 1] = w
            h[-1] = 1.0
            K = K + np.outer(h, h)
            zs.append(h)
            Ks.append(K)
            gs.append(g)
    return PairSet(z=np.array(zs), K=np.array(Ks), g=np.array(gs), n=n)


def batch_loss_and_grads(V: Array, A: Array, z: Array, K: Array, g: Array, n: int,
                         rows: slice) -> tuple[float, Array, Array]:
    """Mean over the batch of ``|pred - g|_2`` and its exact gradients w.r.t. V and A."""
    B = z.shape[0]
    q = z @ A.T
    p = np.einsum("bij,bj->bi", K, q)
    pred = z[:, rows] + p @ V[rows].T / n
    e = pred - g
    norms = np.sqrt(np.einsum("bi,bi->b", e, e))
    loss = float(norms.mean())
    unit = np.divide(e, norms[:, None], out=np.zeros_like(e), where=norms[:, None] > 0) / B
    c = np.zeros_like(z)
    c[:, rows] = unit
    dV = c.T @ p / n
    r = np.einsum("bij,bj->bi", K, c @ V)
    dA = r.T @ z / n
    return loss, dV, dA


def pair_loss(params: LsaParams, pairs: PairSet) -> float:
    return batch_loss_and_grads(params.V, params.A, pairs.z, pairs.K, pairs.g, pairs.n, params.rows)[0]


def relative_errors(params: LsaParams, pairs: PairSet) -> Array:
    q = pairs.z @ params.A.T
    p = np.einsum("bij,bj->bi", pairs.K, q)
    pred = pairs.z[:, params.rows] + p @ params.V[params.rows].T / pairs.n
    gn = np.linalg.norm(pairs.g, axis=1)
    keep = gn > 0
    return np.linalg.norm(pred - pairs.g, axis=1)[keep] / gn[keep]


def cosine_lr(step: int, total: int, lr: float, lr_min: float) -> float:
    if total <= 0:
        return lr
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * min(step, total) / total))


def sample_tasks(cfg: TrainConfig, count: int, stream: int) -> list[TaskData]:
    return [generate_task(cfg.d, cfg.n, cfg.scale_mode, s) for s in _dataset_seeds(cfg.seed, count, stream)]


def init_params(cfg: TrainConfig) -> LsaParams:
    de = 2 * cfg.d + 2
    rng = rng_for(_dataset_seeds(cfg.seed, 1, stream=2)[0])
    return LsaParams(
        V=cfg.init_std * rng.standard_normal((de, de)),
        A=cfg.init_std * rng.standard_normal((de, de)),
        d=cfg.d, n=cfg.n, readout=cfg.readout,
    )


def train_lsa(
    cfg: TrainConfig,
    on_epoch: Callable[[int, LsaParams], None] | None = None,
) -> LsaParams:
    """Adam + cosine-annealed learning rate over shuffled (dataset, step) pairs."""
    cfg.validate()
    train = build_pairs(sample_tasks(cfg, cfg.num_datasets, stream=0), cfg.eta, cfg.max_iter,
                        cfg.loss_mode, cfg.trunc_tol)
    held_out = build_pairs(sample_tasks(cfg, cfg.eval_datasets, stream=1), cfg.eta, cfg.max_iter,
                           cfg.loss_mode, cfg.trunc_tol)
    params = init_params(cfg)
    rows = params.rows
    V, A = params.V.copy(), params.A.copy()
    mV, vV = np.zeros_like(V), np.zeros_like(V)
    mA, vA = np.zeros_like(A), np.zeros_like(A)
    P = train.z.shape[0]
    steps_per_epoch = math.ceil(P / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    shuffle_rng = rng_for(_dataset_seeds(cfg.seed, 1, stream=3)[0])
    initial_loss = pair_loss(params, train)
    curve: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(P)
        running = 0.0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss, dV, dA = batch_loss_and_grads(V, A, train.z[idx], train.K[idx], train.g[idx], train.n, rows)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss}", epoch)
            running += loss * len(idx)
            step += 1
            lr = cosine_lr(step - 1, total, cfg.lr, cfg.lr_min)
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for Wt, grad, m, v in ((V, dV, mV, vV), (A, dA, mA, vA)):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * grad
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * grad * grad
                Wt -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        params = LsaParams(V=V.copy(), A=A.copy(), d=cfg.d, n=cfg.n, readout=cfg.readout)
        epoch_loss = pair_loss(params, train)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss {epoch_loss}", epoch)
        curve.append(epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, params)
        if epoch % 10 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d  loss %.6f  mean batch loss %.6f", epoch, epoch_loss, running / P)
    params = LsaParams(V=V, A=A, d=cfg.d, n=cfg.n, readout=cfg.readout)
    rel = relative_errors(params, held_out)
    params.train_meta = {
        "epochs_run": cfg.epochs,
        "initial_loss": initial_loss,
        "final_loss": curve[-1] if curve else initial_loss,
        "loss_curve": curve,
        "num_pairs": int(P),
        "optimizer_steps": step,
        "heldout_median_rel_err": float(np.median(rel)),
        "heldout_p90_rel_err": float(np.quantile(rel, 0.9)),
        "config": asdict(cfg),
    }
    return params
