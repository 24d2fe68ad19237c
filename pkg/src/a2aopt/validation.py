"""Quick invariant suites behind ``a2aopt validate``.

Each check returns ``(passed, detail)``; sizes are small so the whole table
runs in a few seconds.
"""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .adversary import check_asymmetric, design_attack, victim_residual
from .dynamics import AgentSpec, run_alternating, solve_fixed_point, stability_check
from .geometry import (
    generate_task,
    pair_with_angle,
    projector_onto,
    random_spd,
    rng_for,
    sample_covariance,
    spd_factor,
    angle_between,
)
from .harness import ExactOracle, run_interaction
from .llm_bridge import parse_user_message, render_prompts
from .lsa import LsaParams, batch_loss_and_grads, build_pairs, build_tokens, lsa_forward, lsa_predict
from .predictor import commuting_plateaus, plateau_prediction

Check = Callable[[], tuple[bool, str]]


def _geometry() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20):
        X = rng_for(seed).standard_normal((6, 9))
        S = sample_covariance(X)
        brute = np.array([[sum(X[i, k] * X[j, k] for k in range(9)) / 9 for j in range(6)] for i in range(6)])
        L = spd_factor(S)
        P = projector_onto(X[:, 0])
        pair = pair_with_angle(6, 1.1, 2.0, 0.5, seed)
        worst = max(worst, np.abs(S - brute).max(), np.abs(L @ L.T - S).max() / np.linalg.norm(S),
                    np.abs(P @ P - P).max(), abs(angle_between(pair.w_star, pair.u_star) - 1.1))
    return worst < 1e-9, f"max deviation {worst:.2e}"


def _fixed_point() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(10):
        Sw, Su = random_spd(6, 0.5, 2.0, 2 * seed), random_spd(6, 0.5, 2.0, 2 * seed + 1)
        pair = pair_with_angle(6, 1.0, 1.0, 1.0, seed)
        a, b = AgentSpec(Sw, pair.w_star, 0.01), AgentSpec(Su, pair.u_star, 0.01)
        traj = run_alternating(a, b, 20_000, 1e-13)
        fp = solve_fixed_point(a, b)
        worst = max(worst, np.linalg.norm(traj.final_u - fp.u_inf), np.linalg.norm(traj.final_w - fp.w_inf))
    return worst < 1e-8, f"max |sim - solve| {worst:.2e}"


def _predictor() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(20):
        rng = rng_for(seed)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        lw, lu = rng.uniform(0.1, 3, 5), rng.uniform(0.1, 3, 5)
        pair = pair_with_angle(5, 2.0, 1.0, 1.5, seed)
        pred = plateau_prediction((Q * lw) @ Q.T, (Q * lu) @ Q.T, pair)
        cp = commuting_plateaus(lw, lu, Q.T @ pair.delta)
        worst = max(worst, abs(pred.err_u**2 - cp.err_u_sq), abs(pred.err_w**2 - cp.err_w_sq),
                    np.abs(pred.resid_w - pred.resid_u - pair.delta).max())
    return worst < 1e-10, f"max deviation {worst:.2e}"


def _adversary() -> tuple[bool, str]:
    worst_cancel, worst_victim = 0.0, 0.0
    for seed in range(10):
        task = generate_task(6, 12, "unit", seed)
        Sw = sample_covariance(task.X)
        pair = pair_with_angle(6, 2.5, 1.0, 1.0, seed)
        design = design_attack(Sw, pair, 0.01, 0.1, 12)
        diag = check_asymmetric(Sw, design.S_u, pair, 0.01)
        if not (diag.holds and stability_check(0.01, Sw, design.S_u).stable):
            return False, f"seed {seed}: criterion or stability failed"
        fp = solve_fixed_point(AgentSpec(Sw, pair.w_star, 0.01), AgentSpec(design.S_u, pair.u_star, 0.01))
        worst_cancel = max(worst_cancel, diag.cancel_norm / np.linalg.norm(pair.delta),
                           np.linalg.norm(fp.u_inf - pair.u_star))
        worst_victim = max(worst_victim, abs(np.linalg.norm(fp.w_inf - pair.w_star)
                                             - victim_residual(Sw, pair, 0.01)))
    ok = worst_cancel < 1e-9 and worst_victim < 1e-9
    return ok, f"attacker residual {worst_cancel:.2e}, victim formula gap {worst_victim:.2e}"


def _lsa() -> tuple[bool, str]:
    rng = rng_for(7)
    d, n = 2, 3
    de = 2 * d + 2
    params = LsaParams(V=rng.standard_normal((de, de)), A=rng.standard_normal((de, de)), d=d, n=n)
    task = generate_task(d, n, "unit", 3)
    hist = rng.standard_normal((4, d))
    Z = build_tokens(task, hist)
    _, pred = lsa_forward(Z, params)
    gap_fast = np.abs(pred - lsa_predict(params, task, hist)).max()
    pairs = build_pairs([task], 0.05, 5)
    _, dV, dA = batch_loss_and_grads(params.V, params.A, pairs.z, pairs.K, pairs.g, n, params.rows)
    h = 1e-6
    worst = 0.0
    for M, G in ((params.V, dV), (params.A, dA)):
        for idx in [(0, 0), (1, 4), (de - 1, 2), (3, 3)]:
            old = M[idx]
            M[idx] = old + h
            lp = batch_loss_and_grads(params.V, params.A, pairs.z, pairs.K, pairs.g, n, params.rows)[0]
            M[idx] = old - h
            lm = batch_loss_and_grads(params.V, params.A, pairs.z, pairs.K, pairs.g, n, params.rows)[0]
            M[idx] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - G[idx]) / max(abs(fd), 1e-8))
    return gap_fast < 1e-12 and worst < 1e-4, f"fast-path gap {gap_fast:.1e}, FD rel err {worst:.1e}"


def _interaction() -> tuple[bool, str]:
    worst = 0.0
    for seed in range(5):
        t1 = generate_task(5, 10, "unit", seed)
        t2 = generate_task(5, 10, "unit", seed + 100)
        traj = run_interaction(ExactOracle("mean"), ExactOracle("mean"), t1, t2, 0.01, 200)
        ref = run_alternating(AgentSpec(sample_covariance(t1.X), t1.target, 0.01),
                              AgentSpec(sample_covariance(t2.X), t2.target, 0.01), 200, 0.0)
        worst = max(worst, np.abs(traj.iterates - ref.iterates).max())
    return worst < 1e-12, f"max per-step deviation {worst:.1e}"


def _bridge() -> tuple[bool, str]:
    task = generate_task(4, 6, "unit", 1)
    w = rng_for(2).standard_normal(4)
    prompts = render_prompts(4, 6, task, w, [np.zeros(4)])
    back = parse_user_message(prompts.user)
    rel = max(np.abs(back["X"] - task.X).max() / np.abs(task.X).max(),
              np.abs(back["w_current"] - w).max() / np.abs(w).max())
    same = render_prompts(4, 6, task, w, [np.zeros(4)]) == prompts
    return bool(rel < 1e-11 and same and "4x6 matrix" in prompts.system), f"round-trip rel err {rel:.1e}"


SUITES: list[tuple[str, Check]] = [
    ("geometry", _geometry),
    ("dynamics: simulation vs direct fixed point", _fixed_point),
    ("predictor: residual identity and commuting case", _predictor),
    ("adversary: constructive guarantee", _adversary),
    ("lsa: forward fast path and FD gradients", _lsa),
    ("harness: interaction loop vs closed dynamics", _interaction),
    ("llm-bridge: prompt rendering round-trip", _bridge),
]


def run_suites() -> list[dict]:
    results = []
    for name, check in SUITES:
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"raised {exc!r}"
        results.append({"suite": name, "passed": bool(ok), "detail": detail,
                        "seconds": round(time.perf_counter() - t0, 3)})
    return results
