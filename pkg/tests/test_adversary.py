import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a2aopt.adversary import (
    AttackDesign,
    check_asymmetric,
    default_thresholds,
    design_attack,
    evaluate_attack,
    realize_geometry,
    victim_residual,
)
from a2aopt.dynamics import AgentSpec, Trajectory, run_alternating, stability_check
from a2aopt.errors import ArgumentError, BlindAttackError, DegenerateInputError, InfeasibleAttackError
from a2aopt.geometry import ObjectivePair, generate_task, pair_with_angle, sample_covariance


def _pair(w, u):
    return ObjectivePair(np.asarray(w, dtype=float), np.asarray(u, dtype=float))


def test_hand_example_two_dimensions():
    Sw = np.diag([1.0, 2.0])
    pair = _pair([0.0, 0.0], [0.0, 1.0])
    design = design_attack(Sw, pair, eta=0.1, tau=0.1, n=2)
    np.testing.assert_allclose(design.v, [0.0, 2.0])
    np.testing.assert_allclose(design.S_u, np.diag([9.0, 10.0]), atol=1e-12)
    np.testing.assert_allclose((np.eye(2) - 0.1 * design.S_u) @ Sw @ pair.delta, 0.0, atol=1e-12)
    np.testing.assert_allclose((0.1 * Sw - np.eye(2)) @ pair.delta, [0.0, -0.8])
    assert design.diagnosis.holds


def test_default_epsilon_and_spike():
    pair = pair_with_angle(4, 2.0, 1, 1, 0)
    design = design_attack(np.eye(4) * 3, pair, eta=0.005, tau=0.1)
    assert design.epsilon == pytest.approx(180.0)
    lam = np.linalg.eigvalsh(design.S_u)
    assert lam[-1] == pytest.approx(200.0) and lam[0] == pytest.approx(180.0)
    assert stability_check(0.005, np.eye(4) * 3, design.S_u).eta_max == pytest.approx(0.01)


def test_check_asymmetric_negative_cases():
    pair = _pair([0.0, 0.0], [1.0, -1.0])
    diag = check_asymmetric(np.eye(2), np.eye(2), pair, 0.1)
    assert not diag.holds and diag.cancel_norm == pytest.approx(0.9 * np.sqrt(2))
    # Delta an eigenvector of S_W with eigenvalue 1/eta: W fixes itself in one step
    diag = check_asymmetric(np.eye(2) * 10, np.eye(2) * 10, pair, 0.1)
    assert diag.escape_norm == pytest.approx(0.0, abs=1e-15) and not diag.holds
    with pytest.raises(DegenerateInputError):
        check_asymmetric(np.eye(2), np.eye(2), _pair([1, 1], [1, 1]), 0.1)


def test_design_attack_failure_modes():
    pair = _pair([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(BlindAttackError):
        design_attack(np.diag([0.0, 1.0]), pair, 0.1)
    with pytest.raises(InfeasibleAttackError):
        design_attack(np.eye(2) * 10, pair, 0.1)
    with pytest.raises(DegenerateInputError):
        design_attack(np.eye(2), _pair([1, 0], [1, 0]), 0.1)
    with pytest.raises(ArgumentError):
        design_attack(np.eye(2), pair, 0.1, tau=1.5)
    with pytest.raises(ArgumentError):
        design_attack(np.eye(2), pair, 0.1, epsilon=20.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, np.pi), st.sampled_from(["mean", "sum"]))
def test_attack_is_exact_for_gradient_agents(seed, theta, mode):
    task = generate_task(5, 8, "unit", seed)
    Sw = sample_covariance(task.X) * (task.n if mode == "sum" else 1)
    eta = 0.005
    pair = pair_with_angle(5, theta, 1.0, 1.0, seed)
    design = design_attack(Sw, pair, eta, 0.1, 8, loss_mode=mode)
    assert design.diagnosis.holds and design.diagnosis.cancel_norm <= 1e-10 * max(1, np.linalg.norm(Sw))
    realized = design.X_u @ design.X_u.T / (8 if mode == "mean" else 1)
    np.testing.assert_allclose(realized, design.S_u, atol=1e-9 * np.abs(design.S_u).max())
    traj = run_alternating(AgentSpec(Sw, pair.w_star, eta), AgentSpec(design.S_u, pair.u_star, eta), 50_000, 1e-14)
    assert np.linalg.norm(traj.final_u - pair.u_star) < 1e-9
    assert np.linalg.norm(traj.final_w - pair.w_star) == pytest.approx(victim_residual(Sw, pair, eta), abs=1e-9)


def test_realize_geometry_pads_and_validates():
    S = np.diag([4.0, 1.0, 0.0])
    X = realize_geometry(S, 5, "sum")
    assert X.shape == (3, 5)
    np.testing.assert_allclose(X @ X.T, S, atol=1e-12)
    X = realize_geometry(S, 5, "mean")
    np.testing.assert_allclose(X @ X.T / 5, S, atol=1e-12)
    with pytest.raises(ArgumentError):
        realize_geometry(np.eye(3), 2)


def test_attack_design_round_trip():
    design = design_attack(np.diag([1.0, 2.0, 3.0]), _pair([1, 0, 0], [0, 1, 0]), 0.05, 0.2, 4)
    back = AttackDesign.from_json(design.to_json())
    np.testing.assert_array_equal(back.S_u, design.S_u)
    np.testing.assert_array_equal(back.X_u, design.X_u)
    assert back.diagnosis == design.diagnosis and back.tau == design.tau and back.n == 4


def _fake_traj(w, u, pair):
    iterates = np.array([np.zeros_like(w), w, u])
    return Trajectory(iterates, [float(np.linalg.norm(w - pair.w_star))],
                      [float(np.linalg.norm(u - pair.u_star))], True, 1)


def test_evaluate_attack_thresholds():
    pair = _pair([0.0, 0.0], [1.0, 0.0])
    traj = _fake_traj(np.array([0.8, 0.0]), np.array([1.0 + 1e-6, 0.0]), pair)
    out = evaluate_attack(traj, pair, 0.1, 1e-3)
    assert out.success and out.final_err_w == pytest.approx(0.8)
    assert not evaluate_attack(traj, pair, 0.1, 0.0).success


def test_aligned_objectives_are_not_a_success():
    t = np.array([1.0, 2.0])
    pair = _pair(t, t + 1e-12)
    traj = _fake_traj(t, t, pair)
    assert not evaluate_attack(traj, pair).success
    e1, e2 = default_thresholds(_pair([0, 0], [3, 4]))
    assert e1 == pytest.approx(0.5) and e2 == pytest.approx(5e-3)
