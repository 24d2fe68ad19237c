import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a2aopt.dynamics import (
    AgentSpec,
    plateau,
    run_alternating,
    solve_fixed_point,
    stability_check,
    step_agent,
)
from a2aopt.errors import ArgumentError, DivergenceError, SingularSystemError
from a2aopt.geometry import pair_with_angle, random_spd, rng_for

I2, I3 = np.eye(2), np.eye(3)


def test_step_agent_examples():
    t = np.array([0.3, -1.0])
    np.testing.assert_array_equal(step_agent(t, AgentSpec(np.diag([2.0, 1.0]), t, 0.1)), t)
    np.testing.assert_allclose(step_agent(np.zeros(2), AgentSpec(I2, t, 1.0)), t)
    out = step_agent(np.ones(2), AgentSpec(np.diag([2.0, 1.0]), np.zeros(2), 0.1))
    np.testing.assert_allclose(out, [0.8, 0.9], atol=1e-15)


def test_agent_spec_validation():
    with pytest.raises(ArgumentError):
        AgentSpec(I2, np.zeros(2), 0.0)
    with pytest.raises(ArgumentError):
        AgentSpec(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), 0.1)
    with pytest.raises(ArgumentError):
        AgentSpec(I2, np.zeros(3), 0.1)


def test_aligned_targets_collapse_to_single_agent():
    t = np.array([1.0, -2.0, 0.5])
    traj = run_alternating(AgentSpec(I3, t, 0.1), AgentSpec(I3, t, 0.1), 10_000, 1e-14)
    assert traj.err_w[-1] < 1e-8 and traj.err_u[-1] < 1e-8


def test_zero_gap_any_geometry_converges_to_target():
    t = rng_for(1).standard_normal(5)
    traj = run_alternating(AgentSpec(random_spd(5, 0.5, 2, 1), t, 0.05),
                           AgentSpec(random_spd(5, 0.2, 1, 2), t, 0.05), 20_000, 1e-14)
    assert traj.converged and max(traj.err_w[-1], traj.err_u[-1]) < 1e-10


def test_isotropic_orthogonal_targets_plateau():
    pair = pair_with_angle(4, np.pi / 2, 1, 1, 0)
    traj = run_alternating(AgentSpec(np.eye(4), pair.w_star, 0.005),
                           AgentSpec(np.eye(4), pair.u_star, 0.005), 20_000, 1e-13)
    for curve in (traj.err_w, traj.err_u):
        assert plateau(curve) == pytest.approx(np.sqrt(2) / 2, abs=0.01)


def test_trajectory_bookkeeping():
    traj = run_alternating(AgentSpec(I2, np.ones(2), 0.1), AgentSpec(I2, -np.ones(2), 0.1), 7, 0.0)
    assert traj.turns_run == 7 and traj.iterates.shape == (15, 2)
    assert len(traj.err_w) == len(traj.err_u) == 7
    assert traj.speakers()[:4] == ["init", "W", "U", "W"]
    np.testing.assert_array_equal(traj.iterates[0], 0.0)
    assert traj.err_w[-1] == pytest.approx(np.linalg.norm(traj.final_w - np.ones(2)))


def test_divergence_raises_with_turn():
    with pytest.raises(DivergenceError) as info:
        run_alternating(AgentSpec(I2, np.ones(2), 5.0), AgentSpec(I2, np.ones(2), 5.0), 1000)
    assert info.value.turn > 1


def test_stability_examples():
    s = stability_check(0.005, I3, I3)
    assert s.stable and s.eta_max == pytest.approx(2.0)
    assert not stability_check(3.0, I3, I3).stable
    eta = 0.005
    spike = np.diag([1 / eta, 180.0, 180.0])
    s = stability_check(eta, I3, spike)
    assert s.eta_max == pytest.approx(2 * eta) and s.stable


def test_fixed_point_isotropic_closed_form():
    pair = pair_with_angle(3, 1.2, 1.0, 2.0, 4)
    eta = 0.1
    fp = solve_fixed_point(AgentSpec(I3, pair.w_star, eta), AgentSpec(I3, pair.u_star, eta))
    np.testing.assert_allclose(fp.u_inf, ((1 - eta) * pair.w_star + pair.u_star) / (2 - eta), atol=1e-14)
    assert fp.residual < 1e-14


def test_fixed_point_shared_target():
    t = np.array([0.2, -0.7, 1.1])
    fp = solve_fixed_point(AgentSpec(random_spd(3, 0.5, 2, 0), t, 0.01),
                           AgentSpec(random_spd(3, 0.5, 2, 1), t, 0.01))
    np.testing.assert_allclose(fp.u_inf, t, atol=1e-12)
    np.testing.assert_allclose(fp.w_inf, t, atol=1e-12)


def test_fixed_point_singular_and_unstable():
    Z = np.zeros((2, 2))
    with pytest.raises(SingularSystemError):
        solve_fixed_point(AgentSpec(Z, np.ones(2), 0.1), AgentSpec(Z, np.zeros(2), 0.1))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        solve_fixed_point(AgentSpec(I2, np.ones(2), 3.0), AgentSpec(I2, np.zeros(2), 3.0))
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, np.pi))
def test_simulation_reaches_direct_fixed_point(seed, theta):
    d, eta = 6, 0.02
    pair = pair_with_angle(d, theta, 1.0, 1.5, seed)
    a = AgentSpec(random_spd(d, 0.5, 2.0, seed), pair.w_star, eta)
    b = AgentSpec(random_spd(d, 0.5, 2.0, seed + 1), pair.u_star, eta)
    traj = run_alternating(a, b, 20_000, 1e-13)
    fp = solve_fixed_point(a, b)
    assert traj.converged
    assert np.linalg.norm(traj.final_u - fp.u_inf) < 1e-9
    assert np.linalg.norm(traj.final_w - fp.w_inf) < 1e-9


def test_plateau_window():
    assert plateau([5.0] * 90 + [1.0] * 10) == pytest.approx(1.0)
    assert plateau([3.0]) == 3.0
    with pytest.raises(ArgumentError):
        plateau([])
