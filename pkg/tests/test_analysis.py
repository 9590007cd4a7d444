import numpy as np
import pytest

import kwcflow as kw
from kwcflow.analysis import Interpolants, refinement_experiment


M = kw.canonical(0.5)


def small_run(steps=12, n=12, family="hyperbola", nu=0.1, h=0.1, preset="jump"):
    g = kw.Grid((n,), 1.0 / n)
    eta0, theta0 = kw.make_initial(g, {"preset": preset})
    cfg = kw.RunConfig(g, M, kw.Regularizer(family, nu), h, steps, eta0, theta0)
    traj = kw.run(cfg)
    assert traj.completed
    return cfg, traj


def stationary_run(steps=12):
    g = kw.Grid((8,), 0.125)
    eta0, theta0 = kw.make_initial(g, {"preset": "uniform", "eta": 1.0, "theta": 0.0})
    cfg = kw.RunConfig(g, M, kw.Regularizer("hyperbola", 0.1), 0.1, steps, eta0, theta0)
    traj = kw.run(cfg)
    assert traj.completed
    return cfg, traj


def test_interpolants_agree_at_nodes():
    _, traj = small_run()
    interp = Interpolants(traj)
    for i, state in enumerate(traj.states):
        t = i * traj.h
        for reader in (interp.backward_constant, interp.forward_constant, interp.linear):
            eta, theta = reader(t)
            assert np.allclose(eta.values, state.eta.values, atol=1e-12)
            assert np.allclose(theta.values, state.theta.values, atol=1e-12)


def test_interpolants_bracket_linear_between_nodes():
    _, traj = small_run()
    interp = Interpolants(traj)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, interp.horizon, 25):
        forward = interp.forward_constant(t)
        backward = interp.backward_constant(t)
        lin = interp.linear(t)
        lo = np.minimum(forward[1].values, backward[1].values)
        hi = np.maximum(forward[1].values, backward[1].values)
        assert np.all(lin[1].values >= lo - 1e-12)
        assert np.all(lin[1].values <= hi + 1e-12)


def test_linear_interpolant_is_continuous():
    _, traj = small_run()
    interp = Interpolants(traj)
    for t in np.linspace(0.0, interp.horizon, 37):
        left = interp.linear(max(t - 1e-9, 0.0))
        right = interp.linear(min(t + 1e-9, interp.horizon))
        assert np.abs(left[0].values - right[0].values).max() < 1e-6
        assert np.abs(left[1].values - right[1].values).max() < 1e-6


def test_interpolants_clamp_beyond_horizon():
    _, traj = small_run()
    interp = Interpolants(traj)
    eta, theta = interp.linear(interp.horizon + 5.0)
    assert np.array_equal(eta.values, traj.states[-1].eta.values)
    assert np.array_equal(theta.values, traj.states[-1].theta.values)


def audit_of(cfg, traj):
    consts = kw.stability_constants(
        cfg.model, traj.theta_sup0(), cfg.grid.measure, "r1_zero"
    )
    return kw.energy_inequality_audit(
        traj, cfg.model, consts, (traj.states[0].eta, traj.states[0].theta)
    )


def test_audit_stationary_trajectory():
    cfg, traj = stationary_run()
    report = audit_of(cfg, traj)
    assert report.passed
    assert np.allclose(report.step_slacks, 0.0, atol=1e-12)
    assert np.all(report.comparison_slacks > 0)


def test_audit_small_run_passes():
    cfg, traj = small_run()
    report = audit_of(cfg, traj)
    assert report.passed, {
        "step": report.step_slacks.min(),
        "weighted": report.weighted_slacks.min(),
        "comparison": report.comparison_slacks.min(),
    }


def test_weighted_slack_at_m1_matches_scaled_step_slack():
    cfg, traj = small_run()
    report = audit_of(cfg, traj)
    assert report.weighted_slacks[0] == pytest.approx(
        cfg.h * report.step_slacks[0], rel=1e-12, abs=1e-15
    )


def test_audit_reference_preconditions():
    cfg, traj = small_run()
    consts = kw.stability_constants(cfg.model, traj.theta_sup0(), cfg.grid.measure)
    g = cfg.grid
    bad_w = kw.ScalarField(g, np.full(g.extents, 1.5))
    good_v = traj.states[0].theta
    with pytest.raises(kw.PreconditionError):
        kw.energy_inequality_audit(traj, cfg.model, consts, (bad_w, good_v))
    big_v = kw.ScalarField(g, np.full(g.extents, 100.0))
    with pytest.raises(kw.PreconditionError):
        kw.energy_inequality_audit(traj, cfg.model, consts, (traj.states[0].eta, big_v))


def test_audit_requires_completed_trajectory():
    cfg, traj = small_run()
    broken = kw.Trajectory(cfg, traj.states, traj.reports, completed=False, failure="x")
    consts = kw.stability_constants(cfg.model, 1.0, cfg.grid.measure)
    with pytest.raises(kw.PreconditionError):
        kw.energy_inequality_audit(broken, cfg.model, consts, (traj.states[0].eta, traj.states[0].theta))


def test_max_principle_audit():
    _, traj = small_run()
    report = kw.max_principle_audit(traj)
    assert report["passed"]
    assert report["eta_max"] <= 1.0 + 1e-9
    assert report["theta_abs_max"] <= report["theta_sup0"] + 1e-9


# ---------------------------------------------------------------------------


def test_gamma_constant_field_all_zero():
    g = kw.Grid((16,), 1 / 16)
    beta = kw.ScalarField(g, np.ones(16))
    v = kw.ScalarField(g, np.full(16, 0.4))
    table = kw.gamma_diagnostic(beta, v, "hyperbola", [0.1, 0.01])
    assert np.all(table.errors == 0.0)
    assert table.lower_bound_ok


def test_gamma_jump_errors_decrease():
    g = kw.Grid((64,), 1 / 64)
    beta = kw.ScalarField(g, np.ones(64))
    v = kw.ScalarField(g, np.where(np.arange(64) < 32, 0.0, 1.0))
    table = kw.gamma_diagnostic(beta, v, "hyperbola", [0.1, 0.01, 0.001])
    assert table.errors_decreasing
    assert table.rows[-1].recovery_error < 0.05 * table.rows[0].sharp_value
    assert table.lower_bound_ok


def test_gamma_lower_bound_random_pairs():
    rng = np.random.default_rng(1)
    g = kw.Grid((24,), 1 / 24)
    for _ in range(20):
        beta = kw.ScalarField(g, rng.uniform(0.2, 3.0, 24))
        v = kw.ScalarField(g, rng.normal(size=24) * rng.choice([0.1, 1.0, 10.0]))
        table = kw.gamma_diagnostic(beta, v, "hyperbola", [0.2, 0.05])
        assert table.lower_bound_ok


def test_gamma_preconditions():
    g = kw.Grid((16,), 1 / 16)
    v = kw.ScalarField(g, np.zeros(16))
    flat = kw.ScalarField(g, np.zeros(16))
    with pytest.raises(kw.PreconditionError):
        kw.gamma_diagnostic(flat, v, "hyperbola", [0.1, 0.01])
    beta = kw.ScalarField(g, np.ones(16))
    with pytest.raises(kw.PreconditionError):
        kw.gamma_diagnostic(beta, v, "hyperbola", [0.01, 0.1])
    with pytest.raises(kw.PreconditionError):
        kw.gamma_diagnostic(beta, v, "hyperbola", [1.5, 0.1])


# ---------------------------------------------------------------------------


def refine_template(n=32):
    g = kw.Grid((n,), 1.0 / n)
    eta0, theta0 = kw.make_initial(g, {"preset": "jump"})
    return kw.RunConfig(g, M, kw.Regularizer("hyperbola", 0.2), 0.25, 1, eta0, theta0)


def test_refinement_identical_pairs_zero_distance():
    template = refine_template(12)
    report = refinement_experiment(template, [(0.2, 0.25), (0.2, 0.25)], 0.5)
    assert report.all_completed
    assert report.state_distances[0] == 0.0


def test_refinement_cauchy_decrease():
    template = refine_template()
    report = refinement_experiment(
        template, [(0.2, 0.25), (0.1, 0.125), (0.05, 0.0625)], 1.0
    )
    assert report.all_completed
    assert report.cauchy_ok, report.state_distances


def test_refinement_gate_mutation():
    template = refine_template(12)
    # increasing h violates joint descent
    with pytest.raises(kw.PreconditionError):
        refinement_experiment(template, [(0.2, 0.125), (0.1, 0.25)], 0.5)
    with pytest.raises(kw.PreconditionError):
        refinement_experiment(template, [(0.2, 0.25)], 0.5)
    with pytest.raises(kw.PreconditionError):
        refinement_experiment(template, [(0.2, 0.3), (0.1, 0.125)], 1.0)


# ---------------------------------------------------------------------------


def test_omega_audit_steady_initial_data():
    _, traj = stationary_run()
    report = kw.omega_limit_audit(traj, M)
    assert report.theta_sd == 0.0
    assert report.weighted_tv_final == 0.0
    assert report.steady_residual <= 1e-10
    assert report.ranges_ok
    assert report.sd_tail_monotone
    assert report.passed


def test_omega_audit_requires_ten_steps():
    _, traj = stationary_run(steps=5)
    with pytest.raises(kw.PreconditionError):
        kw.omega_limit_audit(traj, M)


def test_omega_audit_long_run_converges():
    cfg, traj = small_run(steps=300, n=16, nu=0.05, h=0.05)
    report = kw.omega_limit_audit(traj, cfg.model)
    assert report.theta_sd < 1e-3
    assert report.weighted_tv_final < 1e-3
    assert report.steady_residual < 1e-5
    assert report.sd_tail_monotone
    assert report.passed
