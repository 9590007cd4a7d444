import numpy as np
import pytest

import kwcflow as kw
from kwcflow.model import ModelBounds, ModelFunctions

from oracles import coordinate_descent, eta_energy_literal, theta_energy_literal
from test_model import constant_alpha_model


M = kw.canonical(0.5)


def small_state(rng, n=8, dx=0.25, eta=None, theta=None):
    g = kw.Grid((n,), dx)
    eta = rng.uniform(0.1, 0.9, n) if eta is None else np.asarray(eta, dtype=float)
    theta = rng.normal(size=n) if theta is None else np.asarray(theta, dtype=float)
    return kw.State(kw.ScalarField(g, eta), kw.ScalarField(g, theta), 0.0, 0)


def test_eta_step_stationary_at_one():
    rng = np.random.default_rng(0)
    st = small_state(rng, eta=np.ones(8), theta=np.full(8, 0.4))
    eta_new, diag = kw.eta_step(st, M, kw.Regularizer("hyperbola", 0.1), 0.1)
    assert np.allclose(eta_new.values, 1.0, atol=1e-12)
    assert diag.residual <= 1e-10


def test_eta_step_scalar_fixed_point():
    rng = np.random.default_rng(1)
    st = small_state(rng, eta=np.full(8, 0.5), theta=np.zeros(8))
    eta_new, _ = kw.eta_step(st, M, kw.Regularizer("hyperbola", 0.1), 0.1)
    assert np.allclose(eta_new.values, 6.0 / 11.0, atol=1e-11)


def test_eta_step_matches_brute_force_with_theta_jump():
    rng = np.random.default_rng(2)
    g = kw.Grid((8,), 0.25)
    theta = np.where(np.arange(8) < 4, -0.5, 0.5)
    st = kw.State(kw.ScalarField(g, rng.uniform(0.2, 0.9, 8)), kw.ScalarField(g, theta), 0.0, 0)
    reg = kw.Regularizer("hyperbola", 0.2)
    eta_new, _ = kw.eta_step(st, M, reg, 0.1)
    f = lambda x: eta_energy_literal(x, st.eta.values, st.theta.values, M, reg, 0.1, 0.25)
    oracle = coordinate_descent(f, st.eta.values, span=1.0)
    assert np.abs(eta_new.values - oracle).max() <= 1e-6


def test_eta_step_size_gate():
    # a model whose g' is strongly negative forces the margin gate
    steep = ModelFunctions(
        g=lambda t: -10.0 * np.asarray(t, dtype=float),
        ghat=lambda t: -5.0 * np.asarray(t, dtype=float) ** 2 + 10.0,
        alpha0=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        alpha=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        alpha_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        delta_alpha=0.9,
        bounds=ModelBounds(10, 10, 10, 10, 1, 0, 1, 0, 0, -10.0, 0.0),
        g_prime=lambda t: -10.0 * np.ones_like(np.asarray(t, dtype=float)),
        alpha_pp=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
    )
    rng = np.random.default_rng(3)
    st = small_state(rng)
    with pytest.raises(kw.StepSizeError):
        kw.eta_step(st, steep, kw.Regularizer("hyperbola", 0.1), h=1.0)
    eta_new, _ = kw.eta_step(st, steep, kw.Regularizer("hyperbola", 0.1), h=0.01)
    assert np.isfinite(eta_new.values).all()


def test_theta_step_stationary():
    rng = np.random.default_rng(4)
    st = small_state(rng, theta=np.full(8, 1.2))
    theta_new, diag = kw.theta_step(st.eta, st, M, kw.Regularizer("hyperbola", 0.1), 0.1)
    assert np.array_equal(theta_new.values, st.theta.values)
    assert diag.residual <= 1e-10
    assert diag.iterations == 0


def test_theta_step_two_cell_brute_force():
    ones = constant_alpha_model()
    g = kw.Grid((2,), 1.0)
    st = kw.State(kw.ScalarField(g, [1.0, 1.0]), kw.ScalarField(g, [0.0, 1.0]), 0.0, 0)
    reg = kw.Regularizer("hyperbola", 0.1)
    theta_new, _ = kw.theta_step(st.eta, st, ones, reg, 1.0)
    f = lambda x: theta_energy_literal(x, st.theta.values, st.eta.values, ones, reg, 1.0, 1.0)
    oracle = coordinate_descent(f, st.theta.values, span=2.0)
    assert np.abs(theta_new.values - oracle).max() <= 1e-8
    # symmetric contraction toward the mean
    assert theta_new.values[0] + theta_new.values[1] == pytest.approx(1.0, abs=1e-9)


def test_theta_step_maximum_principle_random_data():
    rng = np.random.default_rng(5)
    families = ["hyperbola", "yosida", "tanh", "arctan", "pgrowth"]
    for trial in range(10):
        n = int(rng.integers(3, 9))
        g = kw.Grid((n,), float(rng.uniform(0.2, 0.5)))
        st = kw.State(
            kw.ScalarField(g, rng.uniform(0, 1, n)),
            kw.ScalarField(g, rng.normal(size=n)),
            0.0,
            0,
        )
        reg = kw.Regularizer(families[trial % 5], float(rng.uniform(0.1, 0.5)))
        theta_new, _ = kw.theta_step(st.eta, st, M, reg, float(rng.uniform(0.05, 0.3)))
        assert np.abs(theta_new.values).max() <= np.abs(st.theta.values).max() + 1e-9


def test_step_stationary_identity():
    g = kw.Grid((6, 6), 0.25)
    st = kw.State(
        kw.ScalarField(g, np.ones((6, 6))),
        kw.ScalarField(g, np.full((6, 6), 0.7)),
        0.0,
        0,
    )
    new, report = kw.step(st, M, kw.Regularizer("hyperbola", 0.1), 0.1)
    assert np.allclose(new.eta.values, 1.0, atol=1e-12)
    assert np.array_equal(new.theta.values, st.theta.values)
    assert report.ene_inq_slack == pytest.approx(0.0, abs=1e-12)
    assert report.eta_increment_sq <= 1e-24


def test_step_dissipates_2d():
    g = kw.Grid((16, 16), 1 / 16)
    eta0, theta0 = kw.make_initial(g, {"preset": "jump"})
    st = kw.State(eta0, theta0, 0.0, 0)
    opts = kw.SolverOptions()
    new, report = kw.step(st, M, kw.Regularizer("hyperbola", 0.05), 0.05, opts)
    assert report.energy_after <= report.energy_before + 10 * opts.newton_tol
    assert report.ene_inq_slack >= -10 * opts.newton_tol
    assert new.t == pytest.approx(0.05)
    assert new.step_index == 1


def test_weighted_sum_inequality_accumulates():
    g = kw.Grid((12,), 1 / 12)
    eta0, theta0 = kw.make_initial(g, {"preset": "jump"})
    cfg = kw.RunConfig(g, M, kw.Regularizer("hyperbola", 0.1), 0.1, 15, eta0, theta0)
    traj = kw.run(cfg)
    assert traj.completed
    F = traj.energy_trace()
    tol = 10 * cfg.solver.newton_tol
    for m_stop in range(1, 16):
        lhs = 0.0
        for i in range(1, m_stop + 1):
            r = traj.reports[i - 1]
            lhs += 0.5 * i * r.eta_increment_sq + i * r.theta_weighted_increment_sq
        lhs += m_stop * cfg.h * F[m_stop]
        rhs = cfg.h * F[:m_stop].sum()
        assert lhs <= rhs + tol * cfg.h * m_stop * (m_stop + 1) / 2 + 1e-12


def test_run_zero_steps():
    g = kw.Grid((8,), 0.125)
    eta0, theta0 = kw.make_initial(g, {"preset": "uniform", "eta": 0.5, "theta": 1.0})
    cfg = kw.RunConfig(g, M, kw.Regularizer("hyperbola", 0.1), 0.1, 0, eta0, theta0)
    traj = kw.run(cfg)
    assert traj.completed
    assert len(traj.states) == 1
    assert len(traj.energy_trace()) == 1


def test_run_determinism():
    g = kw.Grid((10, 10), 0.1)
    eta0, theta0 = kw.make_initial(g, {"preset": "checker", "blocks": 3, "amplitude": 0.8})
    cfg = kw.RunConfig(g, M, kw.Regularizer("tanh", 0.1), 0.05, 8, eta0, theta0)
    t1 = kw.run(cfg)
    t2 = kw.run(cfg)
    assert t1.completed and t2.completed
    for s1, s2 in zip(t1.states, t2.states):
        assert np.array_equal(s1.eta.values, s2.eta.values)
        assert np.array_equal(s1.theta.values, s2.theta.values)


def test_run_aborts_with_partial_trajectory():
    steep = ModelFunctions(
        g=lambda t: -10.0 * np.asarray(t, dtype=float),
        ghat=lambda t: -5.0 * np.asarray(t, dtype=float) ** 2 + 10.0,
        alpha0=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        alpha=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        alpha_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        delta_alpha=0.9,
        bounds=ModelBounds(10, 10, 10, 10, 1, 0, 1, 0, 0, -10.0, 0.0),
        g_prime=lambda t: -10.0 * np.ones_like(np.asarray(t, dtype=float)),
        alpha_pp=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
    )
    g = kw.Grid((6,), 0.25)
    eta0 = kw.ScalarField(g, np.full(6, 0.5))
    theta0 = kw.ScalarField(g, np.zeros(6))
    cfg = kw.RunConfig(g, steep, kw.Regularizer("hyperbola", 0.1), 1.0, 5, eta0, theta0)
    traj = kw.run(cfg)
    assert not traj.completed
    assert traj.failure is not None
    assert len(traj.states) == 1


def test_solver_error_carries_history():
    rng = np.random.default_rng(6)
    g = kw.Grid((8,), 0.25)
    st = kw.State(
        kw.ScalarField(g, rng.uniform(0.2, 0.8, 8)),
        kw.ScalarField(g, rng.normal(size=8)),
        0.0,
        0,
    )
    opts = kw.SolverOptions(newton_tol=1e-10, max_iter=0)
    with pytest.raises(kw.SolverError) as err:
        kw.eta_step(st, M, kw.Regularizer("hyperbola", 0.1), 0.1, opts)
    assert len(err.value.residual_history) >= 1


def test_make_initial_presets():
    g = kw.Grid((8, 8), 0.125)
    eta, theta = kw.make_initial(g, {"preset": "uniform", "eta": 0.25, "theta": -0.5})
    assert np.all(eta.values == 0.25)
    assert np.all(theta.values == -0.5)
    eta, theta = kw.make_initial(g, {"preset": "jump", "amplitude": 2.0, "axis": 1})
    assert np.all(theta.values[:, :4] == 0.0)
    assert np.all(theta.values[:, 4:] == 2.0)
    eta, theta = kw.make_initial(g, {"preset": "checker", "blocks": 2, "amplitude": 1.5})
    assert set(np.unique(theta.values)) == {0.0, 1.5}
    assert theta.values[0, 0] == 0.0 and theta.values[0, 2] == 1.5


def test_make_initial_file_round_trip(tmp_path):
    g = kw.Grid((6,), 0.2)
    rng = np.random.default_rng(7)
    eta = kw.ScalarField(g, rng.uniform(0, 1, 6))
    theta = kw.ScalarField(g, rng.normal(size=6))
    path = tmp_path / "state.txt"
    kw.write_state(str(path), eta, theta, 0.0)
    e2, t2 = kw.make_initial(g, f"file:{path}")
    assert np.array_equal(e2.values, eta.values)
    assert np.array_equal(t2.values, theta.values)
    wrong_grid = kw.Grid((6,), 0.4)
    with pytest.raises(kw.ConfigError):
        kw.make_initial(wrong_grid, f"file:{path}")


def test_make_initial_validation():
    g = kw.Grid((4,), 0.25)
    with pytest.raises(kw.ConfigError):
        kw.make_initial(g, {"preset": "uniform", "eta": 1.5})
    with pytest.raises(kw.ConfigError):
        kw.make_initial(g, {"preset": "vortex"})
    with pytest.raises(kw.ConfigError):
        kw.make_initial(g, {"preset": "jump", "angle": 3})
    with pytest.raises(kw.ConfigError):
        kw.make_initial(g, {"preset": "jump", "axis": 1})


def test_run_config_validation():
    g = kw.Grid((4,), 0.25)
    eta0 = kw.ScalarField(g, np.full(4, 0.5))
    theta0 = kw.ScalarField(g, np.zeros(4))
    reg = kw.Regularizer("hyperbola", 0.1)
    with pytest.raises(kw.ConfigError):
        kw.RunConfig(g, M, reg, -0.1, 5, eta0, theta0)
    with pytest.raises(kw.ConfigError):
        kw.RunConfig(g, M, reg, 0.1, -1, eta0, theta0)
    bad_eta = kw.ScalarField(g, np.full(4, 1.2))
    with pytest.raises(kw.ConfigError):
        kw.RunConfig(g, M, reg, 0.1, 5, bad_eta, theta0)
