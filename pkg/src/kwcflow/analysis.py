"""Post-hoc audits over completed trajectories.

Four audit families:

* energy_inequality_audit checks, term by term, the per-step dissipation
  inequality, its index-weighted cumulative form, and the reference-pair
  comparison inequality built from the stability constants.
* gamma_diagnostic probes variational convergence of the relaxed TV
  functionals toward the sharp one along a decreasing nu-sequence, via
  mollified recovery fields and the integrated lower bound.
* refinement_experiment reruns a configuration along jointly decreasing
  (nu, h) pairs and reports Cauchy-like contraction of the final states.
* omega_limit_audit measures how close the trajectory tail is to the
  stationary set: constant angle field and an order parameter solving the
  steady reaction-diffusion equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .energy import (
    grad_stack_norms,
    relaxed_free_energy,
    relaxed_wtv,
    weight_mass,
    weighted_tv,
)
from .errors import PreconditionError
from .grid import ScalarField, gradient, neumann_laplacian, require_same_grid
from .model import ModelFunctions, StabilityConstants
from .regularizers import Regularizer
from .stepper import RunConfig, Trajectory, run


class Interpolants:
    """Backward-constant, forward-constant, and piecewise-linear readers.

    All three agree with the recorded states at node times i*h; between
    nodes the linear one is bracketed cellwise by the two constants.
    """

    def __init__(self, trajectory: Trajectory):
        self.trajectory = trajectory
        self.h = trajectory.h
        self.etas = np.stack([s.eta.values for s in trajectory.states])
        self.thetas = np.stack([s.theta.values for s in trajectory.states])
        self.grid = trajectory.states[0].eta.grid

    @property
    def horizon(self) -> float:
        return (len(self.trajectory.states) - 1) * self.h

    def _clip(self, i: float) -> int:
        return int(min(max(i, 0), len(self.trajectory.states) - 1))

    def backward_constant(self, t: float):
        """Value held from the right node: state i on ((i-1)h, ih]."""
        i = self._clip(math.ceil(t / self.h - 1e-12))
        return self._pair(self.etas[i], self.thetas[i])

    def forward_constant(self, t: float):
        """Value held from the left node: state i-1 on [(i-1)h, ih)."""
        i = self._clip(math.floor(t / self.h + 1e-12))
        return self._pair(self.etas[i], self.thetas[i])

    def linear(self, t: float):
        i = self._clip(math.floor(t / self.h + 1e-12))
        j = self._clip(i + 1)
        lam = min(max(t / self.h - i, 0.0), 1.0)
        return self._pair(
            (1.0 - lam) * self.etas[i] + lam * self.etas[j],
            (1.0 - lam) * self.thetas[i] + lam * self.thetas[j],
        )

    def _pair(self, e, th):
        return ScalarField(self.grid, e), ScalarField(self.grid, th)


@dataclass
class AuditReport:
    """Slack of every audited inequality; nonnegative (up to tol) passes."""

    step_slacks: np.ndarray
    step_tol: float
    monotone_slacks: np.ndarray
    weighted_slacks: np.ndarray
    weighted_tols: np.ndarray
    integral_slacks: np.ndarray
    comparison_slacks: np.ndarray
    constants: StabilityConstants
    reference_norms: dict

    @property
    def step_ok(self) -> bool:
        return bool((self.step_slacks >= -self.step_tol).all())

    @property
    def monotone_ok(self) -> bool:
        return bool((self.monotone_slacks >= -self.step_tol).all())

    @property
    def weighted_ok(self) -> bool:
        return bool((self.weighted_slacks >= -self.weighted_tols).all())

    @property
    def integral_ok(self) -> bool:
        return bool((self.integral_slacks >= -self.weighted_tols).all())

    @property
    def comparison_ok(self) -> bool:
        return bool((self.comparison_slacks >= 0.0).all())

    @property
    def passed(self) -> bool:
        return (
            self.step_ok
            and self.monotone_ok
            and self.weighted_ok
            and self.integral_ok
            and self.comparison_ok
        )


def _l2_sq(grid, values) -> float:
    return float((values * values).sum() * grid.cell_volume)


def _h1_sq(field_: ScalarField) -> float:
    grid = field_.grid
    s = grad_stack_norms(grid, field_.values)
    return _l2_sq(grid, field_.values) + float((s * s).sum() * grid.cell_volume)


def energy_inequality_audit(
    trajectory: Trajectory,
    m: ModelFunctions,
    consts: StabilityConstants,
    reference,
    slack_factor: float = 10.0,
) -> AuditReport:
    """Evaluate the three inequality families exactly as displayed.

    reference is the pair (w0, v0) of ScalarFields with 0 <= w0 <= 1 and
    |v0| <= sup|theta0|; the trajectory must be complete.
    """
    if not trajectory.completed:
        raise PreconditionError("audit requires a complete trajectory")
    w0, v0 = reference
    grid = require_same_grid(w0, v0, trajectory.states[0].eta)
    sup0 = trajectory.theta_sup0()
    if w0.values.min() < -1e-12 or w0.values.max() > 1.0 + 1e-12:
        raise PreconditionError("reference w0 must take values in [0, 1]")
    if np.abs(v0.values).max() > sup0 + 1e-12:
        raise PreconditionError("reference v0 must satisfy |v0| <= sup|theta0|")

    h = trajectory.h
    tol = slack_factor * trajectory.config.solver.newton_tol
    energies = trajectory.energy_trace()
    m_steps = len(trajectory.reports)
    eta_inc = np.array([r.eta_increment_sq for r in trajectory.reports])
    th_inc = np.array([r.theta_weighted_increment_sq for r in trajectory.reports])

    step_slacks = energies[:-1] - energies[1:] - eta_inc / (2.0 * h) - th_inc / h
    monotone_slacks = energies[:-1] - energies[1:]

    idx = np.arange(1, m_steps + 1)
    lhs_weighted = 0.5 * np.cumsum(idx * eta_inc) + np.cumsum(idx * th_inc)
    rhs_weighted = h * np.cumsum(energies[:-1])
    weighted_slacks = rhs_weighted - lhs_weighted - idx * h * energies[1:]
    weighted_tols = tol * h * idx * (idx + 1) / 2.0 + 1e-12
    integral_slacks = rhs_weighted - idx * h * energies[1:]

    a_star, b_star, c_star = consts.a_star, consts.b_star, consts.c_star
    ref_norm = 1.0 + _h1_sq(w0) + _h1_sq(v0)
    eta_dist0 = _l2_sq(grid, trajectory.states[0].eta.values - w0.values)
    th_dist0 = _l2_sq(grid, trajectory.states[0].theta.values - v0.values)
    comparison = np.empty(m_steps)
    for mm in range(1, m_steps + 1):
        state = trajectory.states[mm]
        lhs = 0.5 * (
            _l2_sq(grid, state.eta.values - w0.values)
            + a_star * _l2_sq(grid, state.theta.values - v0.values)
        ) + 0.5 * b_star * h * float(energies[:mm].sum())
        rhs = (
            0.5 * (eta_dist0 + a_star * th_dist0)
            + (h / b_star) * energies[0]
            + mm * h * c_star * ref_norm
        )
        comparison[mm - 1] = rhs - lhs

    return AuditReport(
        step_slacks=step_slacks,
        step_tol=tol,
        monotone_slacks=monotone_slacks,
        weighted_slacks=weighted_slacks,
        weighted_tols=weighted_tols,
        integral_slacks=integral_slacks,
        comparison_slacks=comparison,
        constants=consts,
        reference_norms={"w0_h1_sq": _h1_sq(w0), "v0_h1_sq": _h1_sq(v0)},
    )


def max_principle_audit(trajectory: Trajectory, range_tol: float = 1e-9) -> dict:
    """Range invariance of both fields along the whole trajectory."""
    sup0 = trajectory.theta_sup0()
    eta_min = min(float(s.eta.values.min()) for s in trajectory.states)
    eta_max = max(float(s.eta.values.max()) for s in trajectory.states)
    theta_max = max(float(np.abs(s.theta.values).max()) for s in trajectory.states)
    return {
        "eta_min": eta_min,
        "eta_max": eta_max,
        "theta_abs_max": theta_max,
        "theta_sup0": sup0,
        "passed": bool(
            eta_min >= -range_tol and eta_max <= 1.0 + range_tol and theta_max <= sup0 + range_tol
        ),
    }


# ---------------------------------------------------------------------------


@dataclass
class GammaRow:
    nu: float
    width: float
    sharp_value: float
    recovery_value: float
    recovery_error: float
    lower_lhs: float
    lower_rhs: float
    lower_slack: float


@dataclass
class GammaTable:
    rows: list

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.recovery_error for r in self.rows])

    @property
    def errors_decreasing(self) -> bool:
        e = self.errors
        return bool((np.diff(e) < 0).all())

    @property
    def lower_bound_ok(self) -> bool:
        return all(r.lower_slack >= -1e-12 for r in self.rows)


def mollify(v: ScalarField, width: float) -> ScalarField:
    """Discrete Gaussian smoothing with edge replication (zero-flux)."""
    grid = v.grid
    sigma_cells = width / grid.dx
    smoothed = gaussian_filter(v.values, sigma=sigma_cells, mode="nearest", truncate=4.0)
    return ScalarField(grid, smoothed)


def gamma_diagnostic(beta: ScalarField, v: ScalarField, family: str, nus) -> GammaTable:
    """Recovery-sequence and lower-bound diagnostics along a nu-sequence.

    Recovery widths follow sqrt(nu) times the longest domain side, which
    sends the Tikhonov term to zero while the mollified field still resolves
    the sharp TV value.
    """
    grid = require_same_grid(beta, v)
    if beta.values.min() <= 0:
        raise PreconditionError("gamma_diagnostic needs a weight bounded below by delta > 0")
    nus = [float(x) for x in nus]
    if any(not (0 < x < 1) for x in nus):
        raise PreconditionError("nus must lie in (0, 1)")
    if not all(b < a for a, b in zip(nus, nus[1:])):
        raise PreconditionError("nus must be strictly decreasing")

    length = max(grid.lengths)
    sharp = weighted_tv(beta, v)
    mass = weight_mass(beta)
    rows = []
    for nu in nus:
        reg = Regularizer(family, nu)
        width = math.sqrt(nu) * length
        recovery = mollify(v, width)
        rec_val = relaxed_wtv(beta, recovery, reg)
        prof = reg.ap2_profile()
        lhs = relaxed_wtv(beta, v, reg)
        rhs = prof.q0 * sharp - prof.r0 * mass
        rows.append(
            GammaRow(
                nu=nu,
                width=width,
                sharp_value=sharp,
                recovery_value=rec_val,
                recovery_error=abs(rec_val - sharp),
                lower_lhs=lhs,
                lower_rhs=rhs,
                lower_slack=lhs - rhs,
            )
        )
    return GammaTable(rows)


# ---------------------------------------------------------------------------


@dataclass
class RefinementRow:
    nu: float
    h: float
    steps: int
    initial_energy_scaled: float
    final_energy: float
    completed: bool


@dataclass
class RefinementReport:
    rows: list
    state_distances: np.ndarray
    energy_distances: np.ndarray

    @property
    def cauchy_ok(self) -> bool:
        d = self.state_distances
        return bool(len(d) >= 2 and (np.diff(d) < 0).all())

    @property
    def all_completed(self) -> bool:
        return all(r.completed for r in self.rows)


def refinement_experiment(template: RunConfig, pairs, horizon: float) -> RefinementReport:
    """Run jointly decreasing (nu, h) pairs to a common horizon.

    The admission gate requires h_n * F_{nu_n}(initial data) to decrease
    strictly along the sequence, mirroring the diagonal selection that makes
    the discrete trajectories converge.
    """
    pairs = [(float(nu), float(hh)) for nu, hh in pairs]
    if len(pairs) < 2:
        raise PreconditionError("need at least two (nu, h) pairs")
    if not all(n2 <= n1 and h2 <= h1 for (n1, h1), (n2, h2) in zip(pairs, pairs[1:])):
        raise PreconditionError("(nu, h) pairs must descend jointly")

    scaled = []
    configs = []
    for nu, hh in pairs:
        reg = Regularizer(template.regularizer.family, nu)
        steps = int(round(horizon / hh))
        if abs(steps * hh - horizon) > 1e-9 * max(1.0, horizon):
            raise PreconditionError(f"h = {hh} does not divide the horizon {horizon}")
        cfg = replace(template, regularizer=reg, h=hh, steps=steps)
        e0 = relaxed_free_energy(cfg.model, cfg.eta0, cfg.theta0, reg).total
        scaled.append(hh * e0)
        configs.append(cfg)
    if not all(b <= a for a, b in zip(scaled, scaled[1:])):
        raise PreconditionError(
            "pairs violate the decay gate: h_n * F_nu_n(initial) must not increase, got "
            + ", ".join(f"{x:.6g}" for x in scaled)
        )

    trajectories = [run(cfg) for cfg in configs]
    rows = [
        RefinementRow(
            nu=cfg.regularizer.nu,
            h=cfg.h,
            steps=cfg.steps,
            initial_energy_scaled=s,
            final_energy=float(traj.energy_trace()[-1]),
            completed=traj.completed,
        )
        for cfg, s, traj in zip(configs, scaled, trajectories)
    ]

    grid = template.grid
    dists = []
    energy_dists = []
    for ta, tb in zip(trajectories, trajectories[1:]):
        if not (ta.completed and tb.completed):
            dists.append(float("nan"))
            energy_dists.append(float("nan"))
            continue
        ea, eb = ta.states[-1], tb.states[-1]
        d2 = _l2_sq(grid, ea.eta.values - eb.eta.values) + _l2_sq(
            grid, ea.theta.values - eb.theta.values
        )
        dists.append(math.sqrt(d2))
        energy_dists.append(abs(ta.energy_trace()[-1] - tb.energy_trace()[-1]))
    return RefinementReport(rows, np.array(dists), np.array(energy_dists))


# ---------------------------------------------------------------------------


@dataclass
class OmegaReport:
    theta_sd: float
    weighted_tv_final: float
    steady_residual: float
    eta_min: float
    eta_max: float
    theta_abs_max: float
    theta_sup0: float
    sd_trace: np.ndarray
    sd_tail_monotone: bool
    thresholds: dict
    range_tol: float = 1e-9

    @property
    def ranges_ok(self) -> bool:
        return bool(
            self.eta_min >= -self.range_tol
            and self.eta_max <= 1.0 + self.range_tol
            and self.theta_abs_max <= self.theta_sup0 + self.range_tol
        )

    @property
    def passed(self) -> bool:
        return bool(
            self.theta_sd < self.thresholds["sd"]
            and self.weighted_tv_final < self.thresholds["wtv"]
            and self.steady_residual < self.thresholds["residual"]
            and self.ranges_ok
            and self.sd_tail_monotone
        )


def omega_limit_audit(
    trajectory: Trajectory,
    m: ModelFunctions,
    tail_fraction: float = 0.5,
    thresholds: dict | None = None,
    range_tol: float = 1e-9,
) -> OmegaReport:
    """Stationarity metrics of the trajectory tail.

    At a limit point the angle field is spatially constant (its TV against
    any positive weight vanishes) and the order parameter solves
    -lap(eta) + g(eta) = 0; the report measures both residuals plus the
    range invariants.
    """
    if len(trajectory.states) < 11:
        raise PreconditionError("omega-limit audit needs at least 10 steps")
    thresholds = {"sd": 1e-3, "wtv": 1e-3, "residual": 1e-5, **(thresholds or {})}
    final = trajectory.states[-1]
    grid = final.eta.grid

    theta_sd = float(final.theta.values.std())
    alpha_eta = ScalarField(grid, np.asarray(m.alpha(final.eta.values)))
    wtv = weighted_tv(alpha_eta, final.theta)
    steady = -neumann_laplacian(final.eta).values + np.asarray(m.g(final.eta.values))
    residual = float(np.abs(steady).max())

    sd_trace = np.array([float(s.theta.values.std()) for s in trajectory.states])
    tail_start = int(len(sd_trace) * (1.0 - tail_fraction))
    tail = sd_trace[tail_start:]
    sd_monotone = bool((np.diff(tail) <= 1e-12).all())

    return OmegaReport(
        theta_sd=theta_sd,
        weighted_tv_final=wtv,
        steady_residual=residual,
        eta_min=float(min(s.eta.values.min() for s in trajectory.states)),
        eta_max=float(max(s.eta.values.max() for s in trajectory.states)),
        theta_abs_max=float(max(np.abs(s.theta.values).max() for s in trajectory.states)),
        theta_sup0=trajectory.theta_sup0(),
        sd_trace=sd_trace,
        sd_tail_monotone=sd_monotone,
        thresholds=thresholds,
        range_tol=range_tol,
    )
