"""Coefficient functions of the grain-boundary flow and their admissibility.

The flow is driven by a quadruple (g, ghat, alpha0, alpha): g confines the
order parameter to [0, 1] and ghat is its nonnegative primitive; alpha0 and
alpha are the mobility weights, bounded below by delta_alpha and with alpha
convex and flat at zero.  The canonical choice is

    g(t) = t - 1,  ghat(t) = (t - 1)^2 / 2,  alpha0(t) = alpha(t) = t^2 + delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class ModelBounds:
    """Sup norms over [0, 1] used by the stability constants and step gates."""

    g_sup: float
    g_prime_sup: float
    ghat_sup: float
    ghat_prime_sup: float
    alpha0_sup: float
    alpha0_prime_sup: float
    alpha_sup: float
    alpha_prime_sup: float
    alpha_pp_sup: float
    g_prime_inf: float
    alpha_pp_inf: float


@dataclass(frozen=True)
class ModelFunctions:
    """Evaluators for (g, ghat, alpha0, alpha, alpha') plus analytic bounds.

    g_prime and alpha_pp feed the Newton Hessians; when absent they are
    replaced by central differences of g and alpha_prime.
    """

    g: Callable
    ghat: Callable
    alpha0: Callable
    alpha: Callable
    alpha_prime: Callable
    delta_alpha: float
    bounds: ModelBounds
    g_prime: Callable | None = None
    alpha_pp: Callable | None = None

    def g_derivative(self, tau):
        if self.g_prime is not None:
            return np.broadcast_to(np.asarray(self.g_prime(tau), dtype=float), np.shape(tau)).copy()
        return _central_diff(self.g, tau)

    def alpha_second(self, tau):
        if self.alpha_pp is not None:
            return np.broadcast_to(np.asarray(self.alpha_pp(tau), dtype=float), np.shape(tau)).copy()
        return _central_diff(self.alpha_prime, tau)


def _central_diff(f, tau, step=1e-6):
    tau = np.asarray(tau, dtype=float)
    return (np.asarray(f(tau + step)) - np.asarray(f(tau - step))) / (2.0 * step)


def canonical(delta_alpha: float) -> ModelFunctions:
    """The canonical quadruple with bounds over [0, 1] computed analytically."""
    if not (0.0 < delta_alpha < 1.0):
        raise PreconditionError(f"delta_alpha must lie in (0, 1), got {delta_alpha}")
    d = float(delta_alpha)
    bounds = ModelBounds(
        g_sup=1.0,
        g_prime_sup=1.0,
        ghat_sup=0.5,
        ghat_prime_sup=1.0,
        alpha0_sup=1.0 + d,
        alpha0_prime_sup=2.0,
        alpha_sup=1.0 + d,
        alpha_prime_sup=2.0,
        alpha_pp_sup=2.0,
        g_prime_inf=1.0,
        alpha_pp_inf=2.0,
    )
    return ModelFunctions(
        g=lambda t: np.asarray(t, dtype=float) - 1.0,
        ghat=lambda t: 0.5 * (np.asarray(t, dtype=float) - 1.0) ** 2,
        alpha0=lambda t: np.asarray(t, dtype=float) ** 2 + d,
        alpha=lambda t: np.asarray(t, dtype=float) ** 2 + d,
        alpha_prime=lambda t: 2.0 * np.asarray(t, dtype=float),
        delta_alpha=d,
        bounds=bounds,
        g_prime=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        alpha_pp=lambda t: 2.0 * np.ones_like(np.asarray(t, dtype=float)),
    )


@dataclass
class HypothesisReport:
    """Per-hypothesis pass/fail with the worst-case slack found."""

    checks: dict = field(default_factory=dict)

    def record(self, name: str, slack: float, detail: str = ""):
        entry = self.checks.setdefault(name, {"slack": float("inf"), "detail": detail})
        if slack < entry["slack"]:
            entry["slack"] = float(slack)
            entry["detail"] = detail

    @property
    def passed(self) -> bool:
        return all(entry["slack"] >= 0.0 for entry in self.checks.values())

    def failures(self) -> list:
        return [name for name, entry in self.checks.items() if entry["slack"] < 0.0]


def default_samples(n: int = 601) -> np.ndarray:
    return np.linspace(-1.0, 2.0, n)


def validate_hypotheses(m: ModelFunctions, samples=None) -> HypothesisReport:
    """Check the admissibility hypotheses on a sample set covering [-1, 2]."""
    samples = default_samples() if samples is None else np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise PreconditionError("sample set must be nonempty")
    report = HypothesisReport()
    tol = 1e-12

    g0 = float(np.asarray(m.g(0.0)))
    g1 = float(np.asarray(m.g(1.0)))
    report.record("H1:g(0)<=0", -g0 + tol, f"g(0) = {g0}")
    report.record("H1:g(1)>=0", g1 + tol, f"g(1) = {g1}")
    ghat_vals = np.asarray(m.ghat(samples))
    report.record("H1:ghat>=0", float(ghat_vals.min()) + tol, "min ghat over samples")
    fd = _central_diff(m.ghat, samples)
    g_vals = np.asarray(m.g(samples))
    prim_err = np.abs(fd - g_vals) - 1e-6 * (1.0 + np.abs(g_vals))
    report.record("H1:ghat'=g", float(-prim_err.max()), "ghat is a primitive of g")

    alpha0_vals = np.asarray(m.alpha0(samples))
    report.record("H2:alpha0>0", float(alpha0_vals.min()), "min alpha0 over samples")

    ap0 = float(np.asarray(m.alpha_prime(0.0)))
    report.record("H3:alpha'(0)=0", tol - abs(ap0), f"alpha'(0) = {ap0}")
    alpha_vals = np.asarray(m.alpha(samples))
    for partner in (samples[::-1], np.full_like(samples, samples[0])):
        pv = np.asarray(m.alpha(partner))
        mid = np.asarray(m.alpha(0.5 * (samples + partner)))
        conv = 0.5 * (alpha_vals + pv) - mid + tol * (1.0 + np.abs(alpha_vals) + np.abs(pv))
        report.record("H3:alpha convex", float(conv.min()), "midpoint convexity")
    fd_alpha = _central_diff(m.alpha, samples)
    ap_vals = np.asarray(m.alpha_prime(samples))
    ap_err = np.abs(fd_alpha - ap_vals) - 1e-6 * (1.0 + np.abs(ap_vals))
    report.record("H3:alpha' consistent", float(-ap_err.max()), "alpha' matches d alpha")

    report.record(
        "H4:alpha0>=delta", float(alpha0_vals.min() - m.delta_alpha) + tol, "alpha0 >= delta_alpha"
    )
    report.record(
        "H4:alpha>=delta", float(alpha_vals.min() - m.delta_alpha) + tol, "alpha >= delta_alpha"
    )
    return report


@dataclass(frozen=True)
class StabilityConstants:
    """Constants of the cumulative energy comparison inequality.

    branch: "r1_zero" for families with bounded gradients (r1 = 0),
    "r1_positive" for genuinely p-growth families.
    """

    r_star: float
    a_star: float
    b_star: float
    c_star: float
    nu_star: float
    branch: str


def _c1_norm(sup: float, deriv_sup: float) -> float:
    # norm convention: max of the sup norms of f and f' over [0, 1]
    return max(sup, deriv_sup)


def stability_constants(
    m: ModelFunctions,
    theta0_sup: float,
    omega_measure: float,
    branch: str = "r1_zero",
    q1_sup: float = 1.0,
) -> StabilityConstants:
    if theta0_sup < 0:
        raise PreconditionError("theta0_sup must be nonnegative")
    if omega_measure <= 0:
        raise PreconditionError("omega_measure must be positive")
    if branch not in ("r1_zero", "r1_positive"):
        raise PreconditionError(f"unknown branch {branch!r}")
    report = validate_hypotheses(m)
    if not report.passed:
        raise PreconditionError(f"model failed hypothesis validation: {report.failures()}")

    b = m.bounds
    n_alpha0 = _c1_norm(b.alpha0_sup, b.alpha0_prime_sup)
    n_alpha = _c1_norm(b.alpha_sup, b.alpha_prime_sup)
    n_ghat = _c1_norm(b.ghat_sup, b.ghat_prime_sup)
    base = (
        (1.0 + n_alpha0)
        * (1.0 + n_alpha)
        * (1.0 + n_ghat)
        * (1.0 + theta0_sup)
        * (1.0 + omega_measure)
        / m.delta_alpha**2
    )
    r_star = base**2

    if branch == "r1_zero":
        a_star = b.alpha0_sup * b.alpha_sup / m.delta_alpha
        b_star = m.delta_alpha / b.alpha_sup
        c_star = 12.0 * r_star**2 * q1_sup**2
        nu_star = min(1.0 / (32.0 * b.alpha0_sup * a_star * r_star), b.alpha_sup)
    else:
        a_star = 2.0 * b.alpha0_sup * b.alpha_sup / m.delta_alpha
        b_star = min(0.5, m.delta_alpha / b.alpha_sup)
        c_star = 7e3 * r_star**6
        nu_star = min(1.0 / (32.0 * b.alpha0_sup * a_star * r_star), 0.5)
    return StabilityConstants(r_star, a_star, b_star, c_star, nu_star, branch)
