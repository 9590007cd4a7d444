"""Smooth convex surrogates of the Euclidean norm and their admissibility data.

Each family is a radial profile phi applied to |xi|: phi is convex, C^1,
phi(0) = 0, and approaches the identity as nu decreases.  The admissibility
profile (q0, q1, r0, r1) certifies

    phi(|xi|) >= q0 * |xi| - r0        (lower bound)
    |grad phi(xi)| <= q1 * |xi|**r1    (gradient growth)

with q0, q1 -> 1 and r0, r1 -> 0 as nu -> 0.  Derivations per family:

* hyperbola   sqrt(t^2 + nu^2) - nu >= t - nu pointwise; the gradient has
              norm t / sqrt(t^2 + nu^2) <= 1.       -> (1, 1, nu, 0)
* yosida      Moreau envelope of |.| with quadratic weight 1/(2 nu), i.e.
              t^2/(2 nu) for t <= nu and t - nu/2 beyond; it sits between
              |.| - nu/2 and |.| and is 1-Lipschitz.  -> (1, 1, nu/2, 0)
* tanh        integral of tanh(s/nu): the slope deficit integrates to at
              most nu * log 2.                       -> (1, 1, nu*log 2, 0)
* arctan      integral of (2/pi) arctan(s/nu): the slope deficit decays like
              nu/t, whose integral diverges, so q0 = 1 admits no finite r0.
              With q0 = (2/pi) arctan(1/sqrt(nu)) the gap phi - q0 t bottoms
              out at t = sqrt(nu) and phi >= 0 there, so r0 = sqrt(nu).
                                                     -> (q0(nu), 1, sqrt(nu), 0)
* pgrowth     t^p / p with p = 1 + nu (fixed schedule).  For t in [0, 1],
              t - t^p <= nu/(1+nu) <= p*nu, and t^p >= t for t >= 1, hence
              t^p/p >= t/p - nu; the gradient norm is exactly t^(p-1).
                                                     -> (1/(1+nu), 1, nu, nu)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("hyperbola", "yosida", "tanh", "arctan", "pgrowth")

# Below this magnitude the pgrowth curvature is capped to keep Hessians finite;
# the function itself is evaluated exactly everywhere.
_PGROWTH_FLOOR = 1e-12


@dataclass(frozen=True)
class Ap2Profile:
    """Admissibility constants (q0, q1, r0, r1) of one family at one nu."""

    q0: float
    q1: float
    r0: float
    r1: float


@dataclass(frozen=True)
class Regularizer:
    family: str
    nu: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, choose from {FAMILIES}")
        if not (0.0 < self.nu < 1.0):
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")

    @property
    def p(self) -> float:
        """Growth exponent of the pgrowth family, p(nu) = 1 + nu."""
        return 1.0 + self.nu

    # -- radial profile ----------------------------------------------------

    def value_of_norm(self, s):
        """phi(s) for s = |xi| >= 0 (vectorized)."""
        s = np.asarray(s, dtype=float)
        nu = self.nu
        if self.family == "hyperbola":
            return np.hypot(s, nu) - nu
        if self.family == "yosida":
            return np.where(s <= nu, s * s / (2.0 * nu), s - 0.5 * nu)
        if self.family == "tanh":
            u = s / nu
            # log cosh(u) = u + log1p(exp(-2u)) - log 2, stable for large u
            return nu * (u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0))
        if self.family == "arctan":
            u = s / nu
            return (2.0 / math.pi) * (s * np.arctan(u) - 0.5 * nu * np.log1p(u * u))
        return s ** self.p / self.p

    def slope_of_norm(self, s):
        """phi'(s), the magnitude of the gradient at |xi| = s."""
        s = np.asarray(s, dtype=float)
        nu = self.nu
        if self.family == "hyperbola":
            return s / np.hypot(s, nu)
        if self.family == "yosida":
            return np.where(s <= nu, s / nu, 1.0)
        if self.family == "tanh":
            return np.tanh(s / nu)
        if self.family == "arctan":
            return (2.0 / math.pi) * np.arctan(s / nu)
        return s ** (self.p - 1.0)

    def curvature_split(self, s):
        """(a, b) with Hessian of phi(|xi|) = a*I + b*xi xi^T at |xi| = s.

        a = phi'(s)/s (the gradient is a*xi, exact at s = 0 for every family)
        and a + b*s^2 = phi''(s) >= 0, so the split is positive semidefinite.
        """
        s = np.asarray(s, dtype=float)
        nu = self.nu
        if self.family == "hyperbola":
            root = np.hypot(s, nu)
            return 1.0 / root, -1.0 / root ** 3
        if self.family == "yosida":
            inside = s <= nu
            s_safe = np.where(inside, 1.0, s)
            a = np.where(inside, 1.0 / nu, 1.0 / s_safe)
            b = np.where(inside, 0.0, -1.0 / s_safe ** 3)
            return a, b
        if self.family == "tanh":
            u = s / nu
            small = u < 1e-4
            s_safe = np.where(small, 1.0, s)
            th = np.tanh(u)
            a = np.where(small, (1.0 - u * u / 3.0) / nu, th / s_safe)
            phi2 = (1.0 - th * th) / nu
            b = np.where(small, -2.0 / (3.0 * nu ** 3), (phi2 - a) / s_safe ** 2)
            return a, b
        if self.family == "arctan":
            u = s / nu
            small = u < 1e-4
            s_safe = np.where(small, 1.0, s)
            at = np.arctan(u)
            a = np.where(small, (2.0 / (math.pi * nu)) * (1.0 - u * u / 3.0), (2.0 / math.pi) * at / s_safe)
            phi2 = (2.0 / math.pi) * (1.0 / nu) / (1.0 + u * u)
            b = np.where(small, -4.0 / (3.0 * math.pi * nu ** 3), (phi2 - a) / s_safe ** 2)
            return a, b
        p = self.p
        s_reg = np.maximum(s, _PGROWTH_FLOOR)
        return s_reg ** (p - 2.0), (p - 2.0) * s_reg ** (p - 4.0)

    # -- vector interface ----------------------------------------------------

    def evaluate(self, xi):
        """phi(|xi|) for vectors xi stacked along the last axis."""
        xi = np.asarray(xi, dtype=float)
        s = np.sqrt((xi * xi).sum(axis=-1))
        out = self.value_of_norm(s)
        return float(out) if out.ndim == 0 else out

    def grad(self, xi):
        """Gradient of xi -> phi(|xi|); zero at xi = 0 for every family."""
        xi = np.asarray(xi, dtype=float)
        s = np.sqrt((xi * xi).sum(axis=-1))
        a, _ = self.curvature_split(s)
        return np.asarray(a)[..., None] * xi

    def ap2_profile(self) -> Ap2Profile:
        nu = self.nu
        if self.family == "hyperbola":
            return Ap2Profile(1.0, 1.0, nu, 0.0)
        if self.family == "yosida":
            return Ap2Profile(1.0, 1.0, 0.5 * nu, 0.0)
        if self.family == "tanh":
            return Ap2Profile(1.0, 1.0, nu * math.log(2.0), 0.0)
        if self.family == "arctan":
            return Ap2Profile((2.0 / math.pi) * math.atan(1.0 / math.sqrt(nu)), 1.0, math.sqrt(nu), 0.0)
        return Ap2Profile(1.0 / (1.0 + nu), 1.0, nu, nu)


@dataclass
class SuitabilityReport:
    """Per-sample admissibility checks and their worst slacks."""

    family: str
    nu: float
    n_samples: int
    convexity_slack: np.ndarray
    lower_bound_slack: np.ndarray
    gradient_bound_slack: np.ndarray
    chain_lower_slack: np.ndarray
    chain_upper_slack: np.ndarray
    passed: bool

    @property
    def worst(self) -> dict:
        return {
            "convexity": float(self.convexity_slack.min()),
            "lower_bound": float(self.lower_bound_slack.min()),
            "gradient_bound": float(self.gradient_bound_slack.min()),
            "chain_lower": float(self.chain_lower_slack.min()),
            "chain_upper": float(self.chain_upper_slack.min()),
        }


def _tol(scale):
    return 1e-12 * np.maximum(1.0, scale)


def verify_suitability(reg, samples) -> SuitabilityReport:
    """Check convexity, the AP2 bounds, and the gradient chain on samples.

    samples: array (m, d) of vectors spanning several magnitudes.  Violations
    are reported through negative slacks, never raised.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("sample set must be nonempty")
    prof = reg.ap2_profile()
    mags = np.sqrt((samples * samples).sum(axis=-1))
    vals = np.asarray(reg.evaluate(samples))
    grads = reg.grad(samples)
    grad_mags = np.sqrt((grads * grads).sum(axis=-1))

    # midpoint convexity against three partners: the reversed sample list,
    # the antipode, and the origin
    conv = np.full(samples.shape[0], np.inf)
    for partner in (samples[::-1], -samples, np.zeros_like(samples)):
        pv = np.asarray(reg.evaluate(partner))
        mid = np.asarray(reg.evaluate(0.5 * (samples + partner)))
        slack = 0.5 * (vals + pv) - mid + _tol(np.abs(vals) + np.abs(pv))
        conv = np.minimum(conv, slack)

    lower = vals - (prof.q0 * mags - prof.r0) + _tol(mags)
    grad_bound = prof.q1 * mags ** prof.r1 - grad_mags + _tol(mags ** prof.r1)
    dot = (grads * samples).sum(axis=-1)
    chain_lower = dot - vals + _tol(np.abs(dot))
    chain_upper = prof.q1 * mags ** (1.0 + prof.r1) - dot + _tol(mags ** (1.0 + prof.r1))

    passed = bool(
        (conv >= 0).all()
        and (lower >= 0).all()
        and (grad_bound >= 0).all()
        and (chain_lower >= 0).all()
        and (chain_upper >= 0).all()
    )
    return SuitabilityReport(
        family=reg.family,
        nu=reg.nu,
        n_samples=samples.shape[0],
        convexity_slack=conv,
        lower_bound_slack=lower,
        gradient_bound_slack=grad_bound,
        chain_lower_slack=chain_lower,
        chain_upper_slack=chain_upper,
        passed=passed,
    )


def magnitude_samples(dim: int, n: int = 1000, lo: float = 1e-6, hi: float = 1e3, seed: int = 0):
    """Log-spaced magnitudes in [lo, hi] with deterministic random directions."""
    rng = np.random.default_rng(seed)
    mags = np.geomspace(lo, hi, n)
    if dim == 1:
        signs = rng.choice([-1.0, 1.0], size=n)
        return (mags * signs)[:, None]
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return mags[:, None] * dirs
