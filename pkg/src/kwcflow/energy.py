"""Discrete weighted total variation and the free energies of the flow.

The TV surrogate pairs the forward face gradients of each cell into one
vector per cell (Euclidean norm, isotropic) and weighs it with the mean of
the face-averaged weight over the cell's forward faces; a zero-flux boundary
face contributes the cell's own weight.  The same weight operator backs the
energies, both implicit sub-steps, and every audit, so the dissipation chain
closes exactly at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .grid import Grid, ScalarField, _axis_slices, require_same_grid
from .model import ModelFunctions
from .regularizers import Regularizer


@dataclass(frozen=True)
class EnergyBreakdown:
    """Additive pieces of the free energy; total is their literal sum."""

    dirichlet: float
    potential: float
    weighted_tv: float
    tikhonov: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential + self.weighted_tv + self.tikhonov


def grad_stack(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Forward face gradients stacked per cell, zero in the boundary slot."""
    d = grid.dimension
    out = np.zeros(values.shape + (d,))
    for axis in range(d):
        head, _, _ = _axis_slices(d, axis)
        out[head + (axis,)] = np.diff(values, axis=axis) / grid.dx
    return out


def grad_stack_norms(grid: Grid, values: np.ndarray) -> np.ndarray:
    stack = grad_stack(grid, values)
    return np.sqrt((stack * stack).sum(axis=-1))


def cell_weights(grid: Grid, beta: np.ndarray) -> np.ndarray:
    """Mean over axes of the face-averaged weight (own value at boundary)."""
    d = grid.dimension
    out = np.zeros_like(beta)
    for axis in range(d):
        head, tail, last = _axis_slices(d, axis)
        fa = np.empty_like(beta)
        fa[head] = 0.5 * (beta[head] + beta[tail])
        fa[last] = beta[last]
        out += fa
    return out / d


def weight_adjoint(grid: Grid, load: np.ndarray) -> np.ndarray:
    """Adjoint of cell_weights: sum(cell_weights(beta)*load) = sum(beta*adj)."""
    d = grid.dimension
    out = np.zeros_like(load)
    for axis in range(d):
        head, tail, last = _axis_slices(d, axis)
        out[head] += 0.5 * load[head]
        out[tail] += 0.5 * load[head]
        out[last] += load[last]
    return out / d


def weight_mass(beta: ScalarField) -> float:
    """Total quadrature mass of the weight, sum(cell_weights) * dx^d."""
    grid = beta.grid
    return float(cell_weights(grid, beta.values).sum() * grid.cell_volume)


def weighted_tv(beta: ScalarField, v: ScalarField) -> float:
    """Total variation of v against the nonnegative cellwise weight beta."""
    grid = require_same_grid(beta, v)
    if beta.values.min() < 0:
        raise PreconditionError(
            "weighted_tv needs a nonnegative weight; use generalized_weighted_tv"
        )
    w = cell_weights(grid, beta.values)
    return float((w * grad_stack_norms(grid, v.values)).sum() * grid.cell_volume)


def generalized_weighted_tv(beta: ScalarField, v: ScalarField) -> float:
    """Signed extension through the positive/negative parts of the weight."""
    grid = require_same_grid(beta, v)
    plus = ScalarField(grid, np.maximum(beta.values, 0.0))
    minus = ScalarField(grid, np.maximum(-beta.values, 0.0))
    return weighted_tv(plus, v) - weighted_tv(minus, v)


def relaxed_wtv(beta: ScalarField, v: ScalarField, reg: Regularizer) -> float:
    """Regularized TV plus the Tikhonov term (nu/2) * sum |grad v|^2."""
    grid = require_same_grid(beta, v)
    if beta.values.min() < 0:
        raise PreconditionError("relaxed_wtv needs a nonnegative weight")
    w = cell_weights(grid, beta.values)
    s = grad_stack_norms(grid, v.values)
    tv = float((w * reg.value_of_norm(s)).sum() * grid.cell_volume)
    tik = 0.5 * reg.nu * float((s * s).sum() * grid.cell_volume)
    return tv + tik


def _dirichlet(grid: Grid, values: np.ndarray) -> float:
    s = grad_stack_norms(grid, values)
    return 0.5 * float((s * s).sum() * grid.cell_volume)


def free_energy(m: ModelFunctions, eta: ScalarField, theta: ScalarField) -> EnergyBreakdown:
    """Dirichlet energy of eta, potential of eta, sharp weighted TV of theta."""
    grid = require_same_grid(eta, theta)
    alpha_eta = ScalarField(grid, np.asarray(m.alpha(eta.values)))
    return EnergyBreakdown(
        dirichlet=_dirichlet(grid, eta.values),
        potential=float(np.asarray(m.ghat(eta.values)).sum() * grid.cell_volume),
        weighted_tv=weighted_tv(alpha_eta, theta),
        tikhonov=0.0,
    )


def relaxed_free_energy(
    m: ModelFunctions, eta: ScalarField, theta: ScalarField, reg: Regularizer
) -> EnergyBreakdown:
    """Free energy with the TV term regularized and the Tikhonov term added."""
    grid = require_same_grid(eta, theta)
    w = cell_weights(grid, np.asarray(m.alpha(eta.values)))
    s = grad_stack_norms(grid, theta.values)
    return EnergyBreakdown(
        dirichlet=_dirichlet(grid, eta.values),
        potential=float(np.asarray(m.ghat(eta.values)).sum() * grid.cell_volume),
        weighted_tv=float((w * reg.value_of_norm(s)).sum() * grid.cell_volume),
        tikhonov=0.5 * reg.nu * float((s * s).sum() * grid.cell_volume),
    )


def time_integrated(values, h: float) -> float:
    """Rectangle rule h * sum(values); exact on piecewise-constant traces."""
    if h <= 0:
        raise PreconditionError(f"h must be positive, got {h}")
    values = np.asarray(list(values), dtype=float)
    return float(h * values.sum())
