"""Independent brute-force oracles for the implicit sub-steps.

Everything here is written from the defining formulas with explicit loops and
never calls the solver paths it checks: the step energies are literal
translations of the minimized functionals on 1D grids, and the minimizer is
located by cyclic coordinate descent with nested 1D grid scans refined until
the bracket width drops below 1e-9.
"""

import numpy as np


def line_scan(f, x, i, lo, hi, levels=16, pts=11):
    """Nested grid search for the 1D minimum of f along coordinate i."""
    for _ in range(levels):
        grid_pts = np.linspace(lo, hi, pts)
        vals = []
        for gp in grid_pts:
            x[i] = gp
            vals.append(f(x))
        k = int(np.argmin(vals))
        lo = grid_pts[max(k - 1, 0)]
        hi = grid_pts[min(k + 1, pts - 1)]
        if hi - lo < 1e-10:
            break
    x[i] = 0.5 * (lo + hi)
    return x


def coordinate_descent(f, x0, span, sweeps=300, tol=2e-10):
    """Cyclic coordinate descent with shrinking scan windows."""
    x = np.array(x0, dtype=float)
    for _ in range(sweeps):
        x_old = x.copy()
        for i in range(len(x)):
            line_scan(f, x, i, x[i] - span, x[i] + span)
        move = float(np.abs(x - x_old).max())
        span = max(4.0 * move, 1e-9)
        if move < tol:
            break
    return x


def eta_energy_literal(x, eta_prev, theta_prev, m, reg, h, dx):
    """Literal 1D translation of the order-parameter step functional."""
    n = len(x)
    total = float(((x - eta_prev) ** 2).sum()) / (2.0 * h) * dx
    total += float(np.asarray(m.ghat(x)).sum()) * dx
    for j in range(n - 1):
        grad_eta = (x[j + 1] - x[j]) / dx
        total += 0.5 * grad_eta * grad_eta * dx
        grad_theta = (theta_prev[j + 1] - theta_prev[j]) / dx
        weight = 0.5 * (float(m.alpha(x[j])) + float(m.alpha(x[j + 1])))
        total += weight * float(reg.value_of_norm(abs(grad_theta))) * dx
    return total


def theta_energy_literal(x, theta_prev, eta_new, m, reg, h, dx):
    """Literal 1D translation of the angle step functional."""
    n = len(x)
    total = float((np.asarray(m.alpha0(eta_new)) * (x - theta_prev) ** 2).sum()) / (2.0 * h) * dx
    for j in range(n - 1):
        grad = (x[j + 1] - x[j]) / dx
        weight = 0.5 * (float(m.alpha(eta_new[j])) + float(m.alpha(eta_new[j + 1])))
        total += weight * float(reg.value_of_norm(abs(grad))) * dx
        total += 0.5 * reg.nu * grad * grad * dx
    return total
