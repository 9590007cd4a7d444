"""Figure rendering for the CLI report path.

Every function writes one PNG next to the CSV it illustrates and returns the
path.  matplotlib runs on the Agg backend; nothing here touches a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_energy_figure(times, rows, path):
    """Stacked energy components and per-step slack over time."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    keys = ["F_nu_total", "dirichlet", "potential", "wtv", "tikhonov"]
    for key in keys:
        ax0.plot(times, [r[key] for r in rows], label=key)
    ax0.set_ylabel("energy")
    ax0.legend(loc="best", fontsize=8)
    slack = [r["ene_inq_slack"] for r in rows]
    ax1.plot(times, slack, ".", markersize=3)
    ax1.axhline(0.0, color="k", linewidth=0.6)
    ax1.set_xlabel("t")
    ax1.set_ylabel("per-step slack")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_fields_figure(eta, theta, path, title=""):
    grid = eta.grid
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    if grid.dimension == 1:
        x = (np.arange(grid.extents[0]) + 0.5) * grid.dx
        axes[0].plot(x, eta.values)
        axes[1].plot(x, theta.values)
        for ax in axes:
            ax.set_xlabel("x")
    else:
        for ax, field, name in ((axes[0], eta, "eta"), (axes[1], theta, "theta")):
            im = ax.imshow(field.values.T, origin="lower", cmap="viridis")
            fig.colorbar(im, ax=ax, shrink=0.85)
            ax.set_title(name)
    axes[0].set_title(f"eta {title}")
    axes[1].set_title(f"theta {title}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_gamma_figure(table, path):
    nus = [r.nu for r in table.rows]
    errors = [r.recovery_error for r in table.rows]
    slacks = [r.lower_slack for r in table.rows]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax0.loglog(nus, errors, "o-")
    ax0.set_xlabel("nu")
    ax0.set_ylabel("|recovery - sharp|")
    ax0.set_title("recovery error")
    ax1.semilogx(nus, slacks, "s-")
    ax1.axhline(0.0, color="k", linewidth=0.6)
    ax1.set_xlabel("nu")
    ax1.set_ylabel("lower-bound slack")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_refine_figure(report, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    idx = np.arange(1, len(report.state_distances) + 1)
    ax.semilogy(idx, report.state_distances, "o-", label="final-state distance")
    ax.semilogy(idx, report.energy_distances, "s--", label="final-energy distance")
    ax.set_xticks(idx)
    ax.set_xlabel("successive pair")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_series_figure(x, series, path, xlabel="step", logy=False):
    """Plot named series against a shared abscissa."""
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    for name, values in series.items():
        if logy:
            ax.semilogy(x, np.maximum(np.asarray(values, dtype=float), 1e-18), label=name)
        else:
            ax.plot(x, values, label=name)
    ax.set_xlabel(xlabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_sd_figure(times, sd_trace, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    positive = np.maximum(np.asarray(sd_trace), 1e-18)
    ax.semilogy(times, positive)
    ax.set_xlabel("t")
    ax.set_ylabel("sd(theta)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
