"""Batch front-end: configure, run, audit, and export.

One JSON document configures everything; `--set section.key=value` overrides
individual entries.  Numeric results land in CSV files and state snapshots,
with PNG figures rendered alongside unless --no-plots is given.  Exit codes:
0 success, 1 audit/solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys

import numpy as np

from . import analysis, plots
from .energy import relaxed_free_energy
from .errors import ConfigError, KwcError, PreconditionError, SnapshotFormatError
from .grid import Grid, ScalarField, read_state, write_state
from .model import canonical, stability_constants, validate_hypotheses
from .regularizers import FAMILIES, Regularizer, magnitude_samples, verify_suitability
from .stepper import RunConfig, SolverOptions, make_initial, run

TRACE_COLUMNS = [
    "step",
    "t",
    "F_nu_total",
    "dirichlet",
    "potential",
    "wtv",
    "tikhonov",
    "eta_inc_sq",
    "theta_winc_sq",
    "ene_inq_slack",
    "newton_iters_eta",
    "newton_iters_theta",
]

DEFAULT_CONFIG = {
    "grid": {"dimension": 2, "extents": [32, 32], "dx": 1.0 / 32.0},
    "model": {"delta_alpha": 0.5},
    "regularizer": {"family": "hyperbola", "nu": 0.05},
    "time": {"h": 0.05, "steps": 200},
    "solver": {"newton_tol": 1e-10, "max_iter": 60, "linear_tol": 1e-12},
    "initial": {
        "preset": "jump",
        "eta": 1.0,
        "theta": 0.0,
        "amplitude": 1.0,
        "axis": 0,
        "blocks": 4,
    },
    "audit": {
        "slack_factor": 10.0,
        "range_tol": 1e-9,
        "tail_fraction": 0.5,
        "sd_threshold": 1e-3,
        "wtv_threshold": 1e-3,
        "residual_threshold": 1e-5,
    },
    "gamma": {
        "family": "hyperbola",
        "nus": [0.1, 0.01, 0.001],
        "cells": 64,
        "dx": 1.0 / 64.0,
        "beta": 1.0,
        "amplitude": 1.0,
        "max_final_fraction": 0.05,
    },
    "refine": {
        "pairs": [[0.2, 0.25], [0.1, 0.125], [0.05, 0.0625]],
        "horizon": 1.0,
        "grid": {"dimension": 1, "extents": [32], "dx": 1.0 / 32.0},
    },
    "output": {"snapshot_every": 50},
}


# ---------------------------------------------------------------------------
# configuration plumbing


def _merge(defaults, user, path=""):
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"configuration key {here} must be a section")
            out[key] = _merge(defaults[key], value, here + ".")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=()):
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as stream:
                user = json.load(stream)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config document must be a JSON object")
        config = _merge(config, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        keys = dotted.split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"override references unknown key: {dotted}")
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(f"override references unknown key: {dotted}")
        if isinstance(node[keys[-1]], dict):
            raise ConfigError(f"override target {dotted} is a section, not a value")
        node[keys[-1]] = value
    return config


def build_grid(section) -> Grid:
    extents = tuple(int(n) for n in section["extents"])
    if len(extents) != int(section["dimension"]):
        raise ConfigError(
            f"grid.extents {list(extents)} does not match grid.dimension {section['dimension']}"
        )
    return Grid(extents, float(section["dx"]))


def build_solver(section) -> SolverOptions:
    return SolverOptions(
        newton_tol=float(section["newton_tol"]),
        max_iter=int(section["max_iter"]),
        linear_tol=float(section["linear_tol"]),
    )


def build_run_config(config) -> RunConfig:
    grid = build_grid(config["grid"])
    m = canonical(float(config["model"]["delta_alpha"]))
    reg = Regularizer(config["regularizer"]["family"], float(config["regularizer"]["nu"]))
    eta0, theta0 = make_initial(grid, config["initial"])
    return RunConfig(
        grid=grid,
        model=m,
        regularizer=reg,
        h=float(config["time"]["h"]),
        steps=int(config["time"]["steps"]),
        eta0=eta0,
        theta0=theta0,
        solver=build_solver(config["solver"]),
    )


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [
                    str(v) if isinstance(v, (int, str)) else _fmt(v)
                    for v in row
                ]
            )


def _say(quiet, *args):
    if not quiet:
        print(*args)


def _constants_for(config, run_config):
    reg = run_config.regularizer
    branch = "r1_positive" if reg.ap2_profile().r1 > 0 else "r1_zero"
    theta_sup = float(np.abs(run_config.theta0.values).max())
    return stability_constants(run_config.model, theta_sup, run_config.grid.measure, branch)


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(config, out_dir, args):
    run_config = build_run_config(config)
    consts = _constants_for(config, run_config)
    if run_config.regularizer.nu >= consts.nu_star:
        _say(
            args.quiet,
            f"warning: nu = {run_config.regularizer.nu} >= nu* = {consts.nu_star:.3e}; "
            "the a-priori admissibility bound is advisory, dissipation is audited a posteriori",
        )

    snapshot_every = int(config["output"]["snapshot_every"])
    if args.snapshot_every is not None:
        snapshot_every = args.snapshot_every
    if snapshot_every < 1:
        raise ConfigError("snapshot-every must be at least 1")

    trajectory = run(run_config)

    with open(os.path.join(out_dir, "config_used.json"), "w") as stream:
        json.dump(config, stream, indent=2, sort_keys=True)

    rows = []
    dict_rows = []
    times = []
    for i, state in enumerate(trajectory.states):
        breakdown = relaxed_free_energy(
            run_config.model, state.eta, state.theta, run_config.regularizer
        )
        if i == 0:
            inc = (0.0, 0.0, 0.0, 0, 0)
        else:
            r = trajectory.reports[i - 1]
            inc = (
                r.eta_increment_sq,
                r.theta_weighted_increment_sq,
                r.ene_inq_slack,
                r.newton_iterations_eta,
                r.newton_iterations_theta,
            )
        row = (
            i,
            state.t,
            breakdown.total,
            breakdown.dirichlet,
            breakdown.potential,
            breakdown.weighted_tv,
            breakdown.tikhonov,
            *inc,
        )
        rows.append(row)
        dict_rows.append(dict(zip(TRACE_COLUMNS, row)))
        times.append(state.t)
    _write_csv(os.path.join(out_dir, "energy_trace.csv"), TRACE_COLUMNS, rows)

    for i, state in enumerate(trajectory.states):
        if i % snapshot_every == 0 or i == len(trajectory.states) - 1:
            path = os.path.join(out_dir, f"snapshot_{i:06d}.txt")
            write_state(path, state.eta, state.theta, state.t)

    audit_cfg = config["audit"]
    summary = {
        "completed": trajectory.completed,
        "failure": trajectory.failure,
        "steps_done": len(trajectory.reports),
        "nu_star": consts.nu_star,
    }
    audit_ok = True
    if trajectory.reports:
        slacks = np.array([r.ene_inq_slack for r in trajectory.reports])
        tol = float(audit_cfg["slack_factor"]) * run_config.solver.newton_tol
        ranges = analysis.max_principle_audit(trajectory, float(audit_cfg["range_tol"]))
        summary["dissipation_ok"] = bool((slacks >= -tol).all())
        summary["worst_step_slack"] = float(slacks.min())
        summary["ranges_ok"] = ranges["passed"]
        summary["ranges"] = {k: v for k, v in ranges.items() if k != "passed"}
        audit_ok = summary["dissipation_ok"] and ranges["passed"]
    with open(os.path.join(out_dir, "run_summary.json"), "w") as stream:
        json.dump(summary, stream, indent=2, sort_keys=True)

    if not args.no_plots:
        plots.save_energy_figure(times, dict_rows, os.path.join(out_dir, "energy_trace.png"))
        final = trajectory.states[-1]
        plots.save_fields_figure(
            final.eta, final.theta, os.path.join(out_dir, "fields_final.png"), f"t = {final.t:g}"
        )
        sd = [float(s.theta.values.std()) for s in trajectory.states]
        plots.save_sd_figure(times, sd, os.path.join(out_dir, "sd_trace.png"))

    if not trajectory.completed:
        _say(args.quiet, f"run aborted: {trajectory.failure}")
        return 1
    if not audit_ok:
        _say(args.quiet, "run completed but the in-line audit failed")
        return 1
    _say(args.quiet, f"run complete: {len(trajectory.reports)} steps -> {out_dir}")
    return 0


def _read_trace(trace_dir):
    path = os.path.join(trace_dir, "energy_trace.csv")
    try:
        with open(path, newline="") as stream:
            rows = list(csv.DictReader(stream))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path} holds no rows")
    return rows


def _snapshot_steps(trace_dir):
    steps = []
    for name in sorted(os.listdir(trace_dir)):
        if name.startswith("snapshot_") and name.endswith(".txt"):
            steps.append((int(name[len("snapshot_") : -4]), os.path.join(trace_dir, name)))
    return steps


def cmd_audit(config, out_dir, args):
    trace_dir = args.trace
    if trace_dir is None:
        raise ConfigError("audit requires --trace <dir> produced by run")
    used_path = os.path.join(trace_dir, "config_used.json")
    if os.path.exists(used_path):
        with open(used_path) as stream:
            config = _merge(DEFAULT_CONFIG, json.load(stream))

    rows = _read_trace(trace_dir)
    h = float(config["time"]["h"])
    newton_tol = float(config["solver"]["newton_tol"])
    audit_cfg = config["audit"]
    tol = float(audit_cfg["slack_factor"]) * newton_tol

    F = np.array([float(r["F_nu_total"]) for r in rows])
    eta_inc = np.array([float(r["eta_inc_sq"]) for r in rows])[1:]
    th_inc = np.array([float(r["theta_winc_sq"]) for r in rows])[1:]
    m_steps = len(F) - 1

    step_slacks = F[:-1] - F[1:] - eta_inc / (2.0 * h) - th_inc / h
    monotone = F[:-1] - F[1:]
    idx = np.arange(1, m_steps + 1)
    weighted = h * np.cumsum(F[:-1]) - 0.5 * np.cumsum(idx * eta_inc) - np.cumsum(idx * th_inc)
    weighted -= idx * h * F[1:]
    weighted_tols = tol * h * idx * (idx + 1) / 2.0 + 1e-12
    integral = h * np.cumsum(F[:-1]) - idx * h * F[1:]

    snaps = _snapshot_steps(trace_dir)
    if not snaps:
        raise ConfigError(f"no snapshots found in {trace_dir}")
    eta0, theta0, _ = read_state(snaps[0][1])
    if snaps[0][0] != 0:
        raise ConfigError("audit needs the step-0 snapshot as reference data")
    m = canonical(float(config["model"]["delta_alpha"]))
    reg = Regularizer(config["regularizer"]["family"], float(config["regularizer"]["nu"]))
    branch = "r1_positive" if reg.ap2_profile().r1 > 0 else "r1_zero"
    theta_sup = float(np.abs(theta0.values).max())
    consts = stability_constants(m, theta_sup, eta0.grid.measure, branch)

    grid = eta0.grid
    vol = grid.cell_volume
    from .analysis import _h1_sq  # shared discrete norm

    ref_norm = 1.0 + _h1_sq(eta0) + _h1_sq(theta0)
    range_tol = float(audit_cfg["range_tol"])
    comparison = {}
    range_ok = True
    sd_rows = []
    for step_idx, path in snaps:
        eta_s, theta_s, t_s = read_state(path)
        lhs = 0.5 * (
            float(((eta_s.values - eta0.values) ** 2).sum() * vol)
            + consts.a_star * float(((theta_s.values - theta0.values) ** 2).sum() * vol)
        ) + 0.5 * consts.b_star * h * float(F[:step_idx].sum())
        rhs = (h / consts.b_star) * F[0] + step_idx * h * consts.c_star * ref_norm
        comparison[step_idx] = rhs - lhs if step_idx > 0 else float("nan")
        range_ok = range_ok and (
            eta_s.values.min() >= -range_tol
            and eta_s.values.max() <= 1.0 + range_tol
            and np.abs(theta_s.values).max() <= theta_sup + range_tol
        )
        sd_rows.append((step_idx, t_s, float(theta_s.values.std())))

    out_rows = []
    for i in range(1, m_steps + 1):
        out_rows.append(
            (
                i,
                i * h,
                F[i],
                step_slacks[i - 1],
                monotone[i - 1],
                weighted[i - 1],
                weighted_tols[i - 1],
                integral[i - 1],
                comparison.get(i, float("nan")),
            )
        )
    _write_csv(
        os.path.join(out_dir, "audit_report.csv"),
        [
            "step",
            "t",
            "F_nu_total",
            "step_slack",
            "monotone_slack",
            "weighted_slack",
            "weighted_tol",
            "integral_slack",
            "comparison_slack",
        ],
        out_rows,
    )
    _write_csv(os.path.join(out_dir, "sd_trace.csv"), ["step", "t", "theta_sd"], sd_rows)

    checks = {
        "per-step dissipation": bool((step_slacks >= -tol).all()) if m_steps else True,
        "energy trace nonincreasing": bool((monotone >= -tol).all()) if m_steps else True,
        "weighted cumulative inequality": bool((weighted >= -weighted_tols).all())
        if m_steps
        else True,
        "time-integral inequality": bool((integral >= -weighted_tols).all()) if m_steps else True,
        "reference comparison inequality": all(
            v >= 0 for k, v in comparison.items() if k > 0
        ),
        "range invariance (snapshots)": bool(range_ok),
    }
    for name, ok in checks.items():
        _say(args.quiet, f"{'PASS' if ok else 'FAIL'}  {name}")

    if not args.no_plots and m_steps:
        plots.save_series_figure(
            idx,
            {"step_slack": step_slacks, "weighted_slack": weighted},
            os.path.join(out_dir, "audit_slacks.png"),
        )

    summary = {
        "checks": checks,
        "worst_step_slack": float(step_slacks.min()) if m_steps else 0.0,
        "constants": {
            "r_star": consts.r_star,
            "a_star": consts.a_star,
            "b_star": consts.b_star,
            "c_star": consts.c_star,
            "nu_star": consts.nu_star,
            "branch": consts.branch,
        },
    }
    with open(os.path.join(out_dir, "audit_summary.json"), "w") as stream:
        json.dump(summary, stream, indent=2, sort_keys=True)
    return 0 if all(checks.values()) else 1


def cmd_gamma(config, out_dir, args):
    section = config["gamma"]
    grid = Grid((int(section["cells"]),), float(section["dx"]))
    beta = ScalarField(grid, np.full(grid.extents, float(section["beta"])))
    coords = np.arange(grid.extents[0])
    jump = np.where(coords < grid.extents[0] // 2, 0.0, float(section["amplitude"]))
    v = ScalarField(grid, jump)
    table = analysis.gamma_diagnostic(beta, v, section["family"], section["nus"])

    _write_csv(
        os.path.join(out_dir, "gamma_table.csv"),
        [
            "nu",
            "width",
            "sharp_value",
            "recovery_value",
            "recovery_error",
            "lower_lhs",
            "lower_rhs",
            "lower_slack",
        ],
        [
            (
                r.nu,
                r.width,
                r.sharp_value,
                r.recovery_value,
                r.recovery_error,
                r.lower_lhs,
                r.lower_rhs,
                r.lower_slack,
            )
            for r in table.rows
        ],
    )
    if not args.no_plots:
        plots.save_gamma_figure(table, os.path.join(out_dir, "gamma_convergence.png"))

    sharp = table.rows[0].sharp_value
    final_fraction = table.rows[-1].recovery_error / max(sharp, 1e-300)
    checks = {
        "recovery errors strictly decreasing": table.errors_decreasing,
        "final recovery error small": final_fraction < float(section["max_final_fraction"]),
        "integrated lower bound": table.lower_bound_ok,
    }
    for name, ok in checks.items():
        _say(args.quiet, f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(checks.values()) else 1


def cmd_refine(config, out_dir, args):
    section = config["refine"]
    grid = build_grid(section["grid"])
    m = canonical(float(config["model"]["delta_alpha"]))
    family = config["regularizer"]["family"]
    pairs = section["pairs"]
    eta0, theta0 = make_initial(grid, config["initial"])
    template = RunConfig(
        grid=grid,
        model=m,
        regularizer=Regularizer(family, float(pairs[0][0])),
        h=float(pairs[0][1]),
        steps=1,
        eta0=eta0,
        theta0=theta0,
        solver=build_solver(config["solver"]),
    )
    report = analysis.refinement_experiment(template, pairs, float(section["horizon"]))

    _write_csv(
        os.path.join(out_dir, "refine_table.csv"),
        ["nu", "h", "steps", "h_times_initial_energy", "final_energy", "completed"],
        [
            (r.nu, r.h, r.steps, r.initial_energy_scaled, r.final_energy, int(r.completed))
            for r in report.rows
        ],
    )
    _write_csv(
        os.path.join(out_dir, "refine_distances.csv"),
        ["pair", "state_distance", "energy_distance"],
        [
            (i + 1, d, e)
            for i, (d, e) in enumerate(zip(report.state_distances, report.energy_distances))
        ],
    )
    if not args.no_plots:
        plots.save_refine_figure(report, os.path.join(out_dir, "refine_distances.png"))

    checks = {
        "all member runs completed": report.all_completed,
        "successive state distances strictly decreasing": report.cauchy_ok,
    }
    for name, ok in checks.items():
        _say(args.quiet, f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(checks.values()) else 1


def cmd_validate(config, out_dir, args):
    delta = float(config["model"]["delta_alpha"])
    if not (0.0 < delta < 1.0):
        print(
            f"configuration error: model.delta_alpha = {delta} violates (H4): "
            "the mobility weights need a positive floor delta_alpha in (0, 1)",
            file=sys.stderr,
        )
        return 2
    m = canonical(delta)
    report = validate_hypotheses(m)
    for name, entry in sorted(report.checks.items()):
        ok = entry["slack"] >= 0
        _say(args.quiet, f"{'PASS' if ok else 'FAIL'}  {name}  (worst slack {entry['slack']:.3e})")
    if not report.passed:
        print(
            f"configuration error: hypothesis validation failed: {report.failures()}",
            file=sys.stderr,
        )
        return 2

    family = config["regularizer"]["family"]
    nu = float(config["regularizer"]["nu"])
    all_ok = True
    grid = build_grid(config["grid"])
    for test_nu in sorted({0.5, 0.1, 0.01, nu}, reverse=True):
        reg = Regularizer(family, test_nu)
        suit = verify_suitability(reg, magnitude_samples(grid.dimension))
        all_ok = all_ok and suit.passed
        _say(
            args.quiet,
            f"{'PASS' if suit.passed else 'FAIL'}  suitability {family} nu={test_nu:g} "
            f"(worst slacks {suit.worst})",
        )

    eta0, theta0 = make_initial(grid, config["initial"])
    theta_sup = float(np.abs(theta0.values).max())
    for branch in ("r1_zero", "r1_positive"):
        consts = stability_constants(m, theta_sup, grid.measure, branch)
        _say(
            args.quiet,
            f"constants[{branch}]: R*={consts.r_star:g} A*={consts.a_star:g} "
            f"B*={consts.b_star:g} C*={consts.c_star:g} nu*={consts.nu_star:.6g}",
        )
    reg = Regularizer(family, nu)
    branch = "r1_positive" if reg.ap2_profile().r1 > 0 else "r1_zero"
    consts = stability_constants(m, theta_sup, grid.measure, branch)
    if nu >= consts.nu_star:
        _say(
            args.quiet,
            f"warning: nu = {nu} >= nu* = {consts.nu_star:.3e} (advisory bound)",
        )
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kwcflow",
        description="Run, audit, and probe the regularized grain-boundary gradient flow.",
    )
    sub = parser.add_subparsers(dest="subcommand")
    for name, helptext in (
        ("run", "integrate the flow and export traces plus snapshots"),
        ("audit", "re-check the energy inequalities of a finished run"),
        ("gamma", "variational-convergence diagnostic for the relaxed TV"),
        ("refine", "joint (nu, h) refinement experiment"),
        ("validate", "check model hypotheses, regularizer suitability, constants"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a configuration entry (repeatable, dotted keys)",
        )
        p.add_argument("--snapshot-every", type=int, default=None, metavar="K")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--no-plots", action="store_true")
        if name == "audit":
            p.add_argument("--trace", default=None, help="directory written by run")
    return parser


COMMANDS = {
    "run": cmd_run,
    "audit": cmd_audit,
    "gamma": cmd_gamma,
    "refine": cmd_refine,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = load_config(args.config, args.overrides)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.subcommand](config, out_dir, args)
    except (ConfigError, PreconditionError, SnapshotFormatError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except KwcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
