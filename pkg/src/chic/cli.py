"""Command-line experiment driver.

Five commands over one configuration format:

    chic simulate   --config run.ini          time integration + diagnostics
    chic equilibria --config run.ini          steady profiles + gradient fit
    chic decompose  --config run.ini          co-integrated phase split
    chic verify     [--config run.ini]        the full invariant suite
    chic fit-decay  --override fit.csv=...    decay-rate fit on a CSV column

Every command accepts --config PATH, repeatable --override section.key=value,
--seed N and --out DIR (the last two override the [run] section).  Exit
codes: 0 success, 2 configuration error, 3 numerical failure, 4 verification
failure.  CHIC_THREADS caps the transform worker count.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .artifacts import (
    write_csv,
    write_diagnostics_csv,
    write_json,
    write_plot_script,
    write_trajectory_csv,
)
from .config import (
    ConfigError,
    RunConfig,
    build_field,
    build_initial_data,
    load_config,
    require_alpha_positive,
)
from .decomposition import decay_check, split_certificate, split_integrate
from .dynamics import BlowupError, StabilityError, integrate
from .equilibrium import (
    ConvergenceError,
    equilibrium_from_data,
    hessian_spectrum,
    loja_fit,
    solve_steady,
)
from .fitting import SERIES_ROLES, fit_decay
from .functionals import CSV_COLUMNS, conserved
from .spectral import mean_and_deflate, to_nodal
from .verification import run_verification

__all__ = ["main"]


def _params_summary(cfg: RunConfig) -> dict:
    p = cfg.params
    return {
        "epsilon": p.epsilon,
        "alpha": p.alpha,
        "sigma": p.sigma,
        "coupling": p.coupling,
        "potential": {"kind": p.potential.kind, "a": p.potential.a},
        "grid": {"dim": cfg.grid.dim, "n": cfg.grid.n},
        "seed": cfg.seed,
    }


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    init = build_initial_data(cfg)
    traj = integrate(init, cfg.scheme, cfg.params, func_coeffs=cfg.func_coeffs)
    out = cfg.out_dir

    write_diagnostics_csv(out / "diagnostics.csv", traj.records)
    write_trajectory_csv(out / "trajectory.csv", cfg.grid, traj.states)

    final = traj.states[-1]
    total, chi_mass, chi_t_mean, theta_defect = conserved(final, cfg.params, init)
    last = traj.records[-1]
    summary = {
        "command": "simulate",
        "config": _params_summary(cfg),
        "dt": cfg.scheme.resolved_dt(cfg.grid),
        "t_end": final.time,
        "snapshots": len(traj.states),
        "final": {name: getattr(last, name) for name in CSV_COLUMNS},
        "mass_defect": abs(total - init.mass_total()),
        "theta_mean_defect": theta_defect,
    }
    write_json(out / "summary.json", summary)
    write_plot_script(
        out / "diagnostics.plot", "diagnostics.csv",
        ["norm_theta_tilde", "norm_q", "norm_chi_V", "norm_chit_Vdual"],
        title="diagnostic norms", logscale_y=True,
    )
    print(f"simulate: {len(traj.states)} snapshots to t = {final.time:g}, "
          f"mass defect {summary['mass_defect']:.3e} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------

def _branch_dict(eq) -> dict:
    return {
        "m": eq.m,
        "residual": eq.residual,
        "energy": eq.energy,
        "hessian_min_eig": eq.hessian_min_eig,
        "newton_iterations": eq.newton_iterations,
        "flow_steps": eq.flow_steps,
        "norm_chi_inf": float(np.sqrt(np.sum(eq.grid.wcos * eq.chi_inf ** 2))),
    }


def cmd_equilibria(cfg: RunConfig) -> int:
    init = build_initial_data(cfg)
    spec = cfg.equilibria
    theta_inf, m_data = equilibrium_from_data(init, cfg.params)
    m = m_data if spec.m is None else spec.m

    # the constant branch chi = m is always a steady profile, exactly
    zero = np.zeros(cfg.grid.shape)
    const_eigs = hessian_spectrum(cfg.grid, cfg.params.potential, zero, m,
                                  k_max=1)
    const_branch = {
        "m": m,
        "residual": 0.0,
        "hessian_min_eig": float(const_eigs[0]),
        "stable": bool(const_eigs[0] > 0.0),
    }

    guess = build_field(cfg.grid, spec.guess,
                        default_seed=1000003 * (cfg.seed + 1) + 9)
    _, guess = mean_and_deflate(cfg.grid, guess)
    eq = solve_steady(cfg.grid, cfg.params.potential, m, guess, tol=spec.tol)
    fit = loja_fit(eq, cfg.params.potential, eta=spec.eta,
                   n_directions=spec.n_directions, n_radii=spec.n_radii,
                   seed=cfg.seed)

    out = cfg.out_dir
    solved = _branch_dict(eq)
    write_json(out / "equilibrium.json", {
        "command": "equilibria",
        "config": _params_summary(cfg),
        "theta_inf": theta_inf,
        "constant_branch": const_branch,
        "solved_branch": solved,
        "branches_distinct": bool(solved["norm_chi_inf"] > 1e-8),
    })
    write_json(out / "loja.json", fit)

    profile = eq.chi_inf.copy()
    profile[(0,) * cfg.grid.dim] = m
    nodal = to_nodal(cfg.grid, profile)
    axes = [cfg.grid.nodes1d] * cfg.grid.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    header = list("xyz"[: cfg.grid.dim]) + ["chi_inf"]
    rows = np.column_stack([g.ravel() for g in mesh] + [nodal.ravel()])
    write_csv(out / "profile.csv", header, rows)
    if cfg.grid.dim == 1:
        write_plot_script(out / "profile.plot", "profile.csv", ["chi_inf"],
                          title="steady profile", x_column="x")

    print(f"equilibria: residual {eq.residual:.3e}, "
          f"min Hessian eig {eq.hessian_min_eig:.4g}, "
          f"gradient-fit rho {fit.rho:.4f} ({fit.regime}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def cmd_decompose(cfg: RunConfig) -> int:
    require_alpha_positive(cfg, "decompose")
    init = build_initial_data(cfg)
    run = split_integrate(init, cfg.scheme, cfg.params,
                          ell=cfg.decompose.ell, keep_states=True)
    rate, r2, n_used = decay_check(run.times, run.decay_norms)
    stride = max(1, len(run.full_states) // cfg.decompose.certificate_snapshots)
    cert = split_certificate(
        cfg.grid, cfg.params.potential, run.ell,
        [s.chi for s in run.full_states[::stride]],
        n_fields=cfg.decompose.certificate_fields, seed=cfg.seed,
    )

    out = cfg.out_dir
    header = ["t", "norm_full", "norm_decay", "norm_control",
              "control_grad_theta", "control_chi_t", "control_Achi"]
    rows = np.column_stack([
        run.times, run.full_norms, run.decay_norms, run.control_norms,
        run.control_grad_theta, run.control_chi_t, run.control_Achi,
    ])
    write_csv(out / "split.csv", header, rows)
    write_json(out / "split_summary.json", {
        "command": "decompose",
        "config": _params_summary(cfg),
        "ell": run.ell,
        "stabilization": run.ell_s,
        "recombination_error": run.recombination_error,
        "curl_controlled": run.curl_controlled,
        "certificate_min": cert,
        "decay_rate": rate,
        "decay_r_squared": r2,
        "decay_points": n_used,
    })
    write_plot_script(out / "split.plot", "split.csv",
                      ["norm_full", "norm_decay", "norm_control"],
                      title="phase split", logscale_y=True)
    print(f"decompose: ell {run.ell:.4g}, recombination "
          f"{run.recombination_error:.3e}, decaying-part rate {rate:.4g} "
          f"(R^2 {r2:.4f}), certificate min {cert:.3e} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(cfg: RunConfig) -> int:
    require_alpha_positive(cfg, "verify")
    report, traj = run_verification(seed=cfg.seed)
    out = cfg.out_dir
    write_diagnostics_csv(out / "diagnostics.csv", traj.records)
    write_json(out / "verify_report.json", {
        "command": "verify",
        "seed": report.seed,
        "passed": report.passed,
        "n_checks": len(report.results),
        "n_failed": sum(not r.passed for r in report.results),
        "checks": [asdict(r) for r in report.results],
    })
    for line in report.lines():
        print(line)
    n_ok = sum(r.passed for r in report.results)
    print(f"verify: {n_ok}/{len(report.results)} checks passed -> {out}")
    return 0 if report.passed else 4


# ---------------------------------------------------------------------------
# fit-decay
# ---------------------------------------------------------------------------

def _read_csv_columns(path: Path, names):
    with open(path, newline="") as fh:
        reader = csv_mod.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty CSV") from None
        idx = []
        for name in names:
            if name not in header:
                raise ConfigError(
                    f"{path}: no column {name!r}; available: {', '.join(header)}"
                )
            idx.append(header.index(name))
        cols = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            try:
                for out_list, i in zip(cols, idx):
                    out_list.append(float(row[i]))
            except (ValueError, IndexError):
                raise ConfigError(
                    f"{path}:{lineno}: malformed CSV row"
                ) from None
    return [np.array(c) for c in cols]


def cmd_fit_decay(cfg: RunConfig) -> int:
    spec = cfg.fit
    if spec.csv is None:
        raise ConfigError(
            "fit-decay needs a CSV path: set fit.csv in the config or pass "
            "--override fit.csv=PATH"
        )
    path = Path(spec.csv)
    if not path.exists():
        raise ConfigError(f"fit input not found: {path}")
    times, values = _read_csv_columns(path, ["t", spec.column])

    window = None
    if spec.t_min is not None or spec.t_max is not None:
        window = (
            -math.inf if spec.t_min is None else spec.t_min,
            math.inf if spec.t_max is None else spec.t_max,
        )
    role = spec.role if spec.role is not None else SERIES_ROLES.get(spec.column)
    try:
        result = fit_decay(times, values, kind=spec.kind, window=window,
                           role=role)
    except ValueError as exc:
        print(f"fit-decay failed: {exc}", file=sys.stderr)
        return 3

    out = cfg.out_dir
    write_json(out / "decay_fit.json", {
        "command": "fit-decay",
        "source": str(path),
        "column": spec.column,
        "result": result,
    })
    rho_note = ("" if result.implied_rho is None
                else f", implied rho {result.implied_rho:.6g}")
    print(f"fit-decay: {result.kind} rate {result.rate:.6g} "
          f"(R^2 {result.r_squared:.4f}, {result.n_points} points"
          f"{rho_note}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

_COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
    "fit-decay": cmd_fit_decay,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="INI or JSON configuration file "
                             "(omit to use built-in defaults)")
    common.add_argument("--override", metavar="SECTION.KEY=VALUE",
                        action="append", default=[],
                        help="override one configuration value (repeatable)")
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (overrides [run] seed)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory (overrides [run] out)")

    parser = argparse.ArgumentParser(
        prog="chic",
        description="Conserved-phase-field simulation and analysis driver.",
        epilog="Exit codes: 0 ok, 2 config error, 3 numerical failure, "
               "4 verification failure.  CHIC_THREADS caps transform workers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "integrate the coupled system and write diagnostics",
        "equilibria": "solve steady profiles and fit the gradient inequality",
        "decompose": "co-integrate the decaying/controlled phase split",
        "verify": "run the whole invariant suite",
        "fit-decay": "fit a decay law to a diagnostics CSV column",
    }
    for name, handler in _COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        sp.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=args.override,
                          seed=args.seed, out_dir=args.out)
        return args.handler(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BlowupError, StabilityError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
