"""Command-line entry point.

Subcommands ``constants``, ``kernel``, ``simulate`` and ``verify`` all read the
same YAML run configuration. Exit codes: 0 all checks pass, 1 a verification
fails, 2 configuration or validation error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from fracspde import bounds
from fracspde.config import RunConfig, load_config
from fracspde.errors import BoundNotAsserted, ConfigError, GridError, GridWarning, NumericalError
from fracspde.kernel import build_kernel_table, dump_kernel_csv, kernel_l2_norm
from fracspde.solver import build_solver_kernel, config_digest, evolve_ensemble, read_ensemble, write_ensemble
from fracspde import verify

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

MASS_TOL = 1e-4
SYMMETRY_TOL = 1e-10
L2_RTOL = 0.01


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(cfg: RunConfig, args) -> int:
    return int(args.seed) if args.seed is not None else int(cfg.ensemble.base_seed)


def _constants(cfg: RunConfig) -> bounds.ModelConstants:
    c = cfg.constants
    N = cfg.truncation.N_list[0] if cfg.truncation.N_list else None
    return bounds.ModelConstants.from_coefficients(
        cfg.params, cfg.b, cfg.sigma, cfg.u0_sup, N=N, c=c.c, K0=c.K0, gamma=c.gamma
    )


def _write_kv(path: Path, rows: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for k, v in rows.items():
            w.writerow([k, repr(float(v))])


def _print_kv(rows: dict) -> None:
    width = max(len(k) for k in rows)
    for k, v in rows.items():
        print(f"{k:<{width}}  {float(v):.10g}")


# {{{ subcommands


def cmd_constants(cfg: RunConfig, args) -> int:
    consts = _constants(cfg)
    rows = consts.as_table()
    T = cfg.grid.T
    if consts.L_sigma > 0:
        rows["gamma_prop4(k=2)"] = bounds.prop4_gamma(consts, 2.0)
        rows["contraction(k=2)"] = bounds.contraction_factor(consts, 2.0)
    if consts.L_Nsigma is not None and consts.L_Nsigma > 0:
        rows["L_Nb"] = consts.L_Nb
        rows["L_Nsigma"] = consts.L_Nsigma
        rows["gamma_choice"] = bounds.gamma_choice(consts)
    thr = bounds.convergence_threshold(consts, T=T)
    rows["N_T"] = thr.N_T
    rows["c_T"] = thr.c_T
    _print_kv(rows)
    _write_kv(_out_dir(args) / "constants.csv", rows)
    return EXIT_OK


def cmd_kernel(cfg: RunConfig, args) -> int:
    grid = cfg.grid_spec
    times = sorted({t for t, _ in cfg.probe_points()}) or grid.times[1:].tolist()
    table = build_kernel_table(cfg.params, times, grid.xs, **cfg.kernel_options)
    cstar = cfg.params.cstar()
    ok = True
    rows = []
    for n, t in enumerate(table.times):
        g = table.values[n]
        mass = float(np.sum(g) * table.dx)
        sym = float(np.max(np.abs(g[1:] - g[1:][::-1])))
        l2 = kernel_l2_norm(table, t)
        target = cstar * t ** (-cfg.params.ratio)
        l2_err = abs(l2 / target - 1.0)
        passed = abs(mass - 1.0) <= MASS_TOL and sym < SYMMETRY_TOL and l2_err <= L2_RTOL
        ok &= passed
        rows.append([t, mass, sym, l2, target, l2_err, "pass" if passed else "fail"])
        print(f"t={t:.6g}  mass={mass:.12f}  sym={sym:.2e}  L2={l2:.8g}  "
              f"C*t^-r={target:.8g}  rel={l2_err:.2e}  {'pass' if passed else 'fail'}")
    out = _out_dir(args)
    dump_kernel_csv(table, out / "kernel.csv")
    with open(out / "kernel_checks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mass", "symmetry_residual", "l2", "l2_target", "l2_rel_err", "verdict"])
        for r in rows:
            w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in r])
    return EXIT_OK if ok else EXIT_FAIL


def _save_indices(cfg: RunConfig) -> list[int] | None:
    grid = cfg.grid_spec
    if not cfg.probes.times:
        return None
    return sorted({0} | {grid.time_index(t) for t, _ in cfg.probe_points()})


def _simulate(cfg: RunConfig, args, N=None, replicas=None, save=None):
    grid = cfg.grid_spec
    kernel = build_solver_kernel(cfg.params, grid, **cfg.kernel_options)
    return evolve_ensemble(
        cfg.initial_array(),
        cfg.b,
        cfg.sigma,
        grid,
        kernel,
        base_seed=_seed(cfg, args),
        replicas=cfg.ensemble.replicas if replicas is None else replicas,
        N=N,
        save_times=_save_indices(cfg) if save is None else save,
        threads=args.threads,
        config_hash=config_digest(cfg.digest_payload()),
    )


def cmd_simulate(cfg: RunConfig, args) -> int:
    ens = _simulate(cfg, args)
    out = _out_dir(args)
    write_ensemble(out / "ensemble.bin", ens)
    orders = cfg.probes.moment_orders
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "statistic", "value"])
        for i, t in enumerate(ens.times):
            for j, x in enumerate(cfg.grid_spec.xs):
                s = ens.values[:, i, j]
                stats = [("mean", s.mean()), ("variance", s.var(ddof=1) if s.size > 1 else 0.0)]
                stats += [(f"moment_{k:g}", np.mean(np.abs(s) ** k)) for k in orders]
                for name, v in stats:
                    w.writerow([repr(float(t)), repr(float(x)), name, repr(float(v))])
    print(f"wrote {ens.n_replicas} replicas x {ens.times.size} times x {ens.grid.nx} points to {out / 'ensemble.bin'}")
    return EXIT_OK


def _moment_reports(cfg, ens, consts):
    reps = []
    for probe in cfg.probe_points():
        for k in cfg.probes.moment_orders:
            reps.append(verify.check_moment_bounds(ens, consts, float(k), probe))
    return reps


def _tail_level(consts, t: float) -> float:
    if consts.sigma_sup is not None:
        return bounds.tail_threshold_bounded_sigma(consts, t)
    return bounds.tail_threshold_linear(consts, t)


def _tail_reports(cfg, args, consts, ens=None):
    reps = []
    probes = cfg.probe_points()
    if ens is not None:
        for probe in probes:
            if ens.truncation_level is None:
                reps.append(verify._not_asserted("tail", probe, math.nan, None, "ensemble is not truncated"))
            else:
                reps.append(verify.check_tail_bounds(ens, consts, ens.truncation_level - 1.0, probe))
        return reps
    grid = cfg.grid_spec
    for t in sorted({p[0] for p in probes}):
        here = [p for p in probes if p[0] == t]
        N = _tail_level(consts, t)
        try:
            tens = _simulate(cfg, args, N=N + 1.0, save=[0, grid.time_index(t)])
        except OverflowError as exc:
            reps += [verify._not_asserted("tail", p, N, None, str(exc)) for p in here]
            continue
        reps += [verify.check_tail_bounds(tens, consts, N, p) for p in here]
    return reps


def _converge_reports(cfg, args, consts):
    N_list = cfg.truncation.N_list
    if len(N_list) < 2:
        raise ConfigError("verify converge needs truncation.N_list with at least two levels")
    grid = cfg.grid_spec
    kernel = build_solver_kernel(cfg.params, grid, **cfg.kernel_options)
    k = float(cfg.probes.moment_orders[0])
    rep = verify.convergence_study(
        cfg.initial_array(), cfg.b, cfg.sigma, grid, kernel, N_list, k,
        _seed(cfg, args), cfg.ensemble.replicas, consts=consts, threads=args.threads,
    )
    print(f"d_N = {np.array2string(rep.d, precision=4)}; first zero at N = {rep.first_vanishing}; "
          f"first vacuous N = {rep.first_vacuous}; monotone = {rep.monotone}; slope = {rep.fitted_slope:.4g}")
    return rep.reports


def cmd_verify(cfg: RunConfig, args) -> int:
    if not cfg.probes.times and args.which in ("moments", "tails", "all"):
        raise ConfigError("verify needs probes.times")
    consts = _constants(cfg)
    ens = read_ensemble(args.ensemble) if args.ensemble else None
    reports = []
    if args.which in ("moments", "all"):
        reports += _moment_reports(cfg, ens if ens is not None else _simulate(cfg, args), consts)
    if args.which in ("tails", "all"):
        reports += _tail_reports(cfg, args, consts, ens)
    if args.which in ("converge", "all"):
        reports += _converge_reports(cfg, args, consts)
    for r in reports:
        print(f"{r.quantity:<11} t={r.t:<8.4g} x={r.x:<8.4g} k/N={r.k_or_N:<8.4g} "
              f"est={r.estimate:<11.4e} ci=[{r.ci_lo:.4e}, {r.ci_hi:.4e}] "
              f"log_env={r.log_envelope:<11.5g} {r.verdict}")
    verify.write_reports_csv(_out_dir(args) / "report.csv", reports)
    return EXIT_FAIL if verify.any_fail(reports) else EXIT_OK


# }}}

COMMANDS = {
    "constants": cmd_constants,
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracspde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override ensemble.base_seed")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        if name == "verify":
            p.add_argument("which", nargs="?", default="all", choices=["moments", "tails", "converge", "all"])
            p.add_argument("--ensemble", default=None, help="verify this ensemble file instead of simulating")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", GridWarning)
            cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, GridError, BoundNotAsserted, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
