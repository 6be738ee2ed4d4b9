"""Acceptance criteria, one test each, at the stated tolerances and budgets.

Each test prints a ``criterion N PASS|FAIL`` line, repeated in the terminal
summary. Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from fracspde import bounds, verify
from fracspde.cli import main as cli_main
from fracspde.coefficients import CoefficientSpec as C, check_assumption3
from fracspde.config import load_config
from fracspde.kernel import ModelParams, build_kernel_table, kernel_l2_norm, periodic_grid
from fracspde.solver import GridSpec, build_solver_kernel, discrete_noise_variance, evolve, evolve_ensemble, zero_noise
from fracspde.specfun import mittag_leffler

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FRAC = ModelParams(2.0, 0.5)

# (alpha, beta) -> (half_width, nx, tail_tol); the alpha < 2 kernels have algebraic
# tails, so no desk-size box meets 1e-6 and the tolerance is relaxed for them
KERNEL_SWEEP = {
    (2.0, 1.0): (32.0, 8192, 1e-6),
    (2.0, 0.5): (50.0, 2**14, 1e-6),
    (1.5, 0.75): (100.0, 2**15, 0.05),
    (1.0, 0.4): (200.0, 2**16, 0.05),
}
SWEEP_TIMES = [0.25, 1.0, 4.0]


def test_c01_special_functions(criterion):
    with criterion(1, "Mittag-Leffler goldens", budget=1.0) as c:
        e1 = mittag_leffler(1.0, -1.0)
        eh = mittag_leffler(0.5, -1.0)
        errs = (abs(e1 / math.exp(-1.0) - 1), abs(eh / (math.e * math.erfc(1.0)) - 1))
        at0 = [mittag_leffler(b, 0.0) for b in (0.3, 0.5, 0.7, 0.9)]
        c.ok = max(errs) <= 1e-8 and all(v == 1.0 for v in at0)
        c.detail = f"rel err E_1(-1) {errs[0]:.1e}, E_1/2(-1) {errs[1]:.1e}; E_b(0) = {at0}"


@pytest.fixture(scope="module")
def sweep_tables():
    tables = {}
    t0 = time.perf_counter()
    for (a, b), (L, nx, tol) in KERNEL_SWEEP.items():
        tables[(a, b)] = build_kernel_table(ModelParams(a, b), SWEEP_TIMES, periodic_grid(L, nx), tail_tol=tol)
    return tables, time.perf_counter() - t0


def test_c02_kernel_l2(criterion, sweep_tables):
    tables, build_time = sweep_tables
    with criterion(2, "kernel L2 identity", budget=30.0) as c:
        worst, heat_err = 0.0, 0.0
        for (a, b), tab in tables.items():
            p = ModelParams(a, b)
            cs = p.cstar()
            for t in SWEEP_TIMES:
                l2 = kernel_l2_norm(tab, t)
                worst = max(worst, abs(l2 / (cs * t ** (-p.ratio)) - 1))
                if (a, b) == (2.0, 1.0):
                    heat_err = max(heat_err, abs(l2 / (8 * math.pi * t) ** -0.5 - 1))
        c.ok = worst <= 0.01 and heat_err <= 1e-4 and build_time <= 30.0
        c.detail = f"max rel err vs C*t^-r {worst:.2e}; heat vs (8 pi t)^-1/2 {heat_err:.2e}; tables built in {build_time:.1f}s"


def test_c03_kernel_mass_symmetry(criterion, sweep_tables):
    tables, _ = sweep_tables
    with criterion(3, "kernel mass and symmetry") as c:
        mass_err, sym = 0.0, 0.0
        for tab in tables.values():
            for g in tab.values:
                mass_err = max(mass_err, abs(np.sum(g) * tab.dx - 1))
                sym = max(sym, float(np.max(np.abs(g[1:] - g[1:][::-1]))))
        c.ok = mass_err <= 1e-4 and sym < 1e-10
        c.detail = f"max |mass - 1| {mass_err:.1e}; max symmetry residual {sym:.1e}"


def test_c04_gaussian_degeneration(criterion):
    with criterion(4, "heat spike degeneration", budget=10.0) as c:
        grid = GridSpec(1.0, 64, 10.0, 512)
        ker = build_solver_kernel(ModelParams(2.0, 1.0), grid)
        u0 = np.zeros(grid.nx)
        u0[grid.nx // 2] = 1.0 / grid.dx
        path = evolve(u0, C.zero(), C.zero(), grid, zero_noise(grid), ker)
        t = grid.times[1:, None]
        exact = np.exp(-grid.xs**2 / (4 * t)) / np.sqrt(4 * math.pi * t)
        err = float(np.max(np.abs(path.values[1:] - exact)))
        c.ok = err <= 1e-4
        c.detail = f"max error over all steps {err:.2e}"


def _variance(x, axis=-1):
    return np.var(x, axis=axis, ddof=1)


def test_c05_additive_variance(criterion):
    with criterion(5, "additive-noise variance oracle", budget=300.0) as c:
        grid = GridSpec(1.0, 64, 8.0, 256)
        opts = {"tail_tol": 0.01, "nyquist_tol": 0.05}
        ker = build_solver_kernel(FRAC, grid, **opts)
        probes = [0.25, 0.5, 1.0]
        idx = [grid.time_index(t) for t in probes]
        ens = evolve_ensemble(0.0, C.zero(), C.affine(0.0, 1.0), grid, ker, base_seed=2026, replicas=2000, save_times=idx)
        fine = grid.refined()
        ker_fine = build_solver_kernel(FRAC, fine, **opts)
        cs = FRAC.cstar()
        inside, track, parts = [], [], []
        for t, m in zip(probes, idx):
            exact = discrete_noise_variance(ker, grid, m)
            est = verify.bootstrap_ci(ens.probe(t, 0.0), statistic=_variance, seed=m)
            cont = cs * t**0.75 / 0.75
            coarse_err = abs(exact / cont - 1)
            fine_err = abs(discrete_noise_variance(ker_fine, fine, fine.time_index(t)) / cont - 1)
            inside.append(est.ci_lo <= exact <= est.ci_hi)
            track.append(fine_err <= 0.10 and fine_err <= coarse_err)
            parts.append(
                f"t={t:g}: var {est.estimate:.4f} ci [{est.ci_lo:.4f}, {est.ci_hi:.4f}] exact {exact:.4f}, "
                f"continuum rel err {coarse_err:.3f} -> {fine_err:.3f}"
            )
        c.ok = all(inside) and all(track)
        c.detail = "; ".join(parts)


def test_c06_moment_envelopes(criterion, tmp_path):
    with criterion(6, "moment envelopes", budget=300.0) as c:
        verdicts, codes = [], []
        for name in ("linear_sigma", "bounded_sigma"):
            out = tmp_path / name
            codes.append(cli_main(["verify", "moments", "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out)]))
            verdicts += [line.rsplit(",", 1)[1] for line in (out / "report.csv").read_text().splitlines()[1:]]
        c.ok = codes == [0, 0] and len(verdicts) == 12 and all(v == "pass" for v in verdicts)
        c.detail = f"{verdicts.count('pass')}/{len(verdicts)} reports pass (2 regimes x k in {{2,4}} x 3 times)"


def test_c07_tail_envelopes(criterion):
    with criterion(7, "tail envelopes", budget=600.0) as c:
        parts, oks = [], []
        for name in ("linear_sigma", "bounded_sigma"):
            cfg = load_config(CONFIGS / f"{name}.yaml")
            grid = cfg.grid_spec
            ker = build_solver_kernel(cfg.params, grid, **cfg.kernel_options)
            consts = bounds.ModelConstants.from_coefficients(cfg.params, cfg.b, cfg.sigma, cfg.u0_sup, c=cfg.constants.c)
            bounded = consts.sigma_sup is not None
            for t in (0.5, 1.0):
                # smallest level at which the tail envelope is asserted
                N = (bounds.tail_threshold_bounded_sigma if bounded else bounds.tail_threshold_linear)(consts, t)
                m = grid.time_index(t)
                ens = evolve_ensemble(
                    cfg.initial_array(), cfg.b, cfg.sigma, grid, ker, cfg.ensemble.base_seed, 10_000, N=N + 1, save_times=[m]
                )
                rep = verify.check_tail_bounds(ens, consts, N, (t, 0.0))
                oks.append(rep.verdict == "pass")
                parts.append(
                    f"{name} t={t:g}: N={N:.4g} p={rep.estimate:.2g} ci_hi={rep.ci_hi:.2e} "
                    f"log env={rep.log_envelope:.4g} -> {rep.verdict}"
                )
        c.ok = all(oks)
        c.detail = "; ".join(parts)


def test_c08_contraction_sweep(criterion):
    with criterion(8, "contraction constant <= 3/4", budget=1.0) as c:
        rng = np.random.default_rng(8)
        worst, bad, ratios = 0.0, 0, []
        for _ in range(100):
            # uniform over 1/2 < alpha <= 2, 0 < beta <= min(1, alpha)
            alpha = 2.0 - rng.uniform(0.0, 1.5)
            beta = min(1.0, alpha) * (1.0 - rng.uniform(0.0, 1.0))
            consts = bounds.ModelConstants(
                ModelParams(alpha, beta), L_b=rng.uniform(0.0, 5.0), L_sigma=rng.uniform(0.1, 5.0), u0_sup=0.0
            )
            k = bounds.k_min_linear(consts) + rng.uniform(0.0, 10.0)
            val = bounds.contraction_factor(consts, k)
            worst = max(worst, val)
            if val > 0.75 + 1e-12:
                bad += 1
                ratios.append(consts.r)
        c.ok = bad == 0
        lo = f"; smallest offending beta/alpha {min(ratios):.3f}" if ratios else ""
        c.detail = f"max factor {worst:.4f}; {bad}/100 draws exceed 0.75{lo}"


def test_c09_truncation_convergence(criterion):
    with criterion(9, "truncation coupling and convergence", budget=300.0) as c:
        cfg = load_config(CONFIGS / "loglip_converge.yaml")
        grid = cfg.grid_spec
        ker = build_solver_kernel(cfg.params, grid, **cfg.kernel_options)
        u0 = cfg.initial_array()
        rep = verify.convergence_study(
            u0, cfg.b, cfg.sigma, grid, ker, cfg.truncation.N_list, 2.0, cfg.ensemble.base_seed, cfg.ensemble.replicas
        )
        same = verify.uniqueness_probe(u0, cfg.b, cfg.sigma, grid, ker, 3, replicas=8, reorder=False)
        levels = verify.uniqueness_probe(u0, cfg.b, cfg.sigma, grid, ker, 3, replicas=8, N=10.0, N_prime=15.0, reorder=False)
        reordered = verify.uniqueness_probe(u0, cfg.b, cfg.sigma, grid, ker, 3, replicas=8, N=10.0, N_prime=15.0)
        vanishes = rep.first_vanishing is not None and rep.first_vanishing == rep.first_vacuous
        c.ok = (
            len(cfg.truncation.N_list) == 5
            and rep.monotone
            and vanishes
            and same.sup_diff == 0.0
            and levels.sup_diff == 0.0
            and reordered.sup_diff <= 1e-10
        )
        c.detail = (
            f"d_N = {np.array2string(rep.d, precision=4)}, first zero at N={rep.first_vanishing}, "
            f"first vacuous N={rep.first_vacuous}, monotone={rep.monotone}; uniqueness sup diff "
            f"{same.sup_diff:.1e} / {levels.sup_diff:.1e} / {reordered.sup_diff:.1e} (reordered)"
        )


def test_c10_assumption3(criterion):
    with criterion(10, "Assumption-3 checker", budget=30.0) as c:
        N_list = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
        good = check_assumption3(C.linear(0.0), C.loglip(1.3), FRAC, N_list)
        bad = check_assumption3(C.linear(0.0), C.loglip(2.0), FRAC, N_list)
        arithmetic = good.threshold == 0.65625 and abs(good.sigma_exponent - 0.3) <= 0.05 and abs(bad.sigma_exponent - 1.0) <= 0.05
        c.ok = good.admissible and not bad.admissible and arithmetic
        c.detail = (
            f"p=1.3 {good.verdict} (exponent {good.sigma_exponent:.3f}), p=2 {bad.verdict} "
            f"(exponent {bad.sigma_exponent:.3f}); threshold {good.threshold}"
        )


def test_c11_determinism(criterion, tmp_path):
    with criterion(11, "byte-identical ensembles", budget=120.0) as c:
        cfg = str(CONFIGS / "bounded_sigma.yaml")
        blobs, codes = {}, []
        for threads in (1, 8):
            for run in ("a", "b"):
                out = tmp_path / f"{threads}{run}"
                codes.append(cli_main(["simulate", "--config", cfg, "--out", str(out), "--threads", str(threads)]))
                blobs[(threads, run)] = (out / "ensemble.bin").read_bytes()
        same_runs = all(blobs[(n, "a")] == blobs[(n, "b")] for n in (1, 8))
        across = blobs[(1, "a")] == blobs[(8, "a")]
        c.ok = codes == [0] * 4 and same_runs and across
        c.detail = f"repeat runs identical: {same_runs}; threads 1 vs 8 identical: {across}; {len(blobs[(1, 'a')])} bytes"
