"""Monte Carlo verification of the moment, tail and truncation-convergence envelopes.

All envelope comparisons are one-sided: a report passes when the upper end of
the 0.99 confidence interval is below the envelope, fails when the lower end
is above it, and is inconclusive otherwise. Comparisons are made in log space
because the envelopes routinely leave the float range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from fracspde import bounds
from fracspde.errors import BoundNotAsserted, ConfigError
from fracspde.solver import Ensemble, evolve_ensemble

__all__ = [
    "BoundReport",
    "ConvergenceReport",
    "Estimate",
    "UniquenessReport",
    "bootstrap_ci",
    "check_moment_bounds",
    "check_tail_bounds",
    "convergence_study",
    "estimate_moments",
    "estimate_tail",
    "uniqueness_probe",
    "verdict_of",
    "any_fail",
    "write_reports_csv",
]

CONFIDENCE = 0.99
N_RESAMPLES = 1000
CSV_COLUMNS = ["quantity", "t", "x", "k_or_N", "estimate", "ci_lo", "ci_hi", "envelope", "verdict"]


class Estimate(NamedTuple):
    estimate: float
    ci_lo: float
    ci_hi: float
    degenerate: bool = False


def bootstrap_ci(samples, statistic=np.mean, seed: int = 0, n_resamples: int = N_RESAMPLES) -> Estimate:
    """Percentile bootstrap interval at level 0.99.

    An all-identical sample yields a zero-width interval flagged ``degenerate``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    est = float(statistic(x))
    if np.all(x == x[0]):
        return Estimate(est, est, est, True)
    res = stats.bootstrap(
        (x,),
        statistic,
        confidence_level=CONFIDENCE,
        n_resamples=n_resamples,
        method="percentile",
        vectorized=True,
        random_state=np.random.default_rng(seed),
    )
    lo, hi = res.confidence_interval
    return Estimate(est, float(lo), float(hi), False)


def _probe_samples(ensemble, probe) -> np.ndarray:
    if isinstance(ensemble, Ensemble):
        t, x = probe
        return ensemble.probe(t, x)
    return np.asarray(ensemble, dtype=float).ravel()


def estimate_moments(ensemble, k: float, probe=None, seed: int = 0) -> Estimate:
    """Mean of ``|u(t,x)|^k`` over replicas with a 0.99 bootstrap interval.

    ``ensemble`` is an :class:`Ensemble` (``probe = (t, x)``) or a 1-D sample.
    """
    x = _probe_samples(ensemble, probe)
    if x.size == 0:
        raise ValueError("empty ensemble")
    return bootstrap_ci(np.abs(x) ** k, seed=seed)


def estimate_tail(ensemble, N: float, probe=None) -> Estimate:
    """Empirical ``P(|u_{N+1}(t,x)| >= e^N)`` with a two-sided 0.99 Clopper-Pearson interval."""
    if isinstance(ensemble, Ensemble) and ensemble.truncation_level is not None:
        if not math.isclose(ensemble.truncation_level, N + 1, rel_tol=1e-12):
            raise ValueError(f"ensemble was evolved at level {ensemble.truncation_level}, need N + 1 = {N + 1}")
    x = _probe_samples(ensemble, probe)
    n = x.size
    if n == 0:
        raise ValueError("empty ensemble")
    hits = int(np.count_nonzero(np.abs(x) >= math.exp(N)))
    ci = stats.binomtest(hits, n).proportion_ci(confidence_level=CONFIDENCE, method="exact")
    return Estimate(hits / n, float(ci.low), float(ci.high), False)


# {{{ reports


def verdict_of(ci_lo: float, ci_hi: float, log_envelope: float) -> str:
    """One-sided verdict of a confidence interval against an upper envelope."""
    def lg(v):
        return math.log(v) if v > 0 else -math.inf

    if lg(ci_hi) <= log_envelope:
        return "pass"
    if lg(ci_lo) > log_envelope:
        return "fail"
    return "inconclusive"


@dataclass(frozen=True)
class BoundReport:
    """Empirical estimate beside a theoretical envelope."""

    quantity: str
    t: float
    x: float
    k_or_N: float
    estimate: float
    ci_lo: float
    ci_hi: float
    log_envelope: float
    verdict: str
    note: str = ""

    @property
    def envelope(self) -> float:
        try:
            return math.exp(self.log_envelope)
        except OverflowError:
            return math.inf

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def csv_row(self) -> list[str]:
        env = self.envelope
        if math.isnan(self.log_envelope):
            env_s = "nan"
        elif env == 0.0 or math.isinf(env):
            env_s = f"exp({self.log_envelope:.10g})"
        else:
            env_s = repr(env)
        return [
            self.quantity,
            repr(float(self.t)),
            repr(float(self.x)),
            repr(float(self.k_or_N)),
            repr(float(self.estimate)),
            repr(float(self.ci_lo)),
            repr(float(self.ci_hi)),
            env_s,
            self.verdict,
        ]


def _not_asserted(quantity, probe, k_or_N, est: Estimate | None, why: str) -> BoundReport:
    e = est or Estimate(math.nan, math.nan, math.nan)
    t, x = probe
    return BoundReport(quantity, t, x, k_or_N, e.estimate, e.ci_lo, e.ci_hi, math.nan, "not-asserted", why)


def check_moment_bounds(
    ensemble, consts: bounds.ModelConstants, k: float, probe, seed: int = 0, min_replicas: int = 100
) -> BoundReport:
    """Compare ``E|u(t,x)|^k`` with the moment envelope.

    The bounded-sigma envelope is used when ``consts.sigma_sup`` is set,
    otherwise the linear-growth one. Outside the envelope's parameter range,
    or with fewer than ``min_replicas`` non-identical samples, the report is
    ``not-asserted``.
    """
    t, x = probe
    est = estimate_moments(ensemble, k, probe, seed=seed)
    n = ensemble.n_replicas if isinstance(ensemble, Ensemble) else np.size(ensemble)
    if n < min_replicas and not est.degenerate:
        return _not_asserted("moment", probe, k, est, f"{n} replicas < {min_replicas}")
    try:
        if consts.sigma_sup is not None:
            log_env = bounds.log_moment_bound_bounded_sigma(consts, k, t)
            note = "bounded sigma"
        else:
            log_env = bounds.log_moment_bound_linear(consts, k, t)
            note = "linear growth"
    except BoundNotAsserted as exc:
        return _not_asserted("moment", probe, k, est, str(exc))
    if est.degenerate:
        note += "; zero-width CI"
    return BoundReport("moment", t, x, k, est.estimate, est.ci_lo, est.ci_hi, log_env,
                       verdict_of(est.ci_lo, est.ci_hi, log_env), note)


def check_tail_bounds(
    ensemble, consts: bounds.ModelConstants, N: float, probe, min_replicas: int = 10_000
) -> BoundReport:
    """Compare ``P(|u_{N+1}(t,x)| >= e^N)`` with the tail envelope (rare-event check)."""
    t, x = probe
    est = estimate_tail(ensemble, N, probe)
    n = ensemble.n_replicas if isinstance(ensemble, Ensemble) else np.size(ensemble)
    if n < min_replicas:
        return _not_asserted("tail", probe, N, est, f"{n} replicas < {min_replicas}")
    try:
        if consts.sigma_sup is not None:
            log_env = bounds.log_tail_bound_bounded_sigma(consts, N, t)
            note = "bounded sigma"
        else:
            log_env = bounds.log_tail_bound_linear(consts, N, t)
            note = "linear growth"
    except BoundNotAsserted as exc:
        return _not_asserted("tail", probe, N, est, str(exc))
    return BoundReport("tail", t, x, N, est.estimate, est.ci_lo, est.ci_hi, log_env,
                       verdict_of(est.ci_lo, est.ci_hi, log_env), note)


def write_reports_csv(path, reports: Iterable[BoundReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            w.writerow(rep.csv_row())


def any_fail(reports: Iterable[BoundReport]) -> bool:
    return any(r.verdict == "fail" for r in reports)


# }}}

# {{{ truncation convergence


@dataclass(frozen=True)
class ConvergenceReport:
    """Differences ``d_N = sup_{t,x} ||u_{N+1}(t,x) - u_N(t,x)||_k`` under common noise."""

    N_list: np.ndarray
    T: float
    d: np.ndarray
    partial_sums: np.ndarray
    first_vanishing: float | None
    first_vacuous: float | None
    monotone: bool
    fitted_slope: float
    asserted: bool
    log_envelopes: np.ndarray
    notes: tuple[str, ...] = field(default=())

    @property
    def reports(self) -> list[BoundReport]:
        out = []
        for N, dN, le in zip(self.N_list, self.d, self.log_envelopes):
            if not self.asserted or math.isnan(le):
                verdict = "not-asserted"
            else:
                verdict = verdict_of(dN, dN, le)
            out.append(BoundReport("convergence", self.T, math.nan, N, dN, dN, dN, le, verdict))
        return out


def _coupling_ok(lo: np.ndarray, hi: np.ndarray, N: float) -> bool:
    # u_N and u_M agree exactly up to the first step where u_N reaches e^N
    cut = math.exp(N)
    for a, b in zip(lo, hi):
        reach = np.flatnonzero(np.max(np.abs(a), axis=1) >= cut)
        stop = reach[0] + 1 if reach.size else a.shape[0]
        if not np.array_equal(a[:stop], b[:stop]):
            return False
    return True


def convergence_study(
    u0,
    b,
    sigma,
    grid,
    kernel,
    N_list: Sequence[float],
    k: float,
    base_seed: int,
    replicas: int,
    consts: bounds.ModelConstants | None = None,
    N0: float | None = None,
    enforce_thresholds: bool = False,
    threads: int = 1,
    chunk: int = 256,
) -> ConvergenceReport:
    """Truncation-convergence study with coupled noise.

    Every level reuses the same ``(base_seed, replica)`` noise. ``d_N`` is
    exactly 0 once ``e^N`` exceeds every grid value; the report gives the
    first vanishing level, the first vacuous level and whether ``d_N`` is nonincreasing before it. The
    fitted slope is the least-squares slope of ``log d_N`` against
    ``N^(2 - r)`` over the positive ``d_N`` (NaN with fewer than two).

    The envelopes are only asserted when every level exceeds
    ``max(N0, N_T, c_T)`` from :func:`fracspde.bounds.convergence_threshold`;
    with ``enforce_thresholds`` a shortfall raises :class:`BoundNotAsserted`.
    """
    N_arr = np.asarray(N_list, dtype=float)
    if N_arr.size < 2 or np.any(np.diff(N_arr) <= 0):
        raise ValueError("N_list must be increasing with at least two levels")
    levels = sorted(set(N_arr.tolist()) | set((N_arr + 1).tolist()))
    ids = np.arange(replicas) if np.ndim(replicas) == 0 else np.asarray(replicas, dtype=np.int64)
    acc = np.zeros((N_arr.size, grid.nt, grid.nx))
    sup = dict.fromkeys(levels, 0.0)
    # chunk over replicas so memory does not scale with replicas x levels
    for start in range(0, ids.size, chunk):
        part = ids[start:start + chunk]
        paths = {
            N: evolve_ensemble(u0, b, sigma, grid, kernel, base_seed, part, N=N, threads=threads).values
            for N in levels
        }
        for N in levels:
            sup[N] = max(sup[N], float(np.max(np.abs(paths[N]))))
        for i, N in enumerate(N_arr):
            lo, hi = paths[N], paths[N + 1]
            if not _coupling_ok(lo, hi, N):
                raise ConfigError(
                    f"levels {N:g} and {N + 1:g} disagree before any value reached e^N: noise is not coupled"
                )
            acc[i] += np.sum(np.abs(hi[:, 1:] - lo[:, 1:]) ** k, axis=0)
    notes: list[str] = []
    d = np.max((acc / ids.size) ** (1.0 / k), axis=(1, 2))

    # level N is vacuous when no value of u_N ever reaches e^N
    vac = [N for N in N_arr if sup[N] < math.exp(N)]
    zero = np.flatnonzero(d == 0)
    first = float(N_arr[zero[0]]) if zero.size else None
    stop = zero[0] if zero.size else d.size
    monotone = bool(np.all(np.diff(d[:stop]) <= 0) and np.all(d[stop:] == 0))

    r = kernel.params.ratio
    pos = d > 0
    slope = float(np.polyfit(N_arr[pos] ** (2.0 - r), np.log(d[pos]), 1)[0]) if pos.sum() >= 2 else math.nan

    asserted = False
    log_env = np.full(N_arr.size, math.nan)
    if consts is not None:
        thr = bounds.convergence_threshold(consts, T=grid.T)
        need = max(thr.N_T, thr.c_T, N0 if N0 is not None else 0.0)
        asserted = bool(N_arr[0] >= need)
        if not asserted:
            notes.append(f"levels start at {N_arr[0]:g}, below the validity level {need:.4g}")
            if enforce_thresholds:
                raise BoundNotAsserted(notes[-1])
        for i, N in enumerate(N_arr):
            try:
                if consts.sigma_sup is not None:
                    log_env[i] = bounds.convergence_envelope_bounded(consts, N, grid.T)
                else:
                    log_env[i] = bounds.convergence_envelope_linear(consts, N, grid.T)
            except BoundNotAsserted as exc:
                notes.append(str(exc))

    return ConvergenceReport(
        N_list=N_arr,
        T=grid.T,
        d=d,
        partial_sums=np.cumsum(d),
        first_vanishing=first,
        first_vacuous=float(vac[0]) if vac else None,
        monotone=monotone,
        fitted_slope=slope,
        asserted=asserted,
        log_envelopes=log_env,
        notes=tuple(notes),
    )


class UniquenessReport(NamedTuple):
    sup_diff: float
    levels: tuple[float | None, float | None]
    max_abs: float


def uniqueness_probe(
    u0,
    b,
    sigma,
    grid,
    kernel,
    base_seed: int,
    replicas: int = 8,
    N: float | None = None,
    N_prime: float | None = None,
    reorder: bool = True,
) -> UniquenessReport:
    """Two runs on the same noise that differ only in bookkeeping.

    The second run uses truncation level ``N_prime`` and, with ``reorder``,
    sums the memory term in reverse order. When both levels exceed every grid
    value the runs solve the same discrete equation, so ``sup_diff`` should be
    at floating-point reassociation scale.
    """
    u = evolve_ensemble(u0, b, sigma, grid, kernel, base_seed, replicas, N=N).values
    v = evolve_ensemble(u0, b, sigma, grid, kernel, base_seed, replicas, N=N_prime, reverse_history=reorder).values
    return UniquenessReport(float(np.max(np.abs(u - v))), (N, N_prime), float(np.max(np.abs(u))))


# }}}
