"""Simulate an ensemble and compare moments and tails with the analytic envelopes.

Run with ``python demos/03_moments_and_tails.py`` (about a minute).
"""
from fracspde import bounds, verify
from fracspde.coefficients import CoefficientSpec as C
from fracspde.kernel import ModelParams
from fracspde.solver import GridSpec, build_solver_kernel, evolve_ensemble

params = ModelParams(2.0, 0.5)
grid = GridSpec(T=1.0, nt=32, half_width=8.0, nx=128)
kernel = build_solver_kernel(params, grid, tail_tol=0.01, nyquist_tol=0.05)

# bounded noise coefficient: moments grow at most like an exponential in t
sigma = C.bounded_sine(1.0, 1.0)
ens = evolve_ensemble(1.0, C.zero(), sigma, grid, kernel, base_seed=7, replicas=500, save_times=[16, 32])
consts = bounds.ModelConstants(params, L_b=0.0, L_sigma=1.0, u0_sup=1.0, sigma_sup=1.0)

for t in (0.5, 1.0):
    for k in (2.0, 4.0):
        rep = verify.check_moment_bounds(ens, consts, k, (t, 0.0))
        print(f"t={t} k={k}: E|u|^k in [{rep.ci_lo:.4g}, {rep.ci_hi:.4g}], log envelope {rep.log_envelope:.4g} -> {rep.verdict}")

# tails need a truncated ensemble at level N + 1 and at least 10^4 replicas;
# the bound is asserted only above the threshold level
small = GridSpec(T=1.0, nt=16, half_width=8.0, nx=64)
small_kernel = build_solver_kernel(params, small, tail_tol=1.0, nyquist_tol=1.0)
N = bounds.tail_threshold_bounded_sigma(consts, 1.0) + 0.5
tails = evolve_ensemble(1.0, C.zero(), sigma, small, small_kernel, base_seed=8, replicas=10_000, N=N + 1, save_times=[16])
rep = verify.check_tail_bounds(tails, consts, N, (1.0, 0.0))
print(f"N={N:.3f}: P(|u|>e^N) <= {rep.ci_hi:.3g}, log envelope {rep.log_envelope:.3g} -> {rep.verdict}")
