"""Truncation levels, admissibility, and convergence of the truncated solutions.

Run with ``python demos/04_truncation.py``.
"""
from fracspde import verify
from fracspde.coefficients import CoefficientSpec as C
from fracspde.coefficients import check_assumption3, lip_n
from fracspde.kernel import ModelParams
from fracspde.solver import GridSpec, build_solver_kernel

params = ModelParams(2.0, 0.5)
levels = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0]

# x log|x|^p has Lipschitz constants growing like (log N)^p
for p in (1.3, 2.0):
    rep = check_assumption3(C.zero(), C.loglip(p), params, levels)
    print(f"p={p}: fitted exponent {rep.sigma_exponent:.3f}, threshold {rep.threshold:.5f}, {rep.verdict}")
print("Lip_10 of loglip(1.3):", lip_n(C.loglip(1.3), 10.0))

# the truncated solutions agree until the path leaves [-e^N, e^N]
grid = GridSpec(1.0, 16, 8.0, 64)
kernel = build_solver_kernel(params, grid, tail_tol=1.0, nyquist_tol=1.0)
study = verify.convergence_study(1.0, C.zero(), C.loglip(1.3), grid, kernel, [0.5, 1.0, 1.5, 2.0, 2.5], 2.0, 3, 60)
print("d(N, N') =", study.d)
print("first vanishing level:", study.first_vanishing, "monotone:", study.monotone)

probe = verify.uniqueness_probe(1.0, C.zero(), C.loglip(1.3), grid, kernel, 5, 4, N=6.0, N_prime=11.0)
print("reordered history sup difference:", probe.sup_diff)
