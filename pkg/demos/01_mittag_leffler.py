"""Mittag-Leffler evaluation and the constant C★.

Run with ``python demos/01_mittag_leffler.py``.
"""
import math

import numpy as np

from fracspde.specfun import cstar, mittag_leffler

# E_1(z) is the exponential, E_{1/2}(-s) = exp(s^2) erfc(s)
z = np.linspace(-5.0, 1.0, 7)
print("E_1(z) - exp(z):", np.max(np.abs(mittag_leffler(1.0, z) - np.exp(z))))
s = np.array([0.5, 2.0, 8.0])
print("E_1/2(-s):", mittag_leffler(0.5, -s))
print("exp(s^2) erfc(s):", [math.exp(v * v) * math.erfc(v) for v in s])

# the evaluator switches between series, asymptotic expansion and an integral;
# values stay smooth across the switch
grid = -np.logspace(-2, 3, 11)
for beta in (0.1, 0.5, 0.9):
    print(f"beta={beta}:", np.array2string(mittag_leffler(beta, grid), precision=4))

# C★ = (1/pi) int_0^inf E_beta(-w^alpha)^2 dw; the Gaussian case is 1/(2 sqrt(2 pi))
print("C★(2, 1) =", cstar(2.0, 1.0), "closed form", 1 / (2 * math.sqrt(2 * math.pi)))
for alpha, beta in [(2.0, 0.5), (1.5, 0.75), (1.0, 0.4)]:
    print(f"C★({alpha}, {beta}) = {cstar(alpha, beta):.10f}")
