"""Space-time fractional heat kernel on a periodic grid.

The kernel ``G_t`` has Fourier symbol ``E_beta(-t^beta |xi|^alpha)``. Tables are
built by discrete Fourier inversion of the symbol on the dual grid of a
uniform periodic spatial grid ``x_j = -L + j dx``, ``j = 0..nx-1``. The result
is the periodised kernel ``sum_m G_t(x + 2 m L)``, which is exactly the object a
periodic convolution needs; its discrete mass is ``symbol(0) = 1`` up to
rounding.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from fracspde.errors import AliasingWarning, CertificateError, GridError
from fracspde.specfun import MLEvalConfig, _check_model_orders, cstar, mittag_leffler

__all__ = [
    "KernelCertificate",
    "KernelTable",
    "ModelParams",
    "build_kernel_table",
    "convolve",
    "dump_kernel_csv",
    "kernel_bounds_certificate",
    "kernel_l2_norm",
    "kernel_symbol",
    "periodic_grid",
]


@dataclass(frozen=True)
class ModelParams:
    """Orders of the time derivative (``beta``) and fractional Laplacian (``alpha``).

    Requires ``d = 1 < min(2, 1/beta) alpha``, i.e. ``alpha > 1/2`` and
    ``beta < alpha``. ``beta = 1`` is accepted so the classical heat equation
    (``alpha = 2, beta = 1``) can serve as a regression case.
    """

    alpha: float
    beta: float
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        _check_model_orders(self.alpha, self.beta, self.d)

    @property
    def ratio(self) -> float:
        return self.beta / self.alpha

    def cstar(self) -> float:
        return cstar(self.alpha, self.beta, self.d)


def periodic_grid(half_width: float, nx: int) -> np.ndarray:
    """Uniform periodic grid on ``[-half_width, half_width)`` with ``x[nx//2] = 0``."""
    if nx < 2 or nx % 2:
        raise GridError(f"nx must be even and >= 2, got {nx}")
    dx = 2.0 * half_width / nx
    return -half_width + dx * np.arange(nx)


def kernel_symbol(params: ModelParams, t, xi, ml_config: MLEvalConfig | None = None):
    """Fourier symbol ``E_beta(-t^beta |xi|^alpha)`` of ``G_t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("kernel_symbol needs t > 0")
    arg = -(t**params.beta) * np.abs(np.asarray(xi, dtype=float)) ** params.alpha
    return mittag_leffler(params.beta, arg, ml_config)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Immutable table of ``G_{t_n}(x_j)`` and the matching symbol values.

    ``values[n, j]`` is the periodised kernel at ``times[n]`` and ``xs[j]``;
    ``fourier_cache[n, k]`` is the symbol at wavenumber ``wavenumbers[k]``
    (non-negative half of the dual grid, as used by ``numpy.fft.rfft``).
    """

    params: ModelParams
    times: np.ndarray
    xs: np.ndarray
    dx: float
    values: np.ndarray
    fourier_cache: np.ndarray
    wavenumbers: np.ndarray
    tail_mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("times", "xs", "values", "fourier_cache", "wavenumbers", "tail_mass"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))

    @property
    def nx(self) -> int:
        return self.xs.size

    def time_index(self, t: float) -> int:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=1e-12, atol=0.0))
        if idx.size == 0:
            raise ValueError(f"t = {t} is not one of the table times")
        return int(idx[0])


def _check_grid(xs: np.ndarray) -> float:
    if xs.ndim != 1 or xs.size < 4:
        raise GridError("spatial grid needs at least 4 points")
    if xs.size % 2:
        raise GridError("spatial grid needs an even number of points")
    steps = np.diff(xs)
    dx = float(steps.mean())
    if not np.allclose(steps, dx, rtol=1e-9, atol=0.0) or dx <= 0:
        raise GridError("spatial grid must be uniform and increasing")
    half = xs.size // 2
    if abs(xs[half]) > 1e-9 * dx or abs(xs[0] + xs.size * dx / 2) > 1e-9 * dx * xs.size:
        raise GridError("spatial grid must be the periodic grid [-L, L) with x[nx//2] = 0")
    return dx


def _tail_mass_estimate(params: ModelParams, times, xs, values) -> np.ndarray:
    # calibrate c in c * t^beta / |x|^(1+alpha) on the outer quarter of the
    # grid, then integrate the envelope beyond the box on both sides
    L = -xs[0]
    outer = np.abs(xs) >= 0.75 * L
    ax = np.abs(xs[outer])
    out = np.empty(len(times))
    for n, t in enumerate(times):
        env = t**params.beta / ax ** (1.0 + params.alpha)
        c = max(float(np.max(values[n, outer] / env)), 0.0)
        out[n] = 2.0 * c * t**params.beta / (params.alpha * L**params.alpha)
    return out


def build_kernel_table(
    params: ModelParams,
    times,
    xs,
    tail_tol: float = 1e-6,
    nyquist_tol: float = 1e-8,
    ml_config: MLEvalConfig | None = None,
) -> KernelTable:
    """Tabulate ``G_t`` on a periodic grid by inverting its Fourier symbol.

    Parameters
    ----------
    params:
        Model orders.
    times:
        Strictly increasing positive times.
    xs:
        Periodic grid as returned by :func:`periodic_grid`.
    tail_tol:
        Maximum kernel mass allowed outside ``[-L, L)``, estimated from the
        polynomial envelope ``t^beta / |x|^(1+alpha)`` calibrated on the outer
        quarter of the grid. Exceeding it raises :class:`GridError`.
    nyquist_tol:
        An :class:`AliasingWarning` is emitted when the symbol at the Nyquist
        wavenumber exceeds this value.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    xs = np.asarray(xs, dtype=float)
    if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly positive and increasing")
    dx = _check_grid(xs)
    nx = xs.size

    xi = 2.0 * math.pi * np.fft.rfftfreq(nx, d=dx)
    args = -np.outer(times**params.beta, xi**params.alpha)
    symbol = mittag_leffler(params.beta, args, ml_config)

    raw = np.fft.irfft(symbol, n=nx, axis=-1) / dx
    values = np.fft.fftshift(raw, axes=-1)
    # exact x -> -x symmetry about the centre index (index 0 pairs with itself)
    mirrored = np.roll(values[:, ::-1], 1, axis=-1)
    values = 0.5 * (values + mirrored)

    nyq = float(np.max(symbol[:, -1]))
    if nyq > nyquist_tol:
        warnings.warn(
            f"kernel symbol is {nyq:.3e} at the Nyquist wavenumber (tolerance "
            f"{nyquist_tol:.1e}); refine dx to reduce aliasing",
            AliasingWarning,
            stacklevel=2,
        )

    tail = _tail_mass_estimate(params, times, xs, values)
    if np.max(tail) > tail_tol:
        n = int(np.argmax(tail))
        raise GridError(
            f"grid too narrow: estimated kernel mass outside [-{-xs[0]:g}, {-xs[0]:g}) "
            f"is {tail[n]:.3e} at t = {times[n]:g} (tolerance {tail_tol:.1e})"
        )

    return KernelTable(
        params=params,
        times=times,
        xs=xs,
        dx=dx,
        values=values,
        fourier_cache=symbol,
        wavenumbers=xi,
        tail_mass=tail,
    )


def kernel_l2_norm(table: KernelTable, t: float) -> float:
    """Discrete ``sum_j G_t(x_j)^2 dx``; compare with ``C* t^(-beta/alpha)``."""
    row = table.values[table.time_index(t)]
    return float(np.sum(row * row) * table.dx)


class _CertificatePair(NamedTuple):
    c1_hat: float
    c2_hat: float


class KernelCertificate(_CertificatePair):
    """Tightest constants in ``c1 env <= G <= c2 env`` over the table.

    Unpacks as ``(c1_hat, c2_hat)``. ``lower_asserted`` is false at
    ``alpha = 2``, where Gaussian-type decay rules out a polynomial lower bound
    on wide grids; ``c1_hat`` is then reported but not claimed.
    """

    def __new__(cls, c1_hat: float, c2_hat: float, lower_asserted: bool = True):
        self = super().__new__(cls, c1_hat, c2_hat)
        self.lower_asserted = bool(lower_asserted)
        return self

    def __repr__(self) -> str:
        return (
            f"KernelCertificate(c1_hat={self.c1_hat!r}, c2_hat={self.c2_hat!r}, "
            f"lower_asserted={self.lower_asserted})"
        )


def kernel_bounds_certificate(
    table: KernelTable, floor: float = 1e-10, max_c2: float = 1e3
) -> KernelCertificate:
    """Fit the two-sided envelope ``t^(-beta/alpha) ^ t^beta / |x|^(1+alpha)``.

    Only grid points with ``G > floor`` take part. Raises
    :class:`CertificateError` if fewer than two points qualify or the upper
    constant exceeds ``max_c2`` (a symptom of inversion error).
    """
    p = table.params
    t = table.times[:, None]
    ax = np.abs(table.xs)[None, :]
    with np.errstate(divide="ignore"):
        far = np.where(ax > 0, t**p.beta / ax ** (1.0 + p.alpha), np.inf)
    env = np.minimum(t ** (-p.ratio), far)
    mask = table.values > floor
    if np.count_nonzero(mask) < 2:
        raise CertificateError("certificate undefined: fewer than two grid points above the floor")
    ratio = table.values[mask] / env[mask]
    c1, c2 = float(ratio.min()), float(ratio.max())
    if not np.isfinite(c2) or c2 > max_c2:
        raise CertificateError(f"upper envelope violated: c2_hat = {c2:.3e} exceeds {max_c2:g}")
    return KernelCertificate(c1, c2, lower_asserted=p.alpha < 2.0)


def convolve(table: KernelTable, t_index: int, field: np.ndarray) -> np.ndarray:
    """Periodic ``sum_j G_t(x - y_j) f(y_j) dx`` via the cached symbol.

    ``field`` may carry leading batch dimensions; the last axis is space.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[-1] != table.nx:
        raise ValueError(f"field has {field.shape[-1]} points, table has {table.nx}")
    spec = np.fft.rfft(field, axis=-1) * table.fourier_cache[t_index]
    return np.fft.irfft(spec, n=table.nx, axis=-1)


def dump_kernel_csv(table: KernelTable, path) -> None:
    """Write the table as long-format CSV with columns ``t, x, G``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "G"])
        for t, row in zip(table.times, table.values):
            for x, g in zip(table.xs, row):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(g))])
