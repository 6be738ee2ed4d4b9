"""Special functions: Gamma, the one-parameter Mittag-Leffler function and the
kernel constant ``C*``.

The Mittag-Leffler function

.. math::

    E_\\beta(z) = \\sum_{\\ell=0}^\\infty \\frac{z^\\ell}{\\Gamma(1 + \\beta\\ell)}

is evaluated in three regimes:

* power series for ``z >= 0`` and for ``-regime_switch_z <= z < 0``;
* the asymptotic expansion ``E_b(-s) ~ sum_m (-1)^(m+1) s^-m / Gamma(1 - b m)``
  wherever its optimally truncated remainder is below machine precision;
* otherwise the finite-interval integral

  .. math::

      E_\\beta(-s) = \\frac{1}{\\pi\\beta} \\int_0^{\\beta\\pi}
          \\exp\\left[-\\left(\\frac{s \\sin\\psi}{\\sin(\\beta\\pi - \\psi)}\\right)^{1/\\beta}\\right]
          d\\psi,

  which follows from the spectral (complete monotonicity) representation of
  ``E_b(-t^b)`` and is integrated with tanh-sinh quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln, rgamma

from fracspde.errors import QuadratureError, SeriesConvergenceError

__all__ = [
    "MLEvalConfig",
    "cstar",
    "gamma_fn",
    "mittag_leffler",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class MLEvalConfig:
    """Evaluation policy for :func:`mittag_leffler`.

    Parameters
    ----------
    series_tol:
        Relative tolerance at which the power series is stopped.
    series_max_terms:
        Cap on the number of series terms for ``beta >= 0.02``; below that
        the cap grows like ``1 / beta``.
    regime_switch_z:
        Negative arguments with ``|z|`` above this value leave the series
        (cancellation grows like ``exp(|z|^(1/beta))``).
    asymptotic_terms:
        Number of terms considered for the optimally truncated asymptotic
        expansion.
    """

    series_tol: float = 1e-16
    series_max_terms: int = 2000
    regime_switch_z: float = 1.0
    asymptotic_terms: int = 60

    def __post_init__(self):
        if not 0 < self.series_tol <= 1e-6:
            raise ValueError(f"series_tol must lie in (0, 1e-6], got {self.series_tol}")
        if self.series_max_terms < 50:
            raise ValueError("series_max_terms must be at least 50")
        if not self.regime_switch_z > 0:
            raise ValueError("regime_switch_z must be positive")
        if self.asymptotic_terms < 2:
            raise ValueError("asymptotic_terms must be at least 2")


DEFAULT_ML_CONFIG = MLEvalConfig()


def gamma_fn(x: float) -> float:
    """Euler Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"gamma_fn is only defined here for x > 0, got {x}")
    return math.gamma(x)


# {{{ Mittag-Leffler regimes


def _series_cap(beta: float, cfg: MLEvalConfig) -> int:
    # terms only start to shrink once beta * ell is large, so small beta needs more
    return max(cfg.series_max_terms, math.ceil(cfg.series_max_terms * 0.02 / beta))


def _ml_series(beta: float, z: np.ndarray, cfg: MLEvalConfig, block: int = 256) -> np.ndarray:
    total = np.ones_like(z)
    if z.size == 0:
        return total
    logabs = np.log(np.abs(z), where=z != 0, out=np.full_like(z, -np.inf))
    sign = np.sign(z)
    active = np.flatnonzero(z != 0)
    prev = np.ones_like(z)
    cap = _series_cap(beta, cfg)
    for start in range(1, cap + 1, block):
        if active.size == 0:
            return total
        ell = np.arange(start, min(start + block, cap + 1), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            mag = np.exp(np.outer(logabs[active], ell) - gammaln(1.0 + beta * ell))
        signs = np.where(sign[active, None] < 0, np.where(ell % 2 == 1, -1.0, 1.0), 1.0)
        total[active] += np.sum(mag * signs, axis=1)
        # terms eventually decrease monotonically once Gamma dominates
        last = mag[:, -1]
        before = mag[:, -2] if ell.size > 1 else prev[active]
        small = (last <= cfg.series_tol * np.abs(total[active])) & (last <= before)
        prev[active] = last
        active = active[~small]
    if active.size == 0:
        return total
    raise SeriesConvergenceError(
        f"Mittag-Leffler series did not converge in {cap} terms for beta={beta}, z={z[active][:4]}",
        partial_sum=total[active],
        last_term=prev[active],
        nterms=cap,
    )


def _ml_asymptotic(beta: float, s: np.ndarray, nterms: int) -> tuple[np.ndarray, np.ndarray]:
    """Optimally truncated expansion of ``E_b(-s)`` and its error estimate."""
    m = np.arange(1, nterms + 1, dtype=float)
    coef = (-1.0) ** (m + 1) * rgamma(1.0 - beta * m)
    with np.errstate(under="ignore", over="ignore", divide="ignore"):
        powers = np.exp(-np.outer(np.log(s), m))
    terms = powers * coef
    mags = np.abs(terms)
    mags_nz = np.where(coef != 0, mags, np.inf)
    stop = np.argmin(mags_nz, axis=1)
    keep = np.arange(nterms)[None, :] < stop[:, None]
    value = np.where(keep, terms, 0.0).sum(axis=1)
    err = mags_nz[np.arange(s.size), stop]
    return value, err


# exp(-exp(x)) rounds to 1 below _LOG_ONE and underflows to 0 above _LOG_ZERO
_LOG_ONE = -40.0
_LOG_ZERO = 6.7


@lru_cache(maxsize=32)
def _tanh_sinh_nodes(beta: float) -> tuple[np.ndarray, np.ndarray]:
    # finer steps for small beta, where the integrand turns into a steep step
    h = min(1.0 / 64.0, beta / 25.0)
    t = np.arange(-4.5, 4.5 + 0.5 * h, h)
    u = 0.5 * np.pi * np.sinh(t)
    s = 0.5 * (1.0 + np.tanh(u))
    w = 0.25 * np.pi * np.cosh(t) / np.cosh(u) ** 2 * h
    keep = (s > 0) & (s < 1) & (w > 1e-300)
    theta = beta * np.pi
    psi = theta * s[keep]
    ratio = np.sin(psi) / np.sin(theta - psi)
    return ratio, theta * w[keep] / (np.pi * beta)


def _ml_integral(beta: float, s: np.ndarray, max_block: int = 2**22) -> np.ndarray:
    ratio, weights = _tanh_sinh_nodes(beta)
    # ratio is increasing, so exp(-(s ratio)^(1/beta)) is 1 below a band and 0 above it
    logr = np.log(ratio)
    cumw = np.concatenate([[0.0], np.cumsum(weights)])
    logs = np.log(s)
    lo = np.searchsorted(logr, beta * _LOG_ONE - logs)
    hi = np.searchsorted(logr, beta * _LOG_ZERO - logs, side="right")
    out = cumw[lo]
    width = int(np.max(hi - lo, initial=0))
    if width == 0:
        return out
    chunk = max(1, max_block // width)
    offs = np.arange(width)
    for i in range(0, s.size, chunk):
        idx = lo[i:i + chunk, None] + offs
        inside = idx < hi[i:i + chunk, None]
        idx = np.minimum(idx, logr.size - 1)
        with np.errstate(over="ignore", under="ignore"):
            vals = np.exp(-np.exp((logs[i:i + chunk, None] + logr[idx]) / beta))
        out[i:i + chunk] += np.sum(np.where(inside, vals * weights[idx], 0.0), axis=1)
    return out


# }}}


def mittag_leffler(beta: float, z, config: MLEvalConfig | None = None):
    """Evaluate the one-parameter Mittag-Leffler function ``E_beta(z)``.

    Parameters
    ----------
    beta:
        Order in ``(0, 1]``.
    z:
        Real scalar or array.
    config:
        Evaluation policy; see :class:`MLEvalConfig`.

    Returns
    -------
    float or numpy.ndarray
        Same shape as ``z``.
    """
    beta = float(beta)
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    cfg = DEFAULT_ML_CONFIG if config is None else config

    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(z, dtype=float)).ravel()
    if np.isnan(zz).any():
        raise ValueError("mittag_leffler received NaN")

    if beta == 1.0:
        out = np.exp(zz)
    else:
        out = np.empty_like(zz)
        use_series = zz >= -cfg.regime_switch_z
        if use_series.any():
            out[use_series] = _ml_series(beta, zz[use_series], cfg)

        rest = np.flatnonzero(~use_series)
        if rest.size:
            s = -zz[rest]
            val, err = _ml_asymptotic(beta, s, cfg.asymptotic_terms)
            good = err <= 4 * _EPS * np.abs(val)
            out[rest[good]] = val[good]
            if (~good).any():
                out[rest[~good]] = _ml_integral(beta, s[~good])

    out = out.reshape(np.shape(z))
    return float(out) if scalar else out


def _check_model_orders(alpha: float, beta: float, d: int) -> None:
    if d != 1:
        raise ValueError("only spatial dimension d = 1 is supported")
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if not beta < alpha:
        raise ValueError(f"need beta < alpha so that t^(-beta/alpha) is integrable (alpha={alpha}, beta={beta})")
    if not alpha > 0.5:
        raise ValueError(f"need alpha > 1/2 for a square-integrable kernel in d = 1, got {alpha}")


def cstar(alpha: float, beta: float, d: int = 1, tol: float = 1e-10, full_output: bool = False):
    """Constant ``C*`` in ``||G_r||_2^2 = C* r^(-beta/alpha)``.

    For ``d = 1`` the defining integral reduces, after ``z = w^alpha``, to

    .. math::

        C^\\star = \\frac{1}{\\pi} \\int_0^\\infty E_\\beta(-w^\\alpha)^2 \\, dw,

    i.e. Plancherel applied to the kernel symbol at ``t = 1``. The integral is
    split at ``w = 1`` and at ``W`` with ``W^alpha = 60``, and each finite piece
    goes to vectorised tanh-sinh quadrature; beyond ``W`` the asymptotic
    expansion of ``E_beta`` is squared and integrated term by term.

    Parameters
    ----------
    alpha, beta:
        Model orders with ``1/2 < alpha <= 2`` and ``beta < alpha``.
    tol:
        Absolute and relative quadrature tolerance.
    full_output:
        If true, return ``(value, abserr)``.
    """
    alpha, beta = float(alpha), float(beta)
    _check_model_orders(alpha, beta, d)

    def integrand(w):
        return mittag_leffler(beta, -(w**alpha)) ** 2

    s_tail = 60.0
    w_tail = s_tail ** (1.0 / alpha)
    total, err = 0.0, 0.0
    for a, b in [(0.0, 1.0), (1.0, w_tail)]:
        res = integrate.tanhsinh(integrand, a, b, atol=tol, rtol=tol)
        if not res.success:
            raise QuadratureError(f"C* quadrature did not converge on [{a}, {b}] (alpha={alpha}, beta={beta})")
        total += float(res.integral)
        err += float(res.error)

    if beta < 1.0:
        m = np.arange(1, 13, dtype=float)
        coef = (-1.0) ** (m + 1) * rgamma(1.0 - beta * m)
        p = m[:, None] + m[None, :]
        tail = np.sum(np.outer(coef, coef) * w_tail ** (1.0 - alpha * p) / (alpha * p - 1.0))
        total += float(tail)
        # first omitted term of the expansion bounds the tail error
        err += abs(coef[0] * coef[-1]) * w_tail ** (1.0 - alpha * 14) / (alpha * 14 - 1.0)

    if not np.isfinite(total) or total <= 0:
        raise QuadratureError(f"C* quadrature failed for alpha={alpha}, beta={beta}")

    value, abserr = total / math.pi, err / math.pi
    return (value, abserr) if full_output else value
