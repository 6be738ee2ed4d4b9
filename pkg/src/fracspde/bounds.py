"""Explicit constants and envelopes for moments, tails and truncation convergence.

Notation: ``r = beta/alpha``, ``Gr = Gamma(1 - r)``, ``C*`` the kernel constant
of :func:`fracspde.specfun.cstar`, and::

    C0  = 4 (||u0||_inf + 1)
    C#  = 4 sqrt(C* Gr)
    Cabg = ((1-r) / (2 gamma))^((1-r)/2) exp(-(1-r)/2)
    Cst = max(2, 4 Cabg sqrt(C*) / sqrt(1-r))

The envelopes are astronomically large or small at ordinary parameter values,
so every bound has a ``log_`` twin; comparisons should be made in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from fracspde.errors import BoundNotAsserted
from fracspde.kernel import ModelParams
from fracspde.specfun import gamma_fn

__all__ = [
    "ConvergenceThreshold",
    "Lemma25Verdict",
    "ModelConstants",
    "a0_constant",
    "contraction_factor",
    "convergence_envelope_bounded",
    "convergence_envelope_linear",
    "convergence_threshold",
    "gamma_choice",
    "k_min_linear",
    "lemma25_transfer",
    "log_moment_bound_bounded_sigma",
    "log_moment_bound_linear",
    "log_tail_bound_bounded_sigma",
    "log_tail_bound_linear",
    "moment_bound_bounded_sigma",
    "moment_bound_linear",
    "prop4_gamma",
    "tail_bound_bounded_sigma",
    "tail_bound_linear",
    "tail_threshold_bounded_sigma",
    "tail_threshold_linear",
]

_REL = 1e-12  # slack on validity thresholds


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ModelConstants:
    """Inputs and derived constants of the moment and tail envelopes.

    Parameters
    ----------
    params:
        Model orders.
    L_b, L_sigma:
        Linear-growth constants of the drift and diffusion.
    u0_sup:
        ``||u0||_inf``.
    sigma_sup:
        ``||sigma||_inf`` when sigma is bounded, else ``None``.
    L_Nb, L_Nsigma:
        Truncated Lipschitz constants at the level of interest (optional).
    gamma:
        Rate used in the bounded-sigma moment bound. ``None`` selects
        ``2 L_b`` when ``L_b > 0`` and 1 otherwise, since ``gamma = 0`` makes
        ``Cabg`` infinite.
    c:
        Order parameter of the convergence construction.
    K0:
        Prefactor of the bounded-sigma convergence estimate; ``None`` selects
        ``sigma_sup``, the bound on ``|sigma_{N+1} - sigma_N| / 2``.
    """

    params: ModelParams
    L_b: float
    L_sigma: float
    u0_sup: float
    sigma_sup: float | None = None
    L_Nb: float | None = None
    L_Nsigma: float | None = None
    gamma: float | None = None
    c: float = 4.0
    K0: float | None = None
    Cstar: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        for name in ("L_b", "L_sigma", "u0_sup"):
            v = float(getattr(self, name))
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
            object.__setattr__(self, name, v)
        if self.sigma_sup is not None and not self.sigma_sup >= 0:
            raise ValueError("sigma_sup must be non-negative")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.c >= 1:
            raise ValueError(f"c must be at least 1, got {self.c}")
        if math.isnan(self.Cstar):
            object.__setattr__(self, "Cstar", self.params.cstar())

    # derived

    @property
    def r(self) -> float:
        return self.params.ratio

    @property
    def gamma_r(self) -> float:
        return gamma_fn(1.0 - self.r)

    @property
    def C0(self) -> float:
        return 4.0 * (self.u0_sup + 1.0)

    @property
    def Chash(self) -> float:
        return 4.0 * math.sqrt(self.Cstar * self.gamma_r)

    @property
    def gamma_bounded(self) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        return 2.0 * self.L_b if self.L_b > 0 else 1.0

    @property
    def C_abg(self) -> float:
        a = (1.0 - self.r) / 2.0
        return (a / self.gamma_bounded) ** a * math.exp(-a)

    @property
    def Cstar_big(self) -> float:
        return max(2.0, 4.0 * self.C_abg * math.sqrt(self.Cstar) / math.sqrt(1.0 - self.r))

    @property
    def K0_value(self) -> float:
        if self.K0 is not None:
            return float(self.K0)
        if self.sigma_sup is None:
            raise BoundNotAsserted("K0 needs a bounded sigma or an explicit value")
        return float(self.sigma_sup)

    def with_levels(self, L_Nb: float, L_Nsigma: float) -> "ModelConstants":
        return replace(self, L_Nb=L_Nb, L_Nsigma=L_Nsigma)

    @classmethod
    def from_coefficients(cls, params, b, sigma, u0_sup: float, N: float | None = None, **kw) -> "ModelConstants":
        """Measure ``L_b``, ``L_sigma`` (and ``L_{N,.}`` if ``N`` is given) numerically."""
        from fracspde.coefficients import linear_growth_const, lip_n

        extra = {}
        if N is not None:
            extra = {"L_Nb": lip_n(b, math.exp(N)), "L_Nsigma": lip_n(sigma, math.exp(N))}
        return cls(
            params=params,
            L_b=linear_growth_const(b),
            L_sigma=linear_growth_const(sigma),
            u0_sup=u0_sup,
            sigma_sup=sigma.sup_norm,
            **extra,
            **kw,
        )

    def as_table(self) -> dict[str, float]:
        """Scalar summary for reporting."""
        out = {
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "r": self.r,
            "Cstar": self.Cstar,
            "Gamma(1-r)": self.gamma_r,
            "C0": self.C0,
            "Chash": self.Chash,
            "gamma_bounded": self.gamma_bounded,
            "C_abg": self.C_abg,
            "Cstar_big": self.Cstar_big,
            "L_b": self.L_b,
            "L_sigma": self.L_sigma,
            "u0_sup": self.u0_sup,
            "c": self.c,
        }
        if self.sigma_sup is not None:
            out["sigma_sup"] = self.sigma_sup
        if self.L_sigma > 0:
            out["A0"] = a0_constant(self)
        return out


# {{{ moments


def k_min_linear(consts: ModelConstants) -> float:
    """Smallest moment order ``max(2, L_b^(1-r) / L_sigma^2)`` of the linear-sigma bound."""
    if consts.L_sigma <= 0:
        raise BoundNotAsserted("the linear-sigma envelope needs L_sigma > 0")
    return max(2.0, consts.L_b ** (1.0 - consts.r) / consts.L_sigma**2)


def log_moment_bound_linear(consts: ModelConstants, k: float, t: float) -> float:
    """``log`` of :func:`moment_bound_linear`."""
    kmin = k_min_linear(consts)
    if k < kmin * (1 - _REL):
        raise BoundNotAsserted(f"moment order k = {k} below the admissible minimum {kmin:.6g}")
    if t < 0:
        raise ValueError("t must be non-negative")
    q = 1.0 / (1.0 - consts.r)
    return k * math.log(consts.C0) + 4.0 * (consts.Chash * consts.L_sigma) ** (2 * q) * k ** (1 + q) * t


def moment_bound_linear(consts: ModelConstants, k: float, t: float) -> float:
    """``C0^k exp(4 (C# L_sigma)^(2/(1-r)) k^(1+1/(1-r)) t)``, an upper bound on ``E|u_N(t,x)|^k``.

    Requires ``L_sigma > 0`` and ``k >= max(2, L_b^(1-r) L_sigma^-2)``;
    :class:`BoundNotAsserted` otherwise. Returns ``inf`` beyond the float range.
    """
    return _exp(log_moment_bound_linear(consts, k, t))


def _bounded_base(consts: ModelConstants) -> float:
    if consts.sigma_sup is None:
        raise BoundNotAsserted("the bounded-sigma envelope needs sigma_sup")
    return consts.u0_sup + consts.sigma_sup + 1.0


def log_moment_bound_bounded_sigma(consts: ModelConstants, k: float, t: float) -> float:
    base = _bounded_base(consts)
    if k < 2 * (1 - _REL):
        raise BoundNotAsserted(f"moment order k = {k} below 2")
    if t < 0:
        raise ValueError("t must be non-negative")
    return k * (math.log(consts.Cstar_big) + consts.gamma_bounded * t + math.log(base) + 0.5 * math.log(k))


def moment_bound_bounded_sigma(consts: ModelConstants, k: float, t: float) -> float:
    """``Cst^k e^(k gamma t) (u0 + sigma_sup + 1)^k k^(k/2)``.

    With the default ``gamma = 2 L_b`` the time factor is ``e^(2 k L_b t)``.
    """
    return _exp(log_moment_bound_bounded_sigma(consts, k, t))


# }}}

# {{{ tails


def tail_threshold_linear(consts: ModelConstants, t: float) -> float:
    """``4 log C0  v  8 C#^(2/(1-r)) t max(2^(1/(1-r)) L_sigma^(2/(1-r)), L_b)``."""
    q = 1.0 / (1.0 - consts.r)
    inner = max(2.0**q * consts.L_sigma ** (2 * q), consts.L_b)
    return max(4.0 * math.log(consts.C0), 8.0 * consts.Chash ** (2 * q) * t * inner)


def log_tail_bound_linear(consts: ModelConstants, N: float, t: float) -> float:
    if consts.L_sigma <= 0:
        raise BoundNotAsserted("the linear-sigma tail bound needs L_sigma > 0")
    if not t > 0:
        raise ValueError("t must be positive")
    thr = tail_threshold_linear(consts, t)
    if N < thr * (1 - _REL):
        raise BoundNotAsserted(f"N = {N} below the validity threshold {thr:.6g}")
    r = consts.r
    return -(N ** (2.0 - r)) / ((consts.Chash * consts.L_sigma) ** 2 * (8.0 * t) ** (1.0 - r))


def tail_bound_linear(consts: ModelConstants, N: float, t: float) -> float:
    """``exp(-N^(2-r) / ((C# L_sigma)^2 (8t)^(1-r)))``, bounding ``P(|u_{N+1}(t,x)| >= e^N)``."""
    return math.exp(log_tail_bound_linear(consts, N, t))


def tail_threshold_bounded_sigma(consts: ModelConstants, t: float) -> float:
    """``1/2 + log Cst + gamma t + log(u0 + sigma_sup + 1)``; ``gamma t = 2 L_b t`` by default."""
    base = _bounded_base(consts)
    return 0.5 + math.log(consts.Cstar_big) + consts.gamma_bounded * t + math.log(base)


def log_tail_bound_bounded_sigma(consts: ModelConstants, N: float, t: float) -> float:
    base = _bounded_base(consts)
    if t < 0:
        raise ValueError("t must be non-negative")
    thr = tail_threshold_bounded_sigma(consts, t)
    if N < thr * (1 - _REL):
        raise BoundNotAsserted(f"N = {N} below the validity threshold {thr:.6g}")
    expo = 2.0 * N - 2.0 * consts.gamma_bounded * t - 1.0 - 2.0 * math.log(consts.Cstar_big * base)
    return -_exp(expo)


def tail_bound_bounded_sigma(consts: ModelConstants, N: float, t: float) -> float:
    """``exp(-e^(2N - 2 gamma t) / (e Cst^2 (u0 + sigma_sup + 1)^2))``.

    With ``gamma = 2 L_b`` the exponent is ``2N - 4 L_b t``.
    """
    return math.exp(log_tail_bound_bounded_sigma(consts, N, t))


# }}}

# {{{ gamma choices and thresholds


def prop4_gamma(consts: ModelConstants, k: float) -> float:
    """``gamma = 4 (4 sqrt(C* Gr k) L_sigma)^(2/(1-r))`` from the linear-sigma moment proof."""
    return 4.0 * (4.0 * math.sqrt(consts.Cstar * consts.gamma_r * k) * consts.L_sigma) ** (2.0 / (1.0 - consts.r))


def contraction_factor(consts: ModelConstants, k: float, gamma: float | None = None) -> float:
    """``L_b / gamma + 4 sqrt(C* Gr k) L_sigma / (2 gamma)^((1-r)/2)``.

    ``gamma`` defaults to :func:`prop4_gamma`, for which the second term is
    exactly ``8^(-(1-r)/2)``.
    """
    if gamma is None:
        gamma = prop4_gamma(consts, k)
    r = consts.r
    return consts.L_b / gamma + 4.0 * math.sqrt(consts.Cstar * consts.gamma_r * k) * consts.L_sigma / (
        2.0 * gamma
    ) ** ((1.0 - r) / 2.0)


def a0_constant(consts: ModelConstants) -> float:
    """``A0 = max(4, C# L_sigma / sqrt(C* Gr), (C* Gr)^-2)``."""
    cg = consts.Cstar * consts.gamma_r
    return max(4.0, consts.Chash * consts.L_sigma / math.sqrt(cg), cg**-2)


def gamma_choice(consts: ModelConstants, c: float | None = None) -> float:
    """``gamma = 16 (C* Gr)^(1/(1-r)) A0^(2/(1-r)) c^(1/(1-r)) L_{N,sigma}^(2/(1-r))``."""
    c = consts.c if c is None else float(c)
    if c < 1:
        raise ValueError("c must be at least 1")
    if consts.L_Nsigma is None or consts.L_Nsigma <= 0:
        raise BoundNotAsserted("gamma choice needs L_Nsigma > 0")
    q = 1.0 / (1.0 - consts.r)
    cg = consts.Cstar * consts.gamma_r
    return 16.0 * cg**q * a0_constant(consts) ** (2 * q) * c**q * consts.L_Nsigma ** (2 * q)


class ConvergenceThreshold(NamedTuple):
    N_T: float
    c_T: float


def convergence_threshold(consts: ModelConstants, c: float | None = None, T: float = 1.0) -> ConvergenceThreshold:
    """Level thresholds ``N_T`` and ``c_T`` of the convergence construction.

    ``N_T = c^(1/(1-r)) (C# L_sigma)^(2/(2-r)) (C* Gr A0^2)^(1/((1-r)(2-r))) T / (1-r)^(1/(2-r))``
    and ``c_T`` equals :func:`tail_threshold_linear` at ``t = T``.
    """
    c = consts.c if c is None else float(c)
    if c < 1:
        raise ValueError("c must be at least 1")
    r = consts.r
    a0 = a0_constant(consts) if consts.L_sigma > 0 else 4.0
    cg = consts.Cstar * consts.gamma_r
    N_T = (
        c ** (1.0 / (1.0 - r))
        * (consts.Chash * consts.L_sigma) ** (2.0 / (2.0 - r))
        * (cg * a0**2) ** (1.0 / ((1.0 - r) * (2.0 - r)))
        * T
        / (1.0 - r) ** (1.0 / (2.0 - r))
    )
    return ConvergenceThreshold(N_T=N_T, c_T=tail_threshold_linear(consts, T))


def convergence_envelope_linear(consts: ModelConstants, N: float, T: float, c: float | None = None) -> float:
    """``log`` of the bound on ``sup_{t<=T} ||u_{N+1} - u_N||_c`` (unbounded sigma).

    This is the weighted-norm estimate of the construction moved back to the
    plain norm with the transfer lemma (the ``gamma`` terms cancel)::

        2 C0 [2 L_b / (4 (C# L_sigma)^(2q) c^q) + 4 sqrt(c C* / (1-r)) L_sigma T^((1-r)/2)]
             * exp(4 (C# L_sigma)^(2q) c^q T - N^(2-r) / (2 c (C# L_sigma)^2 (8T)^(1-r)))

    with ``q = 1/(1-r)``. Valid for ``N >= max(N0, N_T, c, c_T)``.
    """
    c = consts.c if c is None else float(c)
    r, q = consts.r, 1.0 / (1.0 - consts.r)
    if consts.L_sigma <= 0:
        raise BoundNotAsserted("needs L_sigma > 0")
    h = (consts.Chash * consts.L_sigma) ** (2 * q) * c**q
    pre = 2.0 * consts.C0 * (
        2.0 * consts.L_b / (4.0 * h) + 4.0 * math.sqrt(c * consts.Cstar / (1.0 - r)) * consts.L_sigma * T ** ((1.0 - r) / 2.0)
    )
    expo = 4.0 * h * T - N ** (2.0 - r) / (2.0 * c * (consts.Chash * consts.L_sigma) ** 2 * (8.0 * T) ** (1.0 - r))
    return math.log(pre) + expo


def convergence_envelope_bounded(consts: ModelConstants, N: float, T: float, c: float | None = None) -> float:
    """``log`` of the bounded-sigma weighted-norm estimate of ``u_{N+1} - u_N``::

        2 [sqrt(c) Cst L_b e^(2 L_b T) T B + 2 K0 sqrt(c C* / (1-r)) T^((1-r)/2)]
          * exp(-e^(2N - 4 L_b T) / (2 c e Cst^2 B^2)),   B = u0 + sigma_sup + 1.

    ``K0`` enters multiplicatively; see :attr:`ModelConstants.K0`.
    """
    c = consts.c if c is None else float(c)
    B = _bounded_base(consts)
    r = consts.r
    cs = consts.Cstar_big
    pre = 2.0 * (
        math.sqrt(c) * cs * consts.L_b * math.exp(2 * consts.L_b * T) * T * B
        + 2.0 * consts.K0_value * math.sqrt(c * consts.Cstar / (1.0 - r)) * T ** ((1.0 - r) / 2.0)
    )
    expo = -_exp(2 * N - 4 * consts.L_b * T) / (2.0 * c * math.e * cs**2 * B**2)
    return (math.log(pre) if pre > 0 else -math.inf) + expo


# }}}


class Lemma25Verdict(NamedTuple):
    """Grid check of the transfer lemma.

    ``hypothesis_violations`` and ``conclusion_violations`` list the grid
    horizons ``T`` where each inequality fails. ``consistent`` is true when the
    conclusion holds wherever the hypothesis holds.
    """

    times: np.ndarray
    hypothesis_violations: np.ndarray
    conclusion_violations: np.ndarray
    hypothesis_holds: bool
    conclusion_holds: bool
    consistent: bool


def lemma25_transfer(
    f_samples, g: Callable[[np.ndarray], np.ndarray], a: float, T0: float | None = None, rtol: float = 1e-12
) -> Lemma25Verdict:
    """Check ``sup_{t<=T} e^(-at) f(t) <= e^(-aT) g(T)`` and ``sup_{t<=T} f(t) <= g(T)`` on a grid.

    Parameters
    ----------
    f_samples:
        Pair ``(times, values)`` sampling ``f`` on ``(0, T0)``.
    g:
        Increasing function, vectorised.
    a:
        Exponential rate.
    T0:
        Optional horizon; samples at ``t >= T0`` are dropped.
    """
    ts, fs = (np.asarray(v, dtype=float) for v in f_samples)
    order = np.argsort(ts)
    ts, fs = ts[order], fs[order]
    if T0 is not None:
        keep = ts < T0
        ts, fs = ts[keep], fs[keep]
    if ts.size == 0 or np.any(ts <= 0):
        raise ValueError("f must be sampled on a non-empty subset of (0, T0)")
    gT = np.asarray(g(ts), dtype=float)
    lhs_h = np.maximum.accumulate(np.exp(-a * ts) * fs)
    rhs_h = np.exp(-a * ts) * gT
    lhs_c = np.maximum.accumulate(fs)
    hyp = lhs_h <= rhs_h * (1 + rtol) + 1e-300
    con = lhs_c <= gT * (1 + rtol) + 1e-300
    return Lemma25Verdict(
        times=ts,
        hypothesis_violations=ts[~hyp],
        conclusion_violations=ts[~con],
        hypothesis_holds=bool(hyp.all()),
        conclusion_holds=bool(con.all()),
        consistent=bool(np.all(con[hyp])),
    )
