"""Drift and diffusion coefficients, their truncations and admissibility checks.

Built-in families (all time-independent)::

    linear        psi(x) = lam * x
    affine        psi(x) = lam * x + mu
    bounded_sine  psi(x) = A * sin(omega * x)
    loglip        psi(x) = x * sin(log(1 + x^2)^p),  p > 1

``loglip`` is locally but not globally Lipschitz: ``Lip_{e^N}`` grows like
``N^(p-1)``, which makes the admissibility condition checkable both ways.
User functions are wrapped with :meth:`CoefficientSpec.from_callable`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from fracspde.errors import GrowthDivergenceError
from fracspde.kernel import ModelParams

__all__ = [
    "AdmissibilityReport",
    "CoefficientSpec",
    "FAMILIES",
    "TruncatedCoefficient",
    "check_assumption3",
    "evaluate",
    "lip_n",
    "linear_growth_const",
    "truncate",
]

# parameter names per family
FAMILIES: dict[str, tuple[str, ...]] = {
    "linear": ("lam",),
    "affine": ("lam", "mu"),
    "bounded_sine": ("A", "omega"),
    "loglip": ("p",),
}

MAX_LEVEL = 700.0  # exp(709.8) overflows


def _loglip_inner(x, p):
    return np.log1p(x * x) ** p


@dataclass(frozen=True)
class CoefficientSpec:
    """Symbolic description of a coefficient ``psi(x)``.

    Parameters
    ----------
    family:
        One of :data:`FAMILIES` or ``"custom"``.
    params:
        Family parameters keyed by name.
    """

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    time_dependent: bool = False
    func: Callable | None = field(default=None, compare=False, repr=False)
    deriv: Callable | None = field(default=None, compare=False, repr=False)
    sup: float | None = field(default=None, compare=False, repr=False)
    growth_limit: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.time_dependent:
            raise ValueError("only time-independent coefficients are supported")
        params = {k: float(v) for k, v in dict(self.params).items()}
        object.__setattr__(self, "params", params)
        if self.family == "custom":
            if self.func is None:
                raise ValueError("custom coefficient needs a callable")
            return
        if self.family not in FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}; choose from {sorted(FAMILIES)}")
        expected = set(FAMILIES[self.family])
        if set(params) != expected:
            raise ValueError(f"family {self.family!r} takes parameters {sorted(expected)}, got {sorted(params)}")
        if not all(math.isfinite(v) for v in params.values()):
            raise ValueError("coefficient parameters must be finite")
        if self.family == "loglip" and not params["p"] > 1:
            raise ValueError(f"loglip needs p > 1, got {params['p']}")

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    # constructors

    @classmethod
    def linear(cls, lam: float) -> "CoefficientSpec":
        return cls("linear", {"lam": lam})

    @classmethod
    def affine(cls, lam: float, mu: float) -> "CoefficientSpec":
        return cls("affine", {"lam": lam, "mu": mu})

    @classmethod
    def bounded_sine(cls, A: float, omega: float) -> "CoefficientSpec":
        return cls("bounded_sine", {"A": A, "omega": omega})

    @classmethod
    def loglip(cls, p: float) -> "CoefficientSpec":
        return cls("loglip", {"p": p})

    @classmethod
    def zero(cls) -> "CoefficientSpec":
        return cls("linear", {"lam": 0.0})

    @classmethod
    def from_callable(
        cls,
        func: Callable,
        deriv: Callable | None = None,
        sup: float | None = None,
        growth_limit: float | None = None,
    ) -> "CoefficientSpec":
        """Wrap a vectorised ``func(x)``.

        ``sup`` marks the coefficient as bounded; ``growth_limit`` is the known
        value of ``limsup |psi(x)| / (1 + |x|)``, if any.
        """
        return cls("custom", {}, func=func, deriv=deriv, sup=sup, growth_limit=growth_limit)

    # evaluation

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        q = self.params
        fam = self.family
        if fam == "linear":
            return q["lam"] * x
        if fam == "affine":
            return q["lam"] * x + q["mu"]
        if fam == "bounded_sine":
            return q["A"] * np.sin(q["omega"] * x)
        if fam == "loglip":
            return x * np.sin(_loglip_inner(x, q["p"]))
        return np.asarray(self.func(x), dtype=float)

    def eval(self, t, x):
        """``psi(t, x)``; built-in families ignore ``t``."""
        return self(x)

    def derivative(self, x) -> np.ndarray | None:
        """Closed-form ``psi'(x)``, or ``None`` when unavailable."""
        x = np.asarray(x, dtype=float)
        q = self.params
        fam = self.family
        if fam in ("linear", "affine"):
            return np.full_like(x, q["lam"])
        if fam == "bounded_sine":
            return q["A"] * q["omega"] * np.cos(q["omega"] * x)
        if fam == "loglip":
            p = q["p"]
            lg = np.log1p(x * x)
            g = lg**p
            dg = p * lg ** (p - 1.0) * 2.0 * x / (1.0 + x * x)
            return np.sin(g) + x * np.cos(g) * dg
        if self.deriv is not None:
            return np.asarray(self.deriv(x), dtype=float)
        return None

    @property
    def sup_norm(self) -> float | None:
        """``||psi||_inf`` for bounded coefficients, else ``None``."""
        q = self.params
        if self.family == "bounded_sine":
            return abs(q["A"]) if q["omega"] != 0 else 0.0
        if self.family == "linear" and q["lam"] == 0:
            return 0.0
        if self.family == "affine" and q["lam"] == 0:
            return abs(q["mu"])
        if self.family == "custom":
            return self.sup
        return None

    @property
    def is_bounded(self) -> bool:
        return self.sup_norm is not None

    @property
    def is_zero(self) -> bool:
        return self.sup_norm == 0.0

    def analytic_growth_limit(self) -> float | None:
        q = self.params
        if self.family == "linear":
            return abs(q["lam"])
        if self.family == "affine":
            return max(abs(q["lam"]), abs(q["mu"]))
        if self.family == "loglip":
            return 1.0
        if self.family == "custom":
            return self.growth_limit
        return None

    def to_dict(self) -> dict:
        if self.family == "custom":
            raise ValueError("custom coefficients cannot be serialised")
        return {"family": self.family, "params": dict(self.params)}


def evaluate(spec: CoefficientSpec, t, x):
    """Evaluate ``psi(t, x)`` for a spec or a truncation."""
    return spec.eval(t, x)


@dataclass(frozen=True)
class TruncatedCoefficient:
    """``psi_N(x) = psi(clamp(x, -e^N, e^N))``, globally Lipschitz."""

    base: CoefficientSpec
    N: float

    def __post_init__(self):
        N = float(self.N)
        if not N > 0:
            raise ValueError(f"truncation level must be positive, got {N}")
        if N > MAX_LEVEL:
            raise OverflowError(f"truncation level N = {N} > {MAX_LEVEL}: e^N overflows and truncation is vacuous")
        object.__setattr__(self, "N", N)

    @property
    def cutoff(self) -> float:
        return math.exp(self.N)

    def __call__(self, x):
        c = self.cutoff
        return self.base(np.clip(np.asarray(x, dtype=float), -c, c))

    def eval(self, t, x):
        return self(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        d = self.base.derivative(x)
        if d is None:
            return None
        return np.where(np.abs(x) < self.cutoff, d, 0.0)

    def analytic_growth_limit(self) -> float | None:
        return 0.0

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.base(np.array([-self.cutoff, self.cutoff])))))


def truncate(spec: CoefficientSpec, N: float) -> TruncatedCoefficient:
    """Truncate ``spec`` at level ``N`` (cutoff ``e^N``)."""
    return TruncatedCoefficient(spec, N)


def _lip_grid(n: float, resolution: int) -> np.ndarray:
    pos = np.concatenate([np.linspace(0.0, n, resolution + 1), np.geomspace(n * 1e-6, n, resolution)])
    pos = np.unique(pos)
    # near-duplicate nodes from the two grids would turn rounding into slope
    keep = np.ones(pos.size, dtype=bool)
    keep[1:] = np.diff(pos) > 1e-6 * pos[1:]
    pos = pos[keep]
    return np.concatenate([-pos[:0:-1], pos])


def _refine_max(f, x: np.ndarray, vals: np.ndarray, top: int = 8) -> float:
    # polish the largest samples of f with a bounded scalar search
    best = float(np.max(vals))
    for i in np.argsort(vals)[-top:]:
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
        if hi <= lo:
            continue
        res = optimize.minimize_scalar(lambda v: -f(v), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, abs(x[i]))})
        best = max(best, float(-res.fun))
    return best


def lip_n(spec, n: float, resolution: int = 10_000) -> float:
    """Estimate ``Lip_n(psi) = sup |psi(x) - psi(y)| / |x - y|`` over ``[-n, n]``.

    With a closed-form derivative this is ``sup |psi'|``, sampled on a mixed
    linear/geometric grid and polished around the largest samples (secant
    slopes cannot exceed it and would only add rounding noise). Otherwise
    the steepest adjacent-sample slope is returned.
    """
    if not n > 0:
        raise ValueError("n must be positive")
    if resolution < 1000:
        raise ValueError("resolution must be at least 1000")
    x = _lip_grid(float(n), int(resolution))
    d = spec.derivative(x)
    if d is None:
        y = spec(x)
        return float(np.max(np.abs(np.diff(y)) / np.diff(x)))
    return _refine_max(lambda v: float(np.abs(spec.derivative(np.asarray(v)))), x, np.abs(d))


def linear_growth_const(spec, scan_limit: float = 1e6, points_per_decade: int = 2000) -> float:
    """Estimate ``L_psi = sup_x |psi(x)| / (1 + |x|)``.

    Scans a log-spaced grid out to ``scan_limit`` and folds in the family's
    analytic limit where one exists. Without an analytic limit, a running sup
    that still grows across each of the last three decades raises
    :class:`GrowthDivergenceError`.
    """
    if scan_limit < 1e3:
        raise ValueError("scan_limit must be at least 1e3")
    ndec = math.log10(scan_limit)
    pos = np.concatenate([
        np.linspace(0.0, 1.0, points_per_decade + 1),
        np.logspace(0.0, ndec, int(math.ceil(ndec * points_per_decade)) + 1),
    ])
    cutoff = getattr(spec, "cutoff", None)
    if cutoff is not None and cutoff <= scan_limit:
        pos = np.append(pos, cutoff)
    pos = np.unique(pos)
    ratio = np.maximum(np.abs(spec(pos)), np.abs(spec(-pos))) / (1.0 + pos)
    grid_sup = float(np.max(ratio))

    limit = spec.analytic_growth_limit()
    if limit is not None:
        return max(grid_sup, float(limit))

    edges = scan_limit / 10.0 ** np.arange(4)[::-1]  # last three decades
    sups = [float(np.max(ratio[pos <= e])) for e in edges]
    if all(b > a * (1 + 1e-3) for a, b in zip(sups, sups[1:])):
        raise GrowthDivergenceError(
            f"|psi(x)|/(1+|x|) keeps growing up to x = {scan_limit:g} (running sup {sups[-1]:.4g}); "
            "coefficient does not have linear growth"
        )
    return grid_sup


@dataclass(frozen=True)
class AdmissibilityReport:
    """Trend diagnostics for the growth conditions on ``L_{N,sigma}`` and ``L_{N,b}``.

    ``ratio_sigma`` is ``L_{N,sigma} / N^((1-r)(2-r)/2)`` (unbounded sigma) or
    ``L_{N,sigma} / e^{N(1-r)}`` (bounded sigma) with ``r = beta/alpha``;
    ``ratio_b`` is ``L_{N,b} / L_{N,sigma}^(2/(1-r))``.
    """

    N_list: np.ndarray
    L_sigma: np.ndarray
    L_b: np.ndarray
    sigma_bounded: bool
    ratio_sigma: np.ndarray
    ratio_b: np.ndarray
    sigma_exponent: float
    threshold: float
    sigma_ok: bool
    b_ok: bool
    notes: tuple[str, ...] = ()

    @property
    def admissible(self) -> bool:
        return self.sigma_ok and self.b_ok

    @property
    def verdict(self) -> str:
        return "admissible" if self.admissible else "not admissible"


def check_assumption3(
    b: CoefficientSpec,
    sigma: CoefficientSpec,
    params: ModelParams,
    N_list: Sequence[float],
    resolution: int = 10_000,
) -> AdmissibilityReport:
    """Check the growth restrictions on the truncated Lipschitz constants.

    ``L_{N,psi} = lip_n(psi, e^N)`` is computed on ``N_list``. The sigma
    condition holds when ``ratio_sigma`` is nonincreasing over the top half of
    the levels; the b condition holds when ``ratio_b`` stays finite and its
    top-half maximum does not exceed 1.5 times its bottom-half maximum.
    ``sigma_exponent`` is the fitted slope of ``log L_{N,sigma}`` against
    ``log N`` (unbounded case) or against ``N`` (bounded case), to be
    compared with ``threshold``.
    """
    N = np.asarray(N_list, dtype=float)
    if N.ndim != 1 or N.size < 4 or np.any(np.diff(N) <= 0) or N[0] <= 0:
        raise ValueError("N_list must be increasing, positive and have at least 4 levels")
    r = params.ratio
    Ls = np.array([lip_n(sigma, math.exp(n), resolution) for n in N])
    Lb = np.array([lip_n(b, math.exp(n), resolution) for n in N])
    bounded = sigma.is_bounded
    notes: list[str] = []

    if bounded:
        threshold = 1.0 - r
        scale = np.exp(N * threshold)
        xfit = N
    else:
        threshold = (1.0 - r) * (2.0 - r) / 2.0
        scale = N**threshold
        xfit = np.log(N)
    ratio_sigma = Ls / scale

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_b = Lb / Ls ** (2.0 / (1.0 - r))
    ratio_b = np.where((Lb == 0) & (Ls == 0), 0.0, ratio_b)

    if np.all(Ls > 0):
        sigma_exponent = float(np.polyfit(xfit, np.log(Ls), 1)[0])
    else:
        sigma_exponent = float("-inf")
        notes.append("L_{N,sigma} vanishes on part of N_list")

    top = ratio_sigma[N.size // 2:]
    sigma_ok = bool(np.all(np.diff(top) <= 1e-12 * max(float(np.max(np.abs(top))), 1e-300)))
    if not sigma_ok:
        notes.append("L_{N,sigma} ratio increases over the top half of N_list")

    lo, hi = ratio_b[: N.size // 2], ratio_b[N.size // 2:]
    b_ok = bool(np.all(np.isfinite(ratio_b)) and np.max(hi) <= 1.5 * np.max(lo) + 1e-300)
    if not b_ok:
        notes.append("L_{N,b} / L_{N,sigma}^(2/(1-r)) is not bounded along N_list")

    return AdmissibilityReport(
        N_list=N,
        L_sigma=Ls,
        L_b=Lb,
        sigma_bounded=bounded,
        ratio_sigma=ratio_sigma,
        ratio_b=ratio_b,
        sigma_exponent=sigma_exponent,
        threshold=threshold,
        sigma_ok=sigma_ok,
        b_ok=b_ok,
        notes=tuple(notes),
    )
