"""Run configuration: one YAML file drives every CLI subcommand.

Example::

    model: {alpha: 2.0, beta: 0.5}
    grid: {T: 1.0, nt: 64, half_width: 8.0, nx: 256}
    coefficients:
      b: {family: linear, params: {lam: 0.0}}
      sigma: {family: linear, params: {lam: 1.0}}
    initial: {kind: constant, values: 0.0}
    ensemble: {replicas: 1000, base_seed: 7}
    truncation: {N_list: [0.5, 1.0, 1.5, 2.0, 2.5]}
    probes: {times: [0.25, 0.5, 1.0], positions: [0.0], moment_orders: [2, 4]}
    constants: {c: 4.0}

Unknown keys are rejected and all physical constraints are re-validated on
load. Probe points are snapped to the grid with a :class:`GridWarning`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from fracspde.coefficients import CoefficientSpec
from fracspde.errors import ConfigError, GridWarning
from fracspde.kernel import ModelParams
from fracspde.solver import GridSpec

__all__ = ["RunConfig", "load_config", "parse_config", "dump_config"]

INITIAL_KINDS = ("constant", "spike", "table")


def _snap_t(grid: GridSpec, t: float) -> int:
    return int(np.clip(round(t / grid.dt), 0, grid.nt))


def _snap_x(grid: GridSpec, x: float) -> int:
    return int(np.clip(round((x + grid.half_width) / grid.dx), 0, grid.nx - 1))


@dataclass(frozen=True)
class ModelSection:
    alpha: float
    beta: float


@dataclass(frozen=True)
class GridSection:
    T: float
    nt: int
    half_width: float
    nx: int
    tail_tol: float = 1e-6
    nyquist_tol: float = 1e-8


@dataclass(frozen=True)
class CoefSection:
    family: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CoefficientsSection:
    b: CoefSection
    sigma: CoefSection


@dataclass(frozen=True)
class InitialSection:
    """``constant``: ``values`` is a number. ``spike``: ``values`` is
    ``{position, mass}`` and puts ``mass / dx`` on the nearest node.
    ``table``: ``values`` lists the ``nx`` nodal values."""

    kind: str = "constant"
    values: object = 0.0


@dataclass(frozen=True)
class EnsembleSection:
    replicas: int = 100
    base_seed: int = 0


@dataclass(frozen=True)
class TruncationSection:
    N_list: list = field(default_factory=list)


@dataclass(frozen=True)
class ProbesSection:
    times: list = field(default_factory=list)
    positions: list = field(default_factory=lambda: [0.0])
    moment_orders: list = field(default_factory=lambda: [2])


@dataclass(frozen=True)
class ConstantsSection:
    c: float = 4.0
    K0: float | None = None
    gamma: float | None = None


_SECTIONS = {
    "model": ModelSection,
    "grid": GridSection,
    "coefficients": CoefficientsSection,
    "initial": InitialSection,
    "ensemble": EnsembleSection,
    "truncation": TruncationSection,
    "probes": ProbesSection,
    "constants": ConstantsSection,
}
_REQUIRED = ("model", "grid", "coefficients")


def _build(cls, raw, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; allowed {sorted(names)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    model: ModelSection
    grid: GridSection
    coefficients: CoefficientsSection
    initial: InitialSection = InitialSection()
    ensemble: EnsembleSection = EnsembleSection()
    truncation: TruncationSection = TruncationSection()
    probes: ProbesSection = ProbesSection()
    constants: ConstantsSection = ConstantsSection()

    # derived objects

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.model.alpha, self.model.beta)

    @property
    def grid_spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(T=g.T, nt=g.nt, half_width=g.half_width, nx=g.nx)

    @property
    def b(self) -> CoefficientSpec:
        c = self.coefficients.b
        return CoefficientSpec(c.family, c.params)

    @property
    def sigma(self) -> CoefficientSpec:
        c = self.coefficients.sigma
        return CoefficientSpec(c.family, c.params)

    def initial_array(self) -> np.ndarray:
        g = self.grid_spec
        kind, v = self.initial.kind, self.initial.values
        if kind == "constant":
            return np.full(g.nx, float(v))
        if kind == "spike":
            u = np.zeros(g.nx)
            u[_snap_x(g, float(v.get("position", 0.0)))] = float(v.get("mass", 1.0)) / g.dx
            return u
        return np.asarray(v, dtype=float)

    @property
    def kernel_options(self) -> dict:
        return {"tail_tol": self.grid.tail_tol, "nyquist_tol": self.grid.nyquist_tol}

    @property
    def u0_sup(self) -> float:
        return float(np.max(np.abs(self.initial_array())))

    def probe_points(self) -> list[tuple[float, float]]:
        """Grid-snapped ``(t, x)`` pairs, times outer."""
        g = self.grid_spec
        return [(float(g.times[_snap_t(g, t)]), float(g.xs[_snap_x(g, x)])) for t in self.probes.times for x in self.probes.positions]

    def to_dict(self) -> dict:
        return asdict(self)

    def digest_payload(self) -> dict:
        """Everything that determines a simulation, for the ensemble hash."""
        d = self.to_dict()
        return {k: d[k] for k in ("model", "grid", "coefficients", "initial")}

    def validate(self) -> None:
        try:
            params = self.params
            grid = self.grid_spec
            b, sigma = self.b, self.sigma
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        del params, b, sigma
        if not (self.grid.tail_tol > 0 and self.grid.nyquist_tol > 0):
            raise ConfigError("grid.tail_tol and grid.nyquist_tol must be positive")
        if self.initial.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}, got {self.initial.kind!r}")
        v = self.initial.values
        if self.initial.kind == "constant" and not isinstance(v, (int, float)):
            raise ConfigError("initial.values must be a number for kind 'constant'")
        if self.initial.kind == "spike":
            if not isinstance(v, dict) or set(v) - {"position", "mass"}:
                raise ConfigError("initial.values must be {position, mass} for kind 'spike'")
        if self.initial.kind == "table":
            if not isinstance(v, list) or len(v) != grid.nx:
                raise ConfigError(f"initial.values must list {grid.nx} numbers for kind 'table'")
        if not np.all(np.isfinite(self.initial_array())):
            raise ConfigError("initial values must be finite")
        if int(self.ensemble.replicas) < 1:
            raise ConfigError("ensemble.replicas must be at least 1")
        if int(self.ensemble.base_seed) < 0 or int(self.ensemble.base_seed) >= 2**64:
            raise ConfigError("ensemble.base_seed must fit in an unsigned 64-bit integer")
        N = list(self.truncation.N_list)
        if any(not (isinstance(n, (int, float)) and n > 0) for n in N) or any(b <= a for a, b in zip(N, N[1:])):
            raise ConfigError("truncation.N_list must be positive and increasing")
        if any(not t > 0 for t in self.probes.times):
            raise ConfigError("probe times must be strictly positive")
        if any(_snap_t(grid, t) == 0 for t in self.probes.times):
            raise ConfigError("probe times must be at least one time step")
        if any(t > self.grid.T * (1 + 1e-12) for t in self.probes.times):
            raise ConfigError("probe times must not exceed grid.T")
        if any(not abs(x) <= self.grid.half_width for x in self.probes.positions):
            raise ConfigError("probe positions must lie in [-half_width, half_width]")
        if any(not k >= 1 for k in self.probes.moment_orders):
            raise ConfigError("moment orders must be at least 1")
        c = self.constants
        if not c.c >= 1:
            raise ConfigError("constants.c must be at least 1")
        for name in ("K0", "gamma"):
            val = getattr(c, name)
            if val is not None and not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(f"constants.{name} must be positive")
        self._warn_snaps(grid)

    def _warn_snaps(self, grid: GridSpec) -> None:
        for t in self.probes.times:
            ts = grid.times[_snap_t(grid, t)]
            if not math.isclose(ts, t, rel_tol=1e-9, abs_tol=1e-12):
                warnings.warn(f"probe time {t} snapped to grid time {ts}", GridWarning, stacklevel=3)
        for x in self.probes.positions:
            xg = grid.xs[_snap_x(grid, x)]
            if not math.isclose(xg, x, rel_tol=1e-9, abs_tol=1e-12):
                warnings.warn(f"probe position {x} snapped to grid point {xg}", GridWarning, stacklevel=3)


def parse_config(raw: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a plain mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}; allowed {sorted(_SECTIONS)}")
    missing = [s for s in _REQUIRED if s not in raw]
    if missing:
        raise ConfigError(f"missing sections {missing}")
    kw = {}
    for name, cls in _SECTIONS.items():
        if name not in raw:
            continue
        if name == "coefficients":
            sec = raw[name]
            if not isinstance(sec, dict) or set(sec) != {"b", "sigma"}:
                raise ConfigError("coefficients must have exactly the keys 'b' and 'sigma'")
            kw[name] = CoefficientsSection(
                b=_build(CoefSection, sec["b"], "coefficients.b"),
                sigma=_build(CoefSection, sec["sigma"], "coefficients.sigma"),
            )
        else:
            kw[name] = _build(cls, raw[name], name)
    cfg = RunConfig(**kw)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    """Read a YAML run configuration from ``path``."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    return parse_config(raw)


def dump_config(cfg: RunConfig) -> str:
    """Serialise to YAML; ``parse_config(yaml.safe_load(dump_config(c))) == c``."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
