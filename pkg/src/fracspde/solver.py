"""Monte Carlo solver for the mild (integral) formulation on a periodic grid.

For ``m = 1..nt`` the scheme is::

    u[m] = G_{t_m} * u0 + sum_{n<m} G_{(m-n) dt} * (b_N(u[n]) dt + sigma_N(u[n]) dW[n] / dx)

where ``*`` is the discrete periodic convolution ``sum_j G(x - y_j) f(y_j) dx``
and ``dW[n, j] ~ N(0, dt dx)`` are the white-noise cell increments. The full
history is kept (in Fourier space): for ``beta < 1`` the solution operator is
not a semigroup, so there is no one-step recursion. Coefficients are
evaluated at the left endpoint of each time cell.

Noise rows are drawn from a Philox generator keyed by ``(seed, replica)`` with
counter ``n``, so any row of any replica can be regenerated on its own and
ensembles do not depend on how replicas are split across workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from fracspde.coefficients import CoefficientSpec, truncate
from fracspde.errors import GridError, GridWarning, NumericalError
from fracspde.kernel import KernelTable, ModelParams, build_kernel_table, periodic_grid

__all__ = [
    "Ensemble",
    "FieldPath",
    "GridSpec",
    "NoisePath",
    "build_solver_kernel",
    "discrete_noise_variance",
    "evolve",
    "evolve_ensemble",
    "evolve_truncated",
    "initial_field",
    "noise_row",
    "read_ensemble",
    "refinement_study",
    "sample_noise",
    "weighted_norm_estimate",
    "write_ensemble",
    "write_field_csv",
    "zero_noise",
]

MAGIC = b"FSPDENS\x00"
FORMAT_VERSION = 1
DEFAULT_BATCH = 64


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid: ``nt`` steps on ``[0, T]``, ``nx`` periodic points on ``[-L, L)``."""

    T: float
    nt: int
    half_width: float
    nx: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise GridError(f"T must be positive, got {self.T}")
        if int(self.nt) != self.nt or self.nt < 2:
            raise GridError(f"nt must be an integer >= 2, got {self.nt}")
        if int(self.nx) != self.nx or self.nx < 16 or (int(self.nx) & (int(self.nx) - 1)):
            raise GridError(f"nx must be a power of two >= 16, got {self.nx}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.nx

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    @property
    def xs(self) -> np.ndarray:
        return periodic_grid(self.half_width, self.nx)

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.T, self.nt * factor, self.half_width, self.nx * factor)

    def single_step_variance(self, params: ModelParams) -> float:
        """``C* dt^(1-r) / (1-r)``: continuum variance of one step of additive noise."""
        r = params.ratio
        return params.cstar() * self.dt ** (1.0 - r) / (1.0 - r)

    def check_variance(self, params: ModelParams) -> bool:
        v = self.single_step_variance(params)
        if v >= 1.0:
            warnings.warn(f"single-step noise variance {v:.3g} >= 1; dt is coarse", GridWarning, stacklevel=2)
            return False
        return True

    def to_dict(self) -> dict:
        return {"T": self.T, "nt": self.nt, "half_width": self.half_width, "nx": self.nx}

    def time_index(self, t: float) -> int:
        m = t / self.dt
        idx = int(round(m))
        if abs(m - idx) > 1e-9 * max(1.0, m) or not 0 <= idx <= self.nt:
            raise GridError(f"t = {t} is not on the time grid")
        return idx

    def space_index(self, x: float) -> int:
        j = (x + self.half_width) / self.dx
        idx = int(round(j))
        if abs(j - idx) > 1e-9 * max(1.0, abs(j)) or not 0 <= idx < self.nx:
            raise GridError(f"x = {x} is not on the spatial grid")
        return idx


def build_solver_kernel(params: ModelParams, grid: GridSpec, **kw) -> KernelTable:
    """Kernel table at ``dt, 2 dt, ..., T`` on the grid's spatial points."""
    return build_kernel_table(params, grid.times[1:], grid.xs, **kw)


def _check_kernel(grid: GridSpec, kernel: KernelTable) -> None:
    if kernel.nx != grid.nx or not np.allclose(kernel.xs, grid.xs, rtol=0, atol=1e-12 * grid.half_width):
        raise GridError("kernel table and grid have different spatial points")
    if kernel.times.size < grid.nt or not np.allclose(kernel.times[: grid.nt], grid.times[1:], rtol=1e-12, atol=0):
        raise GridError("kernel table must cover times dt, 2 dt, ..., T")


# {{{ noise


_MASK64 = (1 << 64) - 1


class _RowStream:
    """Philox stream keyed by ``(seed, replica)``; row ``n`` uses counter ``n``."""

    def __init__(self, seed: int, replica: int):
        self.bitgen = np.random.Philox(key=[int(seed) & _MASK64, int(replica) & _MASK64])
        self.gen = np.random.Generator(self.bitgen)
        self.key = self.bitgen.state["state"]["key"]

    def row(self, n: int, size: int) -> np.ndarray:
        self.bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, n, 0, 0], dtype=np.uint64), "key": self.key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.gen.standard_normal(size)


def noise_row(grid: GridSpec, seed: int, n: int, replica: int = 0) -> np.ndarray:
    """Increments ``dW[n, :]`` for one replica, regenerated independently of other rows."""
    if not 0 <= n < grid.nt:
        raise IndexError(f"row {n} outside 0..{grid.nt - 1}")
    return _RowStream(seed, replica).row(n, grid.nx) * math.sqrt(grid.dt * grid.dx)


def _noise_block(grid: GridSpec, seed: int, replica: int) -> np.ndarray:
    s = _RowStream(seed, replica)
    out = np.empty((grid.nt, grid.nx))
    for n in range(grid.nt):
        out[n] = s.row(n, grid.nx)
    out *= math.sqrt(grid.dt * grid.dx)
    return out


@dataclass(frozen=True, eq=False)
class NoisePath:
    """White-noise increments ``dW[n, j]``, i.i.d. ``N(0, dt dx)``."""

    seed: int
    increments: np.ndarray
    replica: int = 0


def sample_noise(grid: GridSpec, seed: int, replica: int = 0) -> NoisePath:
    """Draw the ``(nt, nx)`` increment matrix for ``(seed, replica)``."""
    inc = _noise_block(grid, seed, replica)
    inc.flags.writeable = False
    return NoisePath(seed=int(seed), increments=inc, replica=int(replica))


# }}}

# {{{ paths and ensembles


@dataclass(frozen=True, eq=False)
class FieldPath:
    """One realisation ``u[n, j]`` on the grid."""

    grid: GridSpec
    values: np.ndarray
    truncation_level: float | None
    seed: int
    replica: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Replicas stacked as ``values[r, i, j]`` at time indices ``time_indices[i]``."""

    grid: GridSpec
    values: np.ndarray
    time_indices: np.ndarray
    base_seed: int
    replicas: np.ndarray
    truncation_level: float | None = None
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_replicas(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[self.time_indices]

    def probe(self, t: float, x: float) -> np.ndarray:
        """Samples ``u(t, x)`` across replicas (grid points only)."""
        m = self.grid.time_index(t)
        hit = np.flatnonzero(self.time_indices == m)
        if hit.size == 0:
            raise GridError(f"time t = {t} was not saved in this ensemble")
        return self.values[:, int(hit[0]), self.grid.space_index(x)]

    def path(self, r: int) -> FieldPath:
        if self.time_indices.size != self.grid.nt + 1:
            raise ValueError("ensemble does not hold full paths")
        return FieldPath(self.grid, self.values[r], self.truncation_level, self.base_seed, int(self.replicas[r]))

    def paths(self) -> list[FieldPath]:
        return [self.path(r) for r in range(self.n_replicas)]


def initial_field(u0, xs: np.ndarray) -> np.ndarray:
    """Sample the initial datum: scalar (constant), callable or array of grid values."""
    xs = np.asarray(xs, dtype=float)
    if callable(u0):
        out = np.asarray(u0(xs), dtype=float)
    elif np.ndim(u0) == 0:
        out = np.full(xs.shape, float(u0))
    else:
        out = np.asarray(u0, dtype=float)
    if out.shape != xs.shape:
        raise ValueError(f"initial field has shape {out.shape}, grid needs {xs.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("initial field must be finite")
    return out


# }}}

# {{{ core scheme


def _as_fn(coef, N: float | None):
    if N is None or math.isinf(N):
        return coef
    return truncate(coef, N)


def _evolve_batch(
    u0: np.ndarray,
    bfun,
    sfun,
    grid: GridSpec,
    kernel: KernelTable,
    noise: np.ndarray | None,
    save: np.ndarray,
    reverse_history: bool = False,
    replica_offset: int = 0,
) -> np.ndarray:
    """Evolve ``R`` replicas; ``noise`` has shape ``(R, nt, nx)`` or is ``None``."""
    R = 1 if noise is None else noise.shape[0]
    nt, nx, dt, dx = grid.nt, grid.nx, grid.dt, grid.dx
    cache = kernel.fourier_cache
    nk = cache.shape[1]

    drift_on = not getattr(bfun, "is_zero", False)
    u0_hat = np.fft.rfft(u0)
    forcing = np.zeros((nt, R, nk), dtype=complex)
    out = np.empty((R, save.size, nx))
    slot = {int(m): i for i, m in enumerate(save)}

    u = np.broadcast_to(u0, (R, nx))
    if 0 in slot:
        out[:, slot[0]] = u
    for m in range(1, nt + 1):
        n = m - 1
        f = np.zeros((R, nx))
        if drift_on:
            f += bfun(u) * dt
        if noise is not None:
            f += sfun(u) * (noise[:, n] / dx)
        forcing[n] = np.fft.rfft(f, axis=-1)

        acc = np.broadcast_to(cache[m - 1] * u0_hat, (R, nk)).copy()
        lags = range(m) if not reverse_history else range(m - 1, -1, -1)
        for q in lags:
            acc += cache[m - 1 - q] * forcing[q]
        u = np.fft.irfft(acc, n=nx, axis=-1)

        if not np.all(np.isfinite(u)):
            r, j = map(int, np.argwhere(~np.isfinite(u))[0])
            raise NumericalError(
                f"non-finite field at replica {replica_offset + r}, step n = {m}, x index j = {j}",
                index=(replica_offset + r, m, j),
            )
        if m in slot:
            out[:, slot[m]] = u
    return out


def _sigma_is_zero(sigma) -> bool:
    base = getattr(sigma, "base", sigma)
    return bool(getattr(base, "is_zero", False))


def evolve_truncated(
    u0,
    b: CoefficientSpec,
    sigma: CoefficientSpec,
    N: float | None,
    grid: GridSpec,
    noise: NoisePath,
    kernel: KernelTable,
    reverse_history: bool = False,
) -> FieldPath:
    """Evolve one path with truncated coefficients ``b_N``, ``sigma_N``.

    ``N = None`` leaves the coefficients untruncated. ``reverse_history``
    sums the memory term in the opposite order (same mathematics, different
    floating-point association).
    """
    _check_kernel(grid, kernel)
    if noise.increments.shape != (grid.nt, grid.nx):
        raise GridError(f"noise has shape {noise.increments.shape}, grid needs {(grid.nt, grid.nx)}")
    x0 = initial_field(u0, grid.xs)
    bfun, sfun = _as_fn(b, N), _as_fn(sigma, N)
    inc = None if _sigma_is_zero(sigma) else noise.increments[None]
    vals = _evolve_batch(x0, bfun, sfun, grid, kernel, inc, np.arange(grid.nt + 1), reverse_history)
    return FieldPath(grid, vals[0], None if N is None else float(N), noise.seed, noise.replica)


def evolve(u0, b, sigma, grid: GridSpec, noise: NoisePath, kernel: KernelTable) -> FieldPath:
    """Untruncated scheme; identical to :func:`evolve_truncated` with ``N = None``."""
    return evolve_truncated(u0, b, sigma, None, grid, noise, kernel)


def evolve_ensemble(
    u0,
    b: CoefficientSpec,
    sigma: CoefficientSpec,
    grid: GridSpec,
    kernel: KernelTable,
    base_seed: int,
    replicas: int | Sequence[int],
    N: float | None = None,
    save_times: Sequence[int] | None = None,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
    reverse_history: bool = False,
    config_hash: str = "",
) -> Ensemble:
    """Evolve many replicas with noise keyed by ``(base_seed, replica)``.

    Replicas are processed in fixed batches of ``batch_size`` whatever the
    thread count, so the output is bit-identical for any ``threads``.

    Parameters
    ----------
    replicas:
        Count (replicas ``0..R-1``) or explicit replica ids.
    save_times:
        Time indices to keep (default: all ``nt + 1``).
    """
    _check_kernel(grid, kernel)
    ids = np.arange(replicas) if np.ndim(replicas) == 0 else np.asarray(replicas, dtype=np.int64)
    if ids.size == 0:
        raise ValueError("need at least one replica")
    save = np.arange(grid.nt + 1) if save_times is None else np.unique(np.asarray(save_times, dtype=int))
    if save.size == 0 or save[0] < 0 or save[-1] > grid.nt:
        raise GridError("save_times must be time indices in 0..nt")
    x0 = initial_field(u0, grid.xs)
    bfun, sfun = _as_fn(b, N), _as_fn(sigma, N)
    quiet = _sigma_is_zero(sigma)

    chunks = [ids[i:i + batch_size] for i in range(0, ids.size, batch_size)]
    offsets = list(range(0, ids.size, batch_size))

    def run(k: int) -> np.ndarray:
        chunk = chunks[k]
        if quiet:
            one = _evolve_batch(x0, bfun, sfun, grid, kernel, None, save, reverse_history, offsets[k])
            return np.repeat(one, chunk.size, axis=0)
        noise = np.stack([_noise_block(grid, base_seed, int(r)) for r in chunk])
        return _evolve_batch(x0, bfun, sfun, grid, kernel, noise, save, reverse_history, offsets[k])

    if threads <= 1 or len(chunks) == 1:
        parts = [run(k) for k in range(len(chunks))]
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(run, range(len(chunks))))
    values = np.concatenate(parts, axis=0)
    return Ensemble(
        grid=grid,
        values=values,
        time_indices=save,
        base_seed=int(base_seed),
        replicas=ids,
        truncation_level=None if N is None else float(N),
        config_hash=config_hash,
    )


# }}}

# {{{ diagnostics


def discrete_noise_variance(kernel: KernelTable, grid: GridSpec, m: int) -> float:
    """Exact variance of the additive-noise term at step ``m``: ``sum_{n<m} sum_j G^2 dt dx``."""
    _check_kernel(grid, kernel)
    if not 1 <= m <= grid.nt:
        raise IndexError("m must lie in 1..nt")
    sq = np.sum(kernel.values[:m] ** 2, axis=1) * grid.dx
    return float(np.sum(sq) * grid.dt)


def weighted_norm_estimate(ensemble, k: float, gamma: float, T: float, min_replicas: int = 100) -> float:
    """Empirical ``sup_{0 < t <= T, x} e^(-gamma t) (mean |u(t,x)|^k)^(1/k)``.

    ``ensemble`` is an :class:`Ensemble` or a list of :class:`FieldPath`.
    """
    if k < 1 or gamma < 0:
        raise ValueError("need k >= 1 and gamma >= 0")
    if isinstance(ensemble, Ensemble):
        vals, times = ensemble.values, ensemble.times
    else:
        paths = list(ensemble)
        if not paths:
            raise ValueError("empty ensemble")
        g0 = paths[0].grid
        if any(p.grid != g0 for p in paths):
            raise ValueError("all paths must share a grid")
        vals, times = np.stack([p.values for p in paths]), g0.times
    if vals.shape[0] == 0:
        raise ValueError("empty ensemble")
    if vals.shape[0] < min_replicas:
        raise ValueError(f"ensemble has {vals.shape[0]} replicas, need at least {min_replicas}")
    sel = (times > 0) & (times <= T * (1 + 1e-12))
    if not sel.any():
        raise ValueError("no saved times in (0, T]")
    mom = np.mean(np.abs(vals[:, sel]) ** k, axis=0) ** (1.0 / k)
    return float(np.max(np.exp(-gamma * times[sel])[:, None] * mom))


def refinement_study(params: ModelParams, grid: GridSpec, u0: Callable, b: CoefficientSpec, levels: int = 3, **kw):
    """Deterministic (sigma = 0) grid-refinement ratios.

    Runs the scheme on ``grid`` refined ``levels - 1`` times (``dt`` and ``dx``
    halved each time), compares successive solutions at the coarse grid
    points and returns ``(diffs, ratios)`` with ``ratios[i] = diffs[i] / diffs[i+1]``.
    First-order convergence gives ratios near 2.
    """
    sols = []
    g = grid
    for lev in range(levels):
        ker = build_solver_kernel(params, g, **kw)
        path = evolve(u0, b, CoefficientSpec.zero(), g, zero_noise(g), ker)
        f = 2**lev
        sols.append(path.values[::f, ::f])
        g = g.refined()
    diffs = np.array([np.max(np.abs(a - c)) for a, c in zip(sols, sols[1:])])
    return diffs, diffs[:-1] / diffs[1:]


def zero_noise(grid: GridSpec) -> NoisePath:
    """All-zero noise for deterministic runs."""
    return NoisePath(seed=0, increments=np.zeros((grid.nt, grid.nx)))


# }}}

# {{{ IO


def config_digest(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def write_ensemble(path, ens: Ensemble) -> None:
    """Binary ensemble file.

    Layout: 8-byte magic, ``uint32`` version, ``uint32`` header length, UTF-8
    JSON header (grid, config hash, base seed, replica ids, saved time indices,
    truncation level, shape), then little-endian float64 values in C order.
    """
    header = {
        "grid": ens.grid.to_dict(),
        "config_hash": ens.config_hash,
        "base_seed": ens.base_seed,
        "replicas": [int(r) for r in ens.replicas],
        "time_indices": [int(m) for m in ens.time_indices],
        "truncation_level": ens.truncation_level,
        "shape": list(ens.values.shape),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(ens.values, dtype="<f8").tobytes())


def read_ensemble(path) -> Ensemble:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not an ensemble file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        header = json.loads(fh.read(hlen).decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: truncated data section")
    return Ensemble(
        grid=GridSpec(**header["grid"]),
        values=data.reshape(shape).astype(float),
        time_indices=np.asarray(header["time_indices"], dtype=int),
        base_seed=int(header["base_seed"]),
        replicas=np.asarray(header["replicas"], dtype=np.int64),
        truncation_level=header["truncation_level"],
        config_hash=header["config_hash"],
    )


def write_field_csv(path, ens_or_path, replica: int = 0) -> None:
    """Snapshot CSV with columns ``t, x, u`` for one replica."""
    if isinstance(ens_or_path, FieldPath):
        vals, times, xs = ens_or_path.values, ens_or_path.times, ens_or_path.grid.xs
    else:
        vals, times, xs = ens_or_path.values[replica], ens_or_path.times, ens_or_path.grid.xs
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["t", "x", "u"])
    for t, row in zip(times, vals):
        for x, u in zip(xs, row):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(u))])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


# }}}
