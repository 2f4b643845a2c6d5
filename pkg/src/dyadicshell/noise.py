"""Seed-reproducible scalar Brownian paths on uniform grids.

Paths are generated with numpy's counter-based Philox generator keyed by the
seed, one standard-normal draw per grid increment in time order, so any
(T, dt, seed) triple reproduces bit-identically on every platform.  Bridge
refinement lets the same realization be re-sampled on a finer grid, which is
what pathwise-convergence and fixed-noise continuity experiments need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "NoisePath",
    "sample_brownian",
    "refine",
    "sup_norm",
    "substream",
    "path_to_csv",
    "path_from_csv",
]

_U64 = 2**64


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) % _U64))


def substream(seed: int, index: int) -> int:
    """Derive the index-th independent stream seed from a base seed.

    Batch drivers (Monte Carlo over chains, probe ensembles, burn-in versus
    accumulation phases) need several mutually independent noise streams
    from one user-facing seed; spawning through SeedSequence keeps them
    reproducible and collision-free.
    """
    key = np.random.SeedSequence(entropy=int(seed) % _U64, spawn_key=(int(index),))
    return int(key.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class NoisePath:
    """A sampled continuous path w with w(0) = 0 on a uniform grid."""

    times: np.ndarray
    values: np.ndarray
    dt: float
    seed: int | None = None

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or values.ndim != 1 or times.size != values.size:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size < 2:
            raise ValueError("a path needs at least two grid points")
        if times[0] != 0.0:
            raise ValueError("the grid must start at t = 0")
        if values[0] != 0.0:
            raise ValueError("w(0) must equal 0")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("path data must be finite")
        gaps = np.diff(times)
        tol = 1e-9 * max(self.dt, 1.0)
        if np.any(gaps <= 0.0) or np.any(np.abs(gaps - self.dt) > tol):
            raise ValueError("the grid must be strictly increasing with uniform spacing dt")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def sample_brownian(T: float, dt: float, seed: int) -> NoisePath:
    """Sample a Brownian path on the uniform grid covering [0, T].

    dt is snapped to T / round(T / dt) so the grid ends exactly at T.
    Increments are i.i.d. centered Gaussians with variance equal to the grid
    spacing; identical (T, dt, seed) input reproduces the same path exactly.
    """
    if not (T > 0.0 and math.isfinite(T)):
        raise ValueError(f"T must be finite and > 0, got {T}")
    if not (0.0 < dt <= T):
        raise ValueError(f"dt must satisfy 0 < dt <= T, got {dt}")
    m = max(1, round(T / dt))
    dt_eff = T / m
    dw = _generator(seed).standard_normal(m) * math.sqrt(dt_eff)
    values = np.concatenate(([0.0], np.cumsum(dw)))
    return NoisePath(times=np.linspace(0.0, T, m + 1), values=values, dt=dt_eff, seed=seed)


def refine(path: NoisePath, factor: int, seed: int) -> NoisePath:
    """Resample the same realization on a grid factor times finer.

    Coarse grid points are copied exactly; interior points are drawn from the
    Brownian bridge law conditional on the two enclosing coarse values, one
    interior position at a time across all intervals (left to right), using a
    fresh Philox stream keyed by seed.  Deterministic in (path, factor, seed).
    """
    if not isinstance(factor, (int, np.integer)) or factor < 2:
        raise ValueError(f"refinement factor must be an integer >= 2, got {factor!r}")
    k = path.n_steps
    h = path.dt / factor
    out = np.empty(k * factor + 1)
    out[::factor] = path.values
    z = _generator(seed).standard_normal((factor - 1, k))
    left = path.values[:-1].copy()
    right = path.values[1:]
    for i in range(1, factor):
        remaining = path.dt - (i - 1) * h
        mean = left + (right - left) * (h / remaining)
        std = math.sqrt(h * (remaining - h) / remaining)
        left = mean + std * z[i - 1]
        out[i::factor] = left
    times = np.linspace(0.0, path.T, k * factor + 1)
    return NoisePath(times=times, values=out, dt=path.dt / factor, seed=seed)


def sup_norm(path: NoisePath) -> float:
    """Maximum of |w| over the grid points (a proxy for the continuous sup;
    bound checks compensate with a small enlargement factor)."""
    return float(np.max(np.abs(path.values)))


def path_to_csv(path: NoisePath, file) -> None:
    """Write the path as CSV with full round-trip precision (columns t, w)."""
    own = isinstance(file, (str, Path))
    fh = open(file, "w") if own else file
    try:
        fh.write("t,w\n")
        for t, w in zip(path.times, path.values):
            fh.write(f"{float(t)!r},{float(w)!r}\n")
    finally:
        if own:
            fh.close()


def path_from_csv(file) -> NoisePath:
    """Read a path written by path_to_csv (or by an external tool).

    The grid must be uniform and start at t = 0; a leading |w| below 1e-12
    of the path scale is snapped to zero so externally produced files with
    rounding noise at the origin still load.
    """
    own = isinstance(file, (str, Path))
    fh = open(file, "r") if own else file
    try:
        header = fh.readline()
        if header.strip().lower() not in ("t,w", '"t","w"'):
            raise ValueError(f"expected header 't,w', got {header.strip()!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    finally:
        if own:
            fh.close()
    if len(rows) < 2:
        raise ValueError("a path needs at least two rows")
    data = np.array([[float(a), float(b)] for a, b in rows])
    times, values = data[:, 0], data[:, 1]
    scale = max(1.0, float(np.max(np.abs(values))))
    if abs(values[0]) <= 1e-12 * scale:
        values[0] = 0.0
    gaps = np.diff(times)
    dt = float(np.median(gaps))
    return NoisePath(times=times, values=values, dt=dt, seed=None)
