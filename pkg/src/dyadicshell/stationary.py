"""Empirical study of the long-run statistically stationary state.

One long chain supplies thinned samples of the law at large times; exact
optimal assignment between equal-size sample clouds gives the empirical
quadratic transport cost in the -1/2 metric; and synchronously coupled
chains started from two different states quantify how fast the two laws
merge, which is the mechanism behind uniqueness of the stationary law.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .analysis import couple
from .core import CONTRACTION, ModelParams, ShellState, SobolevIndex, sobolev_norm_sq
from .integrator import SchemeConfig, integrate
from .noise import sample_brownian, substream

__all__ = [
    "EmpiricalMeasure",
    "long_run",
    "wasserstein2",
    "stationarity_gap",
    "bootstrap_noise_floor",
    "UniquenessResult",
    "uniqueness_experiment",
    "mixing_time_proxy",
    "save_measure",
    "load_measure",
]

MAX_ASSIGNMENT_SIZE = 512


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Uniformly weighted finite sample standing in for a law on the state
    space; every sample lies in the positive cone."""

    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 2:
            raise ValueError(f"samples must be a nonempty (n, N+1) array, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if np.any(samples[:, 1:] < 0.0):
            raise ValueError("samples must lie in the positive cone on shells j >= 1")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def state_at(self, i: int) -> ShellState:
        return ShellState(self.samples[i])


def long_run(initial: ShellState, params: ModelParams, burn_in: float,
             n_samples: int, thin: float, seed: int,
             config: SchemeConfig = SchemeConfig()) -> EmpiricalMeasure:
    """Sample the long-run law from one chain: integrate for
    burn_in + n_samples * thin, drop the burn-in, keep every thin-spaced
    state.  Deterministic given the seed.

    thin is snapped to a multiple of params.dt and burn_in up to a multiple
    of thin, so the samples land exactly on the save grid.
    """
    params.require_contractive()
    if burn_in < 0.0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    if thin < params.dt:
        raise ValueError(f"thin must be >= params.dt={params.dt}, got {thin}")
    thin_steps = max(1, round(thin / params.dt))
    thin_eff = thin_steps * params.dt
    burn_saves = math.ceil(burn_in / thin_eff - 1e-9) if burn_in > 0.0 else 0
    total = (burn_saves + n_samples) * thin_eff
    run_params = replace(params, T=total, dt=thin_eff)
    path = sample_brownian(total, params.dt, seed)
    traj = integrate(initial, run_params, path, config)
    samples = traj.states[burn_saves + 1: burn_saves + 1 + n_samples]
    meta = {
        "kind": "long-run",
        "params": {"c": params.c, "sigma": params.sigma, "N": params.N, "dt": params.dt},
        "scheme": config.scheme,
        "burn_in": burn_saves * thin_eff,
        "thin": thin_eff,
        "seeds": [int(seed)],
    }
    return EmpiricalMeasure(samples=samples, meta=meta)


def wasserstein2(A: EmpiricalMeasure, B: EmpiricalMeasure,
                 alpha: SobolevIndex | float = CONTRACTION, *,
                 n_max: int = MAX_ASSIGNMENT_SIZE) -> float:
    """Exact empirical quadratic transport cost between equal-size clouds.

    Returns min over pairings pi of (1/n) sum_i ||A_i - B_pi(i)||_alpha^2,
    solved exactly on the n x n cost matrix (cubic-time assignment).  The
    equal-count restriction keeps the problem an assignment problem, and the
    exact minimum is what the uniqueness argument needs.
    """
    if len(A) != len(B):
        raise ValueError(f"sample counts differ: {len(A)} vs {len(B)}")
    n = len(A)
    if n > n_max:
        raise ValueError(f"assignment solver capped at {n_max} samples, got {n}")
    if A.samples.shape[1] != B.samples.shape[1]:
        raise ValueError("sample dimensions differ")
    a = alpha.alpha if isinstance(alpha, SobolevIndex) else float(alpha)
    scale = 2.0 ** (a * np.arange(A.samples.shape[1]))
    cost = cdist(A.samples * scale, B.samples * scale, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols]) / n


def stationarity_gap(measure_early: EmpiricalMeasure,
                     measure_late: EmpiricalMeasure,
                     alpha: SobolevIndex | float = CONTRACTION) -> float:
    """Transport cost between two time blocks of the same chain; values at or
    below the resampling noise floor indicate the chain has settled."""
    return wasserstein2(measure_early, measure_late, alpha)


def bootstrap_noise_floor(measure: EmpiricalMeasure, n_boot: int = 200,
                          seed: int = 0, quantile: float = 0.95,
                          alpha: SobolevIndex | float = CONTRACTION) -> float:
    """Noise floor for stationarity_gap: the given quantile of the transport
    cost between two independent with-replacement resamples of one window."""
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=int(seed) % 2**64))
    n = len(measure)
    costs = []
    for _ in range(n_boot):
        first = EmpiricalMeasure(measure.samples[rng.integers(0, n, n)])
        second = EmpiricalMeasure(measure.samples[rng.integers(0, n, n)])
        costs.append(wasserstein2(first, second, alpha))
    return float(np.quantile(costs, quantile))


@dataclass(frozen=True, eq=False)
class UniquenessResult:
    """Per-horizon decay of the coupled distance between two state clouds.

    mean_coupled_sq[k] averages ||u_a(t_k) - u_b(t_k)||^2 in the -1/2 norm
    over the coupled pairs; cloud_w2[k] is the exact transport cost between
    the two clouds, which the coupling bounds from above.
    """

    times: np.ndarray
    mean_coupled_sq: np.ndarray
    cloud_w2: np.ndarray

    def to_csv(self, file) -> None:
        own = isinstance(file, (str, Path))
        fh = open(file, "w") if own else file
        try:
            fh.write("t,mean_coupled_sq_dist,cloud_w2\n")
            for t, m, w in zip(self.times, self.mean_coupled_sq, self.cloud_w2):
                fh.write(f"{float(t)!r},{float(m)!r},{float(w)!r}\n")
        finally:
            if own:
                fh.close()


def uniqueness_experiment(initial_a: ShellState, initial_b: ShellState,
                          params: ModelParams, horizon_ladder: Sequence[float],
                          n_samples: int, seed: int,
                          config: SchemeConfig = SchemeConfig(), *,
                          allow_identical: bool = False) -> UniquenessResult:
    """Couple n_samples independent noise realizations from both initial
    states and record, per horizon, the mean coupled squared distance and
    the exact cloud transport cost (both in the -1/2 metric, both including
    the t = 0 row).

    Pathwise contraction makes the coupled mean decrease; the cloud cost is
    dominated by it since the coupling is one admissible pairing.
    """
    params.require_contractive()
    horizons = [float(h) for h in horizon_ladder]
    if not horizons or any(h <= 0.0 for h in horizons):
        raise ValueError("horizons must be positive")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly increasing")
    if n_samples < 1:
        raise ValueError("need at least one coupled chain")
    if not allow_identical and np.array_equal(initial_a.u, initial_b.u):
        raise ValueError("initial states must differ (synchronous coupling of equal "
                         "states is identically zero)")
    if initial_a.u.size != initial_b.u.size:
        raise ValueError("initial states have different truncation levels")
    t_end = horizons[-1]
    run_params = replace(params, T=t_end)
    save_steps = [round(h / params.dt) for h in horizons]
    for h, k in zip(horizons, save_steps):
        if abs(k * params.dt - h) > 1e-9 * max(h, 1.0):
            raise ValueError(f"horizon {h} is not a multiple of params.dt={params.dt}")
    n_dim = params.N + 1
    clouds_a = np.empty((len(horizons), n_samples, n_dim))
    clouds_b = np.empty((len(horizons), n_samples, n_dim))
    for i in range(n_samples):
        path = sample_brownian(t_end, params.dt, substream(seed, i))
        traj_a = integrate(initial_a, run_params, path, config)
        traj_b = integrate(initial_b, run_params, path, config)
        for r, k in enumerate(save_steps):
            clouds_a[r, i] = traj_a.states[k]
            clouds_b[r, i] = traj_b.states[k]
    times = np.array([0.0] + horizons)
    d0_sq = sobolev_norm_sq(initial_a.u - initial_b.u, CONTRACTION)
    mean_sq = [d0_sq]
    cloud = [d0_sq]
    for r in range(len(horizons)):
        pair_costs = [
            sobolev_norm_sq(clouds_a[r, i] - clouds_b[r, i], CONTRACTION)
            for i in range(n_samples)
        ]
        mean_sq.append(math.fsum(pair_costs) / n_samples)
        cloud.append(wasserstein2(EmpiricalMeasure(clouds_a[r]),
                                  EmpiricalMeasure(clouds_b[r]), CONTRACTION))
    return UniquenessResult(times=times,
                            mean_coupled_sq=np.array(mean_sq),
                            cloud_w2=np.array(cloud))


def mixing_time_proxy(params: ModelParams, seed: int,
                      config: SchemeConfig = SchemeConfig(), *,
                      threshold: float = 0.01, t_cap: float = 256.0) -> float:
    """Time for the coupled -1/2 distance between the zero state and a unit
    decaying profile to fall below threshold * initial.  Used to size
    default burn-in periods (ten times this proxy)."""
    params.require_contractive()
    n = params.N + 1
    probe_b = ShellState(2.0 ** (-np.arange(n, dtype=float)))
    probe_a = ShellState(np.zeros(n))
    horizon = max(4.0 * params.dt, 1.0)
    while True:
        run_params = replace(params, T=horizon)
        path = sample_brownian(horizon, params.dt, seed)
        result = couple(probe_a, probe_b, run_params, path, config)
        hits = np.flatnonzero(result.distances <= threshold * result.initial)
        if hits.size:
            return float(result.times[hits[0]])
        if horizon >= t_cap:
            return float(horizon)
        horizon = min(2.0 * horizon, t_cap)


def save_measure(measure: EmpiricalMeasure, file) -> None:
    """Persist as JSONL: a meta header record, then one state per line."""
    own = isinstance(file, (str, Path))
    fh = open(file, "w") if own else file
    try:
        header = {"kind": "empirical-measure", "n": len(measure),
                  "meta": measure.meta}
        fh.write(json.dumps(header) + "\n")
        for row in measure.samples:
            fh.write(json.dumps({"u": [float(v) for v in row]}) + "\n")
    finally:
        if own:
            fh.close()


def load_measure(file) -> EmpiricalMeasure:
    own = isinstance(file, (str, Path))
    fh = open(file, "r") if own else file
    try:
        header = json.loads(fh.readline())
        if header.get("kind") != "empirical-measure":
            raise ValueError("not an empirical-measure JSONL file")
        rows = [json.loads(line)["u"] for line in fh if line.strip()]
    finally:
        if own:
            fh.close()
    if len(rows) != header.get("n"):
        raise ValueError("sample count does not match the header")
    return EmpiricalMeasure(samples=np.array(rows, dtype=float),
                            meta=header.get("meta", {}))
