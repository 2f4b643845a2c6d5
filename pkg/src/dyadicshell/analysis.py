"""Numerical certification of the model's quantitative guarantees.

Given computed trajectories these operations check the a-priori bound on
shell 0, the global energy bound, the geometric decay of the per-shell time
integrals, the contraction of the -1/2-norm distance between synchronously
coupled runs, and the vanishing modulus of continuity with respect to joint
perturbations of the initial state and of the noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import CONTRACTION, ModelParams, ShellState, Trajectory, sobolev_norm_sq
from .integrator import SchemeConfig, integrate
from .noise import NoisePath, substream, sup_norm

__all__ = [
    "DEFAULT_SUP_MARGIN",
    "BoundReport",
    "CouplingResult",
    "SlopeFit",
    "ContinuityPoint",
    "bound_constant",
    "energy_bound_constants",
    "check_u0_bound",
    "check_energy_bound",
    "regularity_profile",
    "fit_decay_slope",
    "couple",
    "continuity_modulus",
    "distance_series_to_csv",
]

# The grid sup-norm of a sampled path underestimates the continuous sup, so
# bound constants enlarge the sup term by this factor to avoid false alarms.
DEFAULT_SUP_MARGIN = 1e-2


@dataclass(frozen=True)
class BoundReport:
    """Outcome of one bound check against a computed trajectory."""

    bound_name: str
    theoretical: float
    observed_max: float
    margin: float
    violated: bool
    worst_time: float
    tolerance: float
    theoretical_loose: float | None = None

    def __post_init__(self) -> None:
        if self.violated != (self.margin < -self.tolerance):
            raise ValueError("violated flag inconsistent with margin and tolerance")

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def bound_constant(initial_norm: float, sigma: float, path: NoisePath,
                   eps_sup: float = DEFAULT_SUP_MARGIN) -> float:
    """The pathwise constant  a = ||u(0)|| + 2*sigma*||w||_inf, with the grid
    sup enlarged by (1 + eps_sup)."""
    if initial_norm < 0.0:
        raise ValueError("initial_norm must be >= 0")
    return initial_norm + 2.0 * sigma * sup_norm(path) * (1.0 + eps_sup)


def energy_bound_constants(a: float, T: float) -> tuple[float, float]:
    """Energy bound in both published forms: the two-term constant
    a^2 + (a^2 T + a)^2 and the looser single square (a^2 T + 2a)^2."""
    tight = a * a + (a * a * T + a) ** 2
    loose = (a * a * T + 2.0 * a) ** 2
    return tight, loose


def _require_same_run(traj: Trajectory, path: NoisePath) -> None:
    if abs(path.T - traj.params.T) > 1e-9 * max(traj.params.T, 1.0):
        raise ValueError("trajectory and path cover different horizons")
    ratio = traj.params.dt / path.dt
    if abs(ratio - round(ratio)) > 1e-9 * max(ratio, 1.0) or round(ratio) < 1:
        raise ValueError("trajectory and path grids are incompatible")


def check_u0_bound(traj: Trajectory, path: NoisePath, initial_norm: float, *,
                   eps_sup: float = DEFAULT_SUP_MARGIN,
                   tolerance: float | None = None) -> BoundReport:
    """Verify |u_0(t)| <= a along the whole trajectory."""
    _require_same_run(traj, path)
    a = bound_constant(initial_norm, traj.params.sigma, path, eps_sup)
    series = np.abs(traj.states[:, 0])
    worst = int(np.argmax(series))
    observed = float(series[worst])
    tol = 1e-9 * (1.0 + a) if tolerance is None else tolerance
    margin = a - observed
    return BoundReport(
        bound_name="u0-bound",
        theoretical=a,
        observed_max=observed,
        margin=margin,
        violated=bool(margin < -tol),
        worst_time=float(traj.times[worst]),
        tolerance=tol,
    )


def check_energy_bound(traj: Trajectory, path: NoisePath, initial_norm: float, *,
                       eps_sup: float = DEFAULT_SUP_MARGIN,
                       tolerance: float | None = None) -> BoundReport:
    """Verify ||u(t)||^2 <= a^2 + (a^2 T + a)^2 along the whole trajectory.

    The looser constant (a^2 T + 2a)^2 is reported alongside.
    """
    _require_same_run(traj, path)
    a = bound_constant(initial_norm, traj.params.sigma, path, eps_sup)
    tight, loose = energy_bound_constants(a, traj.params.T)
    series = traj.energy_series()
    worst = int(np.argmax(series))
    observed = float(series[worst])
    tol = 1e-9 * (1.0 + tight) if tolerance is None else tolerance
    margin = tight - observed
    return BoundReport(
        bound_name="energy-bound",
        theoretical=tight,
        observed_max=observed,
        margin=margin,
        violated=bool(margin < -tol),
        worst_time=float(traj.times[worst]),
        tolerance=tol,
        theoretical_loose=loose,
    )


class ShellIntegrals(NamedTuple):
    j: int
    mode: float
    cross: float


def regularity_profile(traj: Trajectory) -> list[ShellIntegrals]:
    """Accumulated time integrals per shell, ready for slope fitting.

    Row j holds (j, integral of u_j^2, integral of u_j^2 u_{j+1}); the cross
    integral of the last shell is NaN since u_{N+1} is truncated away.
    """
    rows = []
    for j in range(traj.params.N + 1):
        cross = float(traj.cross_integrals[j]) if j < traj.params.N else math.nan
        rows.append(ShellIntegrals(j, float(traj.mode_integrals[j]), cross))
    return rows


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    n_points: int
    excluded: tuple


def fit_decay_slope(profile: Sequence, j_min: int, j_max: int) -> SlopeFit:
    """Least-squares slope of log2 I_j against j on the window [j_min, j_max].

    Nonpositive integrals cannot enter the log fit; they are excluded and
    reported.  The cascade picture predicts an upper bound with exponent
    -(2/3)c, so the pass criterion downstream is slope <= -(2/3)c + slack.
    """
    if j_max <= j_min:
        raise ValueError(f"need j_max > j_min, got [{j_min}, {j_max}]")
    js, logs, excluded = [], [], []
    for row in profile:
        j, value = int(row[0]), float(row[1])
        if not j_min <= j <= j_max:
            continue
        if value > 0.0:
            js.append(j)
            logs.append(math.log2(value))
        else:
            excluded.append(j)
    if len(js) < 3:
        raise ValueError(
            f"need at least 3 usable shells in [{j_min}, {j_max}], got {len(js)}"
        )
    x = np.array(js, dtype=float)
    y = np.array(logs)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(residual @ residual) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2, len(js), tuple(excluded))


@dataclass(frozen=True, eq=False)
class CouplingResult:
    """Distance history of two runs driven by the same noise.

    distances[k] = -1/2-norm of u(t_k) - u~(t_k); monotone_violations counts
    increases beyond tol_mono between consecutive saves.
    """

    times: np.ndarray
    distances: np.ndarray
    monotone_violations: int
    initial: float
    final: float
    tol_mono: float

    def __post_init__(self) -> None:
        if self.times.shape != self.distances.shape:
            raise ValueError("times and distances lengths differ")
        if np.any(self.distances < 0.0):
            raise ValueError("distances must be nonnegative")

    @property
    def contracted(self) -> bool:
        return self.final < self.initial


def _half_norm_distance(row_a: np.ndarray, row_b: np.ndarray) -> float:
    return math.sqrt(sobolev_norm_sq(row_a - row_b, CONTRACTION))


def couple(initial_a: ShellState, initial_b: ShellState, params: ModelParams,
           path: NoisePath, config: SchemeConfig = SchemeConfig(), *,
           eps_sup: float = DEFAULT_SUP_MARGIN,
           tol_mono: float | None = None) -> CouplingResult:
    """Run both initial states against the same noise and track their
    -1/2-norm distance (synchronous coupling).

    Requires c < 3: only there does the distance contract.  The default
    monotonicity tolerance absorbs O(dt) discretization wiggles:
    tol_mono = 4 * dt * (1 + K1) with K1 the larger of the two energy-bound
    constants.
    """
    params.require_contractive()
    traj_a = integrate(initial_a, params, path, config)
    traj_b = integrate(initial_b, params, path, config)
    if tol_mono is None:
        a_const = max(
            bound_constant(math.sqrt(sobolev_norm_sq(initial_a)), params.sigma, path, eps_sup),
            bound_constant(math.sqrt(sobolev_norm_sq(initial_b)), params.sigma, path, eps_sup),
        )
        k1, _ = energy_bound_constants(a_const, params.T)
        tol_mono = 4.0 * params.dt * (1.0 + k1)
    distances = np.array([
        _half_norm_distance(ra, rb) for ra, rb in zip(traj_a.states, traj_b.states)
    ])
    violations = int(np.sum(distances[1:] > distances[:-1] + tol_mono))
    return CouplingResult(
        times=traj_a.times,
        distances=distances,
        monotone_violations=violations,
        initial=float(distances[0]),
        final=float(distances[-1]),
        tol_mono=float(tol_mono),
    )


class ContinuityPoint(NamedTuple):
    delta: float
    worst_distance: float


def _probe_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=substream(seed, index)))


def _clamp_to_cone(u: np.ndarray) -> np.ndarray:
    out = u.copy()
    out[1:] = np.maximum(out[1:], 0.0)
    return out


def continuity_modulus(base_initial: ShellState, base_path: NoisePath,
                       params: ModelParams, deltas: Sequence[float], probes: int,
                       seed: int,
                       config: SchemeConfig = SchemeConfig()) -> list[ContinuityPoint]:
    """Worst sup-t -1/2-norm deviation under joint perturbations of size delta.

    For each probe a fixed unit direction v (for the initial state) and a
    fixed sup-normalized bridge eta (for the noise, eta(0) = eta(T) = 0) are
    drawn from streams keyed by (seed, probe).  Rung delta then integrates
    the pair (clamp(u0 + delta*v), w + delta*eta) against the base run, so
    the probe set is nested across rungs and the recorded worst distance
    shrinks with delta.  Perturbation amplitudes sit just inside the open
    delta-balls; clamped initials are re-measured so the ball constraint
    stays honest.
    """
    params.require_contractive()
    if probes < 1:
        raise ValueError(f"need at least one probe, got {probes}")
    deltas = [float(d) for d in deltas]
    if any(d < 0.0 for d in deltas):
        raise ValueError("deltas must be nonnegative")
    if any(b >= a for a, b in zip(deltas, deltas[1:])) and len(deltas) > 1:
        raise ValueError("deltas must be strictly decreasing")
    inside = 1.0 - 1e-12
    base_traj = integrate(base_initial, params, base_path, config)
    n = params.N + 1
    m = base_path.n_steps
    worst = [0.0] * len(deltas)
    for p in range(probes):
        rng = _probe_stream(seed, p)
        v = rng.standard_normal(n)
        norm_v = math.sqrt(float(v @ v))
        if norm_v > 0.0:
            v /= norm_v
        walk = np.concatenate(([0.0], np.cumsum(rng.standard_normal(m)))) * math.sqrt(base_path.dt)
        bridge = walk - (base_path.times / base_path.T) * walk[-1]
        amp = float(np.max(np.abs(bridge)))
        eta = bridge / amp if amp > 0.0 else bridge
        for r, delta in enumerate(deltas):
            if delta == 0.0:
                continue
            u_pert = _clamp_to_cone(base_initial.u + inside * delta * v)
            measured = math.sqrt(sobolev_norm_sq(u_pert - base_initial.u))
            if measured >= delta:
                raise AssertionError("clamped perturbation left the delta-ball")
            w_pert = base_path.values + inside * delta * eta
            pert_path = NoisePath(times=base_path.times, values=w_pert,
                                  dt=base_path.dt, seed=None)
            traj = integrate(ShellState(u_pert), params, pert_path, config)
            sup_dist = max(
                _half_norm_distance(ra, rb)
                for ra, rb in zip(base_traj.states, traj.states)
            )
            worst[r] = max(worst[r], sup_dist)
    return [ContinuityPoint(d, w) for d, w in zip(deltas, worst)]


def distance_series_to_csv(result: CouplingResult, file) -> None:
    """Write the coupling distance history as CSV (t, d)."""
    own = isinstance(file, (str, Path))
    fh = open(file, "w") if own else file
    try:
        fh.write("t,d\n")
        for t, d in zip(result.times, result.distances):
            fh.write(f"{float(t)!r},{float(d)!r}\n")
    finally:
        if own:
            fh.close()
