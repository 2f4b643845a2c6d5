"""Time stepping for the truncated pathwise system.

Three schemes are exposed through `step`/`integrate`:

* explicit-euler: forward Euler plus the noise increment on shell 0, with
  projection (or rejection) when a shell leaves the positive cone;
* semi-implicit: the self-damping factor of each shell is implicit, so the
  cone is preserved without projection.  Both of these require the damping
  rates 2^(cj) u_{j+1} to be resolved by the step (see `stable_dt`):
  under-resolved, the explicitly coupled quadratic transfer can manufacture
  energy and blow up;
* modified-patankar (default): the same implicit damping, but the transfer
  is Patankar-weighted in the shell energies u_j^2, where it is exactly
  pairwise conservative.  Positivity and boundedness then hold at any step
  size, which is what long stiff runs at deep truncation need.

`reference_solve` runs a classical fourth-order method on the pathwise
system with the noise replaced by its piecewise-linear interpolant; it is
the high-accuracy oracle the test suite checks everything else against.

`integrate` advances one step per noise-grid interval and records states on
the coarser grid spaced by params.dt, so refining the path (same
realization, finer grid) tightens the stepping without touching the saved
grid.  params.dt must therefore be an integer multiple of path.dt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import ModelParams, ShellState, Trajectory, drift
from .noise import NoisePath

__all__ = [
    "SchemeConfig",
    "IntegrationError",
    "PositivityError",
    "step",
    "stable_dt",
    "integrate",
    "reference_solve",
    "trajectory_to_csv",
    "trajectory_to_jsonl",
]

SCHEMES = ("modified-patankar", "semi-implicit", "explicit-euler")
POSITIVITY_MODES = ("project", "reject-step")


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection and safety knobs for the production integrator."""

    scheme: str = "modified-patankar"
    positivity: str = "project"
    stiffness_safety: float = 0.5

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.positivity not in POSITIVITY_MODES:
            raise ValueError(
                f"positivity must be one of {POSITIVITY_MODES}, got {self.positivity!r}"
            )
        if not (0.0 < self.stiffness_safety <= 1.0):
            raise ValueError(
                f"stiffness_safety must lie in (0, 1], got {self.stiffness_safety}"
            )


class IntegrationError(RuntimeError):
    """Integration failed; carries the offending time and shell index."""

    def __init__(self, message: str, time: float | None = None, mode: int | None = None):
        detail = message
        if time is not None:
            detail += f" at t={time:.6g}"
        if mode is not None:
            detail += f" on shell {mode}"
        super().__init__(detail)
        self.time = time
        self.mode = mode


class PositivityError(IntegrationError):
    """A step drove some shell j >= 1 negative under reject-step handling."""


def _step_semi_implicit(u: np.ndarray, g: np.ndarray, q: np.ndarray, sigma: float,
                        dW: float, dt: float) -> np.ndarray:
    n = u.size
    new = u.copy()
    u0_new = new[0] - dt * new[0] * new[1] + sigma * dW
    prev = new[0]
    for j in range(1, n):
        nxt = new[j + 1] if j + 1 < n else 0.0
        num = new[j] + dt * g[j - 1] * prev * prev
        prev = new[j]
        new[j] = num / (1.0 + dt * q[j - 1] * nxt)
    new[0] = u0_new
    return new


def _step_modified_patankar(u: np.ndarray, g: np.ndarray, q: np.ndarray, sigma: float,
                            dW: float, dt: float) -> np.ndarray:
    n = u.size
    e = u * u
    e_new = np.empty(n)
    e_new[0] = e[0] / (1.0 + 2.0 * dt * u[1])
    for j in range(1, n):
        nxt = u[j + 1] if j + 1 < n else 0.0
        prod = 2.0 * dt * g[j - 1] * u[j] * e_new[j - 1]
        e_new[j] = (e[j] + prod) / (1.0 + 2.0 * dt * q[j - 1] * nxt)
    new = np.sqrt(e_new)
    sign0 = 1.0 if u[0] >= 0.0 else -1.0
    new[0] = sign0 * new[0] + sigma * dW
    for j in range(1, n):
        if u[j] == 0.0 and u[j - 1] != 0.0:
            nxt = u[j + 1] if j + 1 < n else 0.0
            seed = dt * g[j - 1] * u[j - 1] * u[j - 1] / (1.0 + dt * q[j - 1] * nxt)
            cap = abs(u[j - 1])
            if seed > cap:
                seed = cap
            if new[j] < seed:
                new[j] = seed
    return new


def step(state: ShellState, params: ModelParams, dW: float,
         config: SchemeConfig = SchemeConfig()) -> ShellState:
    """Advance one step of length params.dt with noise increment dW.

    explicit-euler:     u' = u + dt*drift(u), then sigma*dW on shell 0, then
    positivity handling on shells j >= 1 (clamp or reject).
    semi-implicit:      u'_j = (u_j + dt*2^(c(j-1)) u_{j-1}^2)
                               / (1 + dt*2^(cj) u_{j+1})  for j >= 1,
    with shell 0 explicit including the noise; nonnegativity is automatic.
    modified-patankar:  the same implicit damping applied to the shell
    energies with Patankar-weighted conservative transfer (see the module
    docstring); nonnegativity and boundedness hold at any step size.
    """
    if not math.isfinite(dW):
        raise ValueError(f"noise increment must be finite, got {dW}")
    u = state.u
    if u.size != params.N + 1:
        raise ValueError(
            f"state has {u.size} shells but params.N={params.N} expects {params.N + 1}"
        )
    dt = params.dt
    g = params.growth_weights
    q = params.damping_weights
    if config.scheme == "explicit-euler":
        new = u + dt * drift(state, params)
        new[0] += params.sigma * dW
        negative = np.flatnonzero(new[1:] < 0.0) + 1
        if negative.size:
            if config.positivity == "reject-step":
                raise PositivityError(
                    "explicit step left the positive cone", mode=int(negative[0])
                )
            new[negative] = 0.0
    elif config.scheme == "semi-implicit":
        new = _step_semi_implicit(u, g, q, params.sigma, dW, dt)
    else:
        new = _step_modified_patankar(u, g, q, params.sigma, dW, dt)
    if not np.all(np.isfinite(new)):
        raise IntegrationError("non-finite state", mode=int(np.flatnonzero(~np.isfinite(new))[0]))
    return ShellState(new)


def stable_dt(params: ModelParams, energy_bound: float,
              config: SchemeConfig = SchemeConfig()) -> float:
    """Step-size gate derived from the a-priori energy bound.

    The fastest damping rate any shell can see is 2^(cN) * ||u||, so the
    explicit scheme is gated at theta / (2^(cN) * sqrt(energy_bound)).  The
    semi-implicit scheme must still resolve those rates to keep its
    explicitly coupled transfer honest, but the truncation zeroes the
    damping of the last shell, so its gate relaxes by one shell (capped at
    theta).  The modified-patankar scheme is positive and bounded at any
    step; its gate only protects accuracy of the slow scales, whose rates
    are at most ||u||.
    """
    if not (energy_bound > 0.0 and math.isfinite(energy_bound)):
        raise ValueError(f"energy_bound must be finite and > 0, got {energy_bound}")
    theta = config.stiffness_safety
    root = math.sqrt(energy_bound)
    explicit_gate = theta / (2.0 ** (params.c * params.N) * root)
    if config.scheme == "explicit-euler":
        return explicit_gate
    if config.scheme == "semi-implicit":
        return theta * min(1.0, explicit_gate * 2.0 ** params.c)
    return theta * min(1.0, 1.0 / root)


def _save_indices(n_steps: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    if idx[-1] != n_steps:
        idx = np.append(idx, np.int64(n_steps))
    return idx


def _check_grids(params: ModelParams, path: NoisePath) -> int:
    if abs(path.T - params.T) > 1e-9 * max(params.T, 1.0):
        raise ValueError(f"path covers [0, {path.T}] but params.T={params.T}")
    ratio = params.dt / path.dt
    stride = round(ratio)
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(ratio, 1.0):
        raise ValueError(
            f"path.dt={path.dt} must divide params.dt={params.dt} (or equal it)"
        )
    return stride


def integrate(initial: ShellState, params: ModelParams, path: NoisePath,
              config: SchemeConfig = SchemeConfig()) -> Trajectory:
    """Integrate from t=0 to t=T along one noise realization.

    One step is taken per noise-grid interval (increments of the path supply
    dW); states are recorded every params.dt plus at the final time.  The
    per-shell integrals of u_j^2 and u_j^2 u_{j+1} are accumulated with the
    trapezoidal rule at the stepping resolution, and the number of
    positivity projections performed is recorded on the trajectory.
    """
    u0 = initial.u
    if u0.size != params.N + 1:
        raise ValueError(
            f"initial state has {u0.size} shells but params.N={params.N} expects {params.N + 1}"
        )
    stride = _check_grids(params, path)
    save_idx = _save_indices(path.n_steps, stride)
    n = params.N + 1
    states = np.empty((save_idx.size, n))
    mode_acc = np.zeros(n)
    cross_acc = np.zeros(n - 1)
    g = params.growth_weights
    q = params.damping_weights
    dw = path.increments()
    if config.scheme == "explicit-euler":
        status, k, mode, n_proj = _kernels.run_explicit_euler(
            u0, g, q, params.sigma, dw, path.dt, save_idx, states, mode_acc, cross_acc,
            config.positivity == "reject-step",
        )
    elif config.scheme == "semi-implicit":
        status, k, mode, n_proj = _kernels.run_semi_implicit(
            u0, g, q, params.sigma, dw, path.dt, save_idx, states, mode_acc, cross_acc,
        )
    else:
        status, k, mode, n_proj = _kernels.run_modified_patankar(
            u0, g, q, params.sigma, dw, path.dt, save_idx, states, mode_acc, cross_acc,
        )
    if status == _kernels.STATUS_NONFINITE:
        raise IntegrationError("non-finite state (stiffness overflow)",
                               time=float(path.times[k]), mode=mode)
    if status == _kernels.STATUS_POSITIVITY:
        raise PositivityError("step left the positive cone",
                              time=float(path.times[k]), mode=mode)
    return Trajectory(
        params=params,
        times=path.times[save_idx],
        states=states,
        mode_integrals=mode_acc,
        cross_integrals=cross_acc,
        n_projections=int(n_proj),
    )


def reference_solve(initial: ShellState, params: ModelParams, path: NoisePath, *,
                    accuracy: float = 0.02, dt_ref: float | None = None) -> Trajectory:
    """High-accuracy oracle for the same run (fourth-order, substepped).

    Once the noise is fixed the system is an ordinary differential system
    with the path's piecewise-linear interpolant feeding shell 0, and a
    classical Runge-Kutta sweep applies.  Substeps within each noise
    interval keep h * (fastest damping rate) <= accuracy, or follow dt_ref
    exactly when given.  Serves as ground truth for derived expected values
    and convergence tests.
    """
    u0 = initial.u
    if u0.size != params.N + 1:
        raise ValueError(
            f"initial state has {u0.size} shells but params.N={params.N} expects {params.N + 1}"
        )
    if dt_ref is not None and not (0.0 < dt_ref <= path.dt):
        raise ValueError(f"dt_ref must lie in (0, path.dt], got {dt_ref}")
    if not (0.0 < accuracy <= 1.0):
        raise ValueError(f"accuracy must lie in (0, 1], got {accuracy}")
    stride = _check_grids(params, path)
    save_idx = _save_indices(path.n_steps, stride)
    n = params.N + 1
    states = np.empty((save_idx.size, n))
    mode_acc = np.zeros(n)
    cross_acc = np.zeros(n - 1)
    status, k, mode, n_proj = _kernels.run_reference_rk4(
        u0, params.growth_weights, params.damping_weights, params.sigma, path.values,
        path.dt, accuracy, 0.0 if dt_ref is None else dt_ref, save_idx, states,
        mode_acc, cross_acc,
    )
    if status == _kernels.STATUS_NONFINITE:
        raise IntegrationError("non-finite state (stiffness overflow)",
                               time=float(path.times[k]), mode=mode)
    return Trajectory(
        params=params,
        times=path.times[save_idx],
        states=states,
        mode_integrals=mode_acc,
        cross_integrals=cross_acc,
        n_projections=int(n_proj),
    )


def _thin_indices(n_rows: int, every: int) -> np.ndarray:
    if every < 1:
        raise ValueError(f"thinning stride must be >= 1, got {every}")
    idx = np.arange(0, n_rows, every)
    if idx[-1] != n_rows - 1:
        idx = np.append(idx, n_rows - 1)
    return idx


def trajectory_to_csv(traj: Trajectory, file, every: int = 1) -> None:
    """Write saved states as CSV (t, u_0..u_N) at full round-trip precision.

    `every` keeps one row in `every` (the final row is always kept).
    """
    idx = _thin_indices(len(traj), every)
    own = isinstance(file, (str, Path))
    fh = open(file, "w") if own else file
    try:
        fh.write("t," + ",".join(f"u_{j}" for j in range(traj.params.N + 1)) + "\n")
        for k in idx:
            row = ",".join(repr(float(v)) for v in traj.states[k])
            fh.write(f"{float(traj.times[k])!r},{row}\n")
    finally:
        if own:
            fh.close()


def trajectory_to_jsonl(traj: Trajectory, file, every: int = 1) -> None:
    """Write one JSON record per saved time: {"t": ..., "u": [...]}."""
    idx = _thin_indices(len(traj), every)
    own = isinstance(file, (str, Path))
    fh = open(file, "w") if own else file
    try:
        for k in idx:
            fh.write(json.dumps({"t": float(traj.times[k]),
                                 "u": [float(v) for v in traj.states[k]]}) + "\n")
    finally:
        if own:
            fh.close()
