"""Core types, norms and vector fields for the truncated dyadic cascade.

The model is an infinite chain of scalar shells u_0, u_1, ... in which
energy moves upward only (all shells j >= 1 stay nonnegative) and a scalar
white-noise force acts on shell 0.  Everything here works on the Galerkin
truncation that keeps shells 0..N and sets u_{N+1} identically to zero,
which preserves the exact telescoping of the energy budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ModelParams",
    "ShellState",
    "SobolevIndex",
    "Trajectory",
    "ENERGY",
    "CONTRACTION",
    "drift",
    "sobolev_norm_sq",
    "flux",
]

C_MIN, C_MAX = 1.0, 3.0


@dataclass(frozen=True)
class ModelParams:
    """Static parameters of one truncated run.

    c      intermittency exponent: shell couplings grow like 2^(c*j)
    sigma  amplitude of the white noise on shell 0 (state units / sqrt(time))
    T      time horizon
    N      truncation level (shells 0..N are kept)
    dt     spacing of the saved/trajectory grid
    """

    c: float
    sigma: float
    T: float
    N: int
    dt: float

    def __post_init__(self) -> None:
        if not (C_MIN <= self.c <= C_MAX):
            raise ValueError(f"c must lie in [{C_MIN}, {C_MAX}], got {self.c}")
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError(f"T must be finite and > 0, got {self.T}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N!r}")
        if not (0.0 < self.dt <= self.T):
            raise ValueError(f"dt must satisfy 0 < dt <= T, got dt={self.dt}, T={self.T}")

    def require_contractive(self) -> None:
        """Reject parameters outside the range where the -1/2-norm contraction
        and stationary-uniqueness statements hold (c must be strictly below 3)."""
        if self.c >= C_MAX:
            raise ValueError(
                f"this operation requires c < {C_MAX} (contraction range), got c={self.c}"
            )

    @cached_property
    def growth_weights(self) -> np.ndarray:
        """2^(c*(j-1)) for j = 1..N: coefficient of the u_{j-1}^2 source."""
        w = 2.0 ** (self.c * np.arange(self.N))
        w.flags.writeable = False
        return w

    @cached_property
    def damping_weights(self) -> np.ndarray:
        """2^(c*j) for j = 1..N: coefficient of the u_j u_{j+1} drain."""
        w = 2.0 ** (self.c * np.arange(1, self.N + 1))
        w.flags.writeable = False
        return w


def _as_readonly_vector(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite everywhere")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ShellState:
    """One point of the truncated system: shells u_0..u_N.

    Shell 0 may take any sign; shells j >= 1 must be nonnegative (the cone
    that makes the energy flux one-directional).
    """

    u: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_readonly_vector(self.u, "u")
        if arr.size < 2:
            raise ValueError(f"state needs at least shells 0 and 1, got length {arr.size}")
        if np.any(arr[1:] < 0.0):
            j = int(np.argmax(arr[1:] < 0.0)) + 1
            raise ValueError(f"shell {j} is negative ({arr[j]}); shells j >= 1 must be >= 0")
        object.__setattr__(self, "u", arr)

    def __len__(self) -> int:
        return self.u.size

    def __getitem__(self, j):
        return self.u[j]

    @property
    def n_shells(self) -> int:
        """Truncation level N (the state holds N+1 shells)."""
        return self.u.size - 1


@dataclass(frozen=True)
class SobolevIndex:
    """Exponent of the weighted norm sum_j 2^(2*alpha*j) u_j^2."""

    alpha: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")


ENERGY = SobolevIndex(0.0)
CONTRACTION = SobolevIndex(-0.5)


def _coefficients(state) -> np.ndarray:
    return state.u if isinstance(state, ShellState) else np.asarray(state, dtype=float)


def sobolev_norm_sq(state, alpha: SobolevIndex | float = ENERGY) -> float:
    """Squared weighted norm sum_{j=0}^{N} 2^(2*alpha*j) u_j^2.

    alpha = 0 gives the squared l2 norm (energy); alpha = -1/2 the metric in
    which synchronous coupling contracts.  Terms are accumulated exactly
    (fsum) from the tail up, so the wide dynamic range of the weights cannot
    cancel catastrophically.
    """
    a = alpha.alpha if isinstance(alpha, SobolevIndex) else float(alpha)
    u = _coefficients(state)
    terms = (4.0 ** (a * np.arange(u.size))) * u * u
    return math.fsum(terms[::-1])


def drift(state: ShellState, params: ModelParams) -> np.ndarray:
    """Deterministic vector field of the truncated chain (noise excluded).

    d_0 = -u_0 u_1
    d_j = -2^(c*j) u_j u_{j+1} + 2^(c*(j-1)) u_{j-1}^2   for 1 <= j <= N-1
    d_N =  2^(c*(N-1)) u_{N-1}^2                          (u_{N+1} == 0)
    """
    u = _coefficients(state)
    if u.size != params.N + 1:
        raise ValueError(
            f"state has {u.size} shells but params.N={params.N} expects {params.N + 1}"
        )
    d = np.empty_like(u)
    d[0] = -u[0] * u[1]
    d[1:] = params.growth_weights * u[:-1] * u[:-1]
    if params.N >= 2:
        d[1:-1] -= params.damping_weights[:-1] * u[1:-1] * u[2:]
    return d


def flux(state: ShellState, j: int, params: ModelParams) -> float:
    """Energy flowing past shell j per unit time: 2^(c*j+1) u_j^2 u_{j+1}.

    Nonnegative on the positive cone (u_0 enters squared).  Defined for
    0 <= j <= N-1; the flux past shell N vanishes under the truncation.
    """
    u = _coefficients(state)
    if u.size != params.N + 1:
        raise ValueError(
            f"state has {u.size} shells but params.N={params.N} expects {params.N + 1}"
        )
    if not 0 <= j <= params.N - 1:
        raise ValueError(f"flux index must satisfy 0 <= j <= N-1={params.N - 1}, got {j}")
    return float(2.0 ** (params.c * j + 1.0) * u[j] * u[j] * u[j + 1])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-indexed solution states plus running per-shell time integrals.

    states[k] is the solution at times[k]; rows live on the grid spaced by
    params.dt (the final interval may be shorter when dt does not divide T).
    mode_integrals[j] approximates the integral of u_j^2 over [0, T] and
    cross_integrals[j] the integral of u_j^2 u_{j+1}; both are accumulated
    with the trapezoidal rule at the full stepping resolution of the run.
    n_projections counts positivity clamps performed by the scheme.
    """

    params: ModelParams
    times: np.ndarray
    states: np.ndarray
    mode_integrals: np.ndarray
    cross_integrals: np.ndarray
    n_projections: int = 0

    def __post_init__(self) -> None:
        times = _as_readonly_vector(self.times, "times")
        I = _as_readonly_vector(self.mode_integrals, "mode_integrals")
        J = _as_readonly_vector(self.cross_integrals, "cross_integrals")
        states = np.array(self.states, dtype=float)
        n = self.params.N + 1
        if states.ndim != 2 or states.shape[1] != n:
            raise ValueError(f"states must have shape (M, {n}), got {states.shape}")
        if states.shape[0] != times.size:
            raise ValueError("states and times lengths differ")
        if times.size < 2 or times[0] != 0.0:
            raise ValueError("times must start at 0 and hold at least two points")
        gaps = np.diff(times)
        if np.any(gaps <= 0.0):
            raise ValueError("times must be strictly increasing")
        dt = self.params.dt
        tol = 1e-9 * max(dt, 1.0)
        if gaps.size > 1 and np.any(np.abs(gaps[:-1] - dt) > tol):
            raise ValueError("interior time gaps must equal params.dt")
        if gaps[-1] > dt + tol:
            raise ValueError("final time gap may be shorter than params.dt but not longer")
        if not np.all(np.isfinite(states)):
            raise ValueError("states must be finite")
        if np.any(states[:, 1:] < 0.0):
            raise ValueError("states must stay in the positive cone on shells j >= 1")
        if I.size != n or J.size != n - 1:
            raise ValueError("integral arrays have the wrong length")
        if np.any(I < 0.0) or np.any(J < 0.0):
            raise ValueError("accumulated integrals must be nonnegative")
        states.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mode_integrals", I)
        object.__setattr__(self, "cross_integrals", J)

    def __len__(self) -> int:
        return self.times.size

    def state_at(self, k: int) -> ShellState:
        return ShellState(self.states[k])

    @property
    def final_state(self) -> ShellState:
        return ShellState(self.states[-1])

    def energy_series(self) -> np.ndarray:
        """Squared l2 norm at every saved time."""
        return np.einsum("ij,ij->i", self.states, self.states)
