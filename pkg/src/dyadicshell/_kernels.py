"""Jitted stepping loops shared by the integrators.

All kernels march one noise realization and accumulate the per-shell time
integrals (trapezoidal rule at the stepping resolution) while writing states
into a preallocated save buffer.  They return a status tuple
(status, step, mode, n_projections) with status 0 = ok, 1 = non-finite value
detected, 2 = positivity rejection; step/mode locate the failure.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_POSITIVITY = 2


@njit(cache=True)
def _drift_into(u, g, q, out):
    n = u.shape[0]
    out[0] = -u[0] * u[1]
    for j in range(1, n):
        grow = g[j - 1] * u[j - 1] * u[j - 1]
        if j + 1 < n:
            out[j] = grow - q[j - 1] * u[j] * u[j + 1]
        else:
            out[j] = grow
    return out


@njit(cache=True)
def _accumulate(u, weight, mode_acc, cross_acc):
    n = u.shape[0]
    for j in range(n):
        mode_acc[j] += weight * u[j] * u[j]
    for j in range(n - 1):
        cross_acc[j] += weight * u[j] * u[j] * u[j + 1]


@njit(cache=True)
def _first_bad_mode(u):
    for j in range(u.shape[0]):
        if not np.isfinite(u[j]):
            return j
    return -1


@njit(cache=True)
def run_semi_implicit(u_init, g, q, sigma, dw, dt, save_idx, states, mode_acc, cross_acc):
    """March the scheme whose self-damping factor is implicit on shells j >= 1.

    u0 is advanced explicitly and receives the noise increment; every other
    shell solves u' = (u + dt*g*prev^2) / (1 + dt*q*next) with prev and next
    frozen at the old level, so the cone u_j >= 0 is preserved exactly.
    """
    n = u_init.shape[0]
    u = u_init.copy()
    states[0] = u
    si = 1
    for k in range(dw.shape[0]):
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        u0_new = u[0] - dt * u[0] * u[1] + sigma * dw[k]
        prev = u[0]
        for j in range(1, n):
            nxt = u[j + 1] if j + 1 < n else 0.0
            num = u[j] + dt * g[j - 1] * prev * prev
            prev = u[j]
            u[j] = num / (1.0 + dt * q[j - 1] * nxt)
        u[0] = u0_new
        bad = _first_bad_mode(u)
        if bad >= 0:
            return STATUS_NONFINITE, k, bad, 0
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        if si < save_idx.shape[0] and save_idx[si] == k + 1:
            states[si] = u
            si += 1
    return STATUS_OK, -1, -1, 0


@njit(cache=True)
def run_explicit_euler(u_init, g, q, sigma, dw, dt, save_idx, states, mode_acc, cross_acc, reject):
    """Forward Euler plus the noise increment on shell 0.

    Negative shells j >= 1 are clamped to zero (counted) unless reject is
    set, in which case the step reports a positivity rejection instead.
    """
    n = u_init.shape[0]
    u = u_init.copy()
    d = np.empty(n)
    states[0] = u
    si = 1
    n_proj = 0
    for k in range(dw.shape[0]):
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        _drift_into(u, g, q, d)
        for j in range(n):
            u[j] += dt * d[j]
        u[0] += sigma * dw[k]
        for j in range(1, n):
            if u[j] < 0.0:
                if reject:
                    return STATUS_POSITIVITY, k, j, n_proj
                u[j] = 0.0
                n_proj += 1
        bad = _first_bad_mode(u)
        if bad >= 0:
            return STATUS_NONFINITE, k, bad, n_proj
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        if si < save_idx.shape[0] and save_idx[si] == k + 1:
            states[si] = u
            si += 1
    return STATUS_OK, -1, -1, n_proj


@njit(cache=True)
def run_modified_patankar(u_init, g, q, sigma, dw, dt, save_idx, states, mode_acc, cross_acc):
    """March the conservative positivity-preserving scheme.

    The shell-to-shell transfer is pairwise conservative in the energies
    e_j = u_j^2 (shell j-1 loses exactly what shell j gains), so one sweep
    of Patankar-weighted updates
        e'_j = (e_j + 2 dt g_j u_j e'_{j-1}) / (1 + 2 dt q_j u_{j+1})
    keeps every shell nonnegative and the total energy exactly constant
    (up to the noise pumped into shell 0) at ANY step size: unlike the
    plain semi-implicit scheme it cannot manufacture energy when the
    damping rates 2^(cj) u_{j+1} are far under-resolved.  Shells sitting at
    exactly zero have a degenerate production weight and are seeded with
    one damped explicit increment, capped at the donor amplitude (the
    continuous escape from zero is throttled by donor drain on exactly that
    scale), so the cascade front can leave them without injecting energy
    beyond the donor's own.
    """
    n = u_init.shape[0]
    u = u_init.copy()
    uold = np.empty(n)
    e = np.empty(n)
    e_new = np.empty(n)
    states[0] = u
    si = 1
    for k in range(dw.shape[0]):
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        for j in range(n):
            uold[j] = u[j]
            e[j] = u[j] * u[j]
        e_new[0] = e[0] / (1.0 + 2.0 * dt * uold[1])
        for j in range(1, n):
            nxt = uold[j + 1] if j + 1 < n else 0.0
            prod = 2.0 * dt * g[j - 1] * uold[j] * e_new[j - 1]
            e_new[j] = (e[j] + prod) / (1.0 + 2.0 * dt * q[j - 1] * nxt)
        sign0 = 1.0 if uold[0] >= 0.0 else -1.0
        u[0] = sign0 * np.sqrt(e_new[0]) + sigma * dw[k]
        for j in range(1, n):
            u[j] = np.sqrt(e_new[j])
        for j in range(1, n):
            if uold[j] == 0.0 and uold[j - 1] != 0.0:
                nxt = uold[j + 1] if j + 1 < n else 0.0
                seed = dt * g[j - 1] * uold[j - 1] * uold[j - 1] / (1.0 + dt * q[j - 1] * nxt)
                cap = abs(uold[j - 1])
                if seed > cap:
                    seed = cap
                if u[j] < seed:
                    u[j] = seed
        bad = _first_bad_mode(u)
        if bad >= 0:
            return STATUS_NONFINITE, k, bad, 0
        _accumulate(u, 0.5 * dt, mode_acc, cross_acc)
        if si < save_idx.shape[0] and save_idx[si] == k + 1:
            states[si] = u
            si += 1
    return STATUS_OK, -1, -1, 0


@njit(cache=True)
def run_reference_rk4(u_init, g, q, sigma, w_values, dt_path, eta, dt_ref, save_idx, states,
                      mode_acc, cross_acc):
    """Classical fourth-order sweep of the pathwise system.

    Within each noise-grid interval the path is replaced by its linear
    interpolant, so the forcing enters shell 0 as the constant derivative
    sigma * (w_{k+1} - w_k) / dt.  Substeps per interval come from dt_ref
    when given, otherwise from the current fastest damping rate rho so that
    h * rho <= eta.  Roundoff-level undershoots of the positive cone are
    clamped (counted in the projection tally).
    """
    n = u_init.shape[0]
    u = u_init.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    states[0] = u
    si = 1
    n_proj = 0
    for k in range(w_values.shape[0] - 1):
        slope = (w_values[k + 1] - w_values[k]) / dt_path
        if dt_ref > 0.0:
            n_sub = int(np.ceil(dt_path / dt_ref - 1e-12))
        else:
            rho = abs(u[1])
            for j in range(1, n - 1):
                rate = q[j - 1] * u[j + 1]
                if rate > rho:
                    rho = rate
            n_sub = int(np.ceil(dt_path * rho / eta)) if rho > 0.0 else 1
        if n_sub < 1:
            n_sub = 1
        h = dt_path / n_sub
        for _ in range(n_sub):
            _accumulate(u, 0.5 * h, mode_acc, cross_acc)
            _drift_into(u, g, q, k1)
            k1[0] += sigma * slope
            for j in range(n):
                tmp[j] = u[j] + 0.5 * h * k1[j]
            _drift_into(tmp, g, q, k2)
            k2[0] += sigma * slope
            for j in range(n):
                tmp[j] = u[j] + 0.5 * h * k2[j]
            _drift_into(tmp, g, q, k3)
            k3[0] += sigma * slope
            for j in range(n):
                tmp[j] = u[j] + h * k3[j]
            _drift_into(tmp, g, q, k4)
            k4[0] += sigma * slope
            for j in range(n):
                u[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for j in range(1, n):
                if u[j] < 0.0:
                    u[j] = 0.0
                    n_proj += 1
            bad = _first_bad_mode(u)
            if bad >= 0:
                return STATUS_NONFINITE, k, bad, n_proj
            _accumulate(u, 0.5 * h, mode_acc, cross_acc)
        if si < save_idx.shape[0] and save_idx[si] == k + 1:
            states[si] = u
            si += 1
    return STATUS_OK, -1, -1, n_proj
