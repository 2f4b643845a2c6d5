"""Acceptance suite: one test per certification criterion.

Each test prints a PASS/FAIL line (visible under pytest -s) and asserts both
the quantitative criterion and its runtime budget.  Criteria 3 and 4 share
one Monte Carlo batch.  All seeds are fixed, so the suite is deterministic.
"""

import itertools
import math
import time

import numpy as np
import pytest

from dyadicshell import (
    CONTRACTION,
    EmpiricalMeasure,
    ModelParams,
    SchemeConfig,
    ShellState,
    bound_constant,
    check_energy_bound,
    check_u0_bound,
    continuity_modulus,
    couple,
    energy_bound_constants,
    fit_decay_slope,
    integrate,
    reference_solve,
    regularity_profile,
    sample_brownian,
    sobolev_norm_sq,
    stable_dt,
    uniqueness_experiment,
    wasserstein2,
)

SEMI = SchemeConfig(scheme="semi-implicit")
EULER = SchemeConfig(scheme="explicit-euler")
MP = SchemeConfig(scheme="modified-patankar")


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"[criterion {criterion:2d}] {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


def profile_state(n_shells: int, seed: int, amp: float) -> ShellState:
    rng = np.random.default_rng(seed)
    xi = rng.uniform(0.5, 1.5, n_shells + 1)
    return ShellState(amp * 2.0 ** (-np.arange(n_shells + 1, dtype=float)) * xi)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # compile/load all stepping kernels and touch the hot numpy paths before
    # any runtime budget is measured
    p = ModelParams(c=2.0, sigma=1.0, T=0.02, N=2, dt=0.01)
    path = sample_brownian(0.02, 0.01, 0)
    init = ShellState([0.1, 0.05, 0.0])
    for cfg in (SEMI, EULER, MP):
        integrate(init, p, path, cfg)
    reference_solve(init, p, path)
    p1 = ModelParams(c=2.0, sigma=0.0, T=0.1, N=1, dt=1e-4)
    warm = integrate(ShellState([1.0, 0.0]), p1, sample_brownian(0.1, 1e-6, 0), SEMI)
    np.cosh(warm.times)
    np.tanh(warm.times)


def test_c01_closed_form_oracle():
    budget = 1.0
    started = time.time()
    p = ModelParams(c=2.0, sigma=0.0, T=1.0, N=1, dt=1e-4)
    init = ShellState([1.0, 0.0])
    traj = integrate(init, p, sample_brownian(1.0, 1e-6, 0), SEMI)
    t = traj.times
    err_int = max(
        float(np.max(np.abs(traj.states[:, 0] - 1.0 / np.cosh(t)))),
        float(np.max(np.abs(traj.states[:, 1] - np.tanh(t)))),
    )
    ref = reference_solve(init, p, sample_brownian(1.0, 1e-4, 0), dt_ref=1e-5)
    err_ref = max(
        float(np.max(np.abs(ref.states[:, 0] - 1.0 / np.cosh(ref.times)))),
        float(np.max(np.abs(ref.states[:, 1] - np.tanh(ref.times)))),
    )
    elapsed = time.time() - started
    ok = err_int <= 1e-6 and err_ref <= 1e-10 and elapsed < budget
    report(1, ok, f"sup err integrator {err_int:.2e} (<=1e-6), "
                  f"reference {err_ref:.2e} (<=1e-10), {elapsed:.2f}s")


def test_c02_truncated_conservation():
    budget = 10.0
    started = time.time()
    dt = 1e-3
    worst = []
    for n_shells in (5, 20):
        init = profile_state(n_shells, seed=42, amp=0.05)
        p = ModelParams(c=1.0, sigma=0.0, T=5.0, N=n_shells, dt=dt)
        path = sample_brownian(5.0, dt, 1)
        a = bound_constant(math.sqrt(sobolev_norm_sq(init)), 0.0, path)
        k1, _ = energy_bound_constants(a, 5.0)
        traj = integrate(init, p, path, EULER)
        energy = traj.energy_series()
        drift_euler = float(np.max(np.abs(energy - energy[0])))
        ref = reference_solve(init, p, path)
        ref_energy = ref.energy_series()
        drift_ref = float(np.max(np.abs(ref_energy - ref_energy[0])))
        worst.append((n_shells, drift_euler, 10.0 * dt * k1, drift_ref))
    elapsed = time.time() - started
    ok = all(de <= lim and dr <= 1e-9 for _, de, lim, dr in worst) and elapsed < budget
    detail = "; ".join(f"N={n}: euler {de:.2e}<={lim:.2e}, ref {dr:.2e}<=1e-9"
                       for n, de, lim, dr in worst)
    report(2, ok, f"{detail}; {elapsed:.1f}s")


@pytest.fixture(scope="module")
def bound_batch():
    # shared 100-seed batch for criteria 3 and 4: N=20, c in {1,2,3}, sigma=1
    started = time.time()
    reports = []
    for c in (1.0, 2.0, 3.0):
        p = ModelParams(c=c, sigma=1.0, T=5.0, N=20, dt=1e-3)
        for seed in range(100):
            init = profile_state(20, seed=seed, amp=1.0)
            path = sample_brownian(5.0, 1e-3, seed)
            traj = integrate(init, p, path, MP)
            inorm = math.sqrt(sobolev_norm_sq(init))
            reports.append((
                check_u0_bound(traj, path, inorm),
                check_energy_bound(traj, path, inorm),
            ))
    return reports, time.time() - started


def test_c03_energy_bound(bound_batch):
    reports, elapsed = bound_batch
    violations = sum(energy.violated for _, energy in reports)
    margin = min(energy.margin for _, energy in reports)
    ok = violations == 0 and elapsed < 300.0
    report(3, ok, f"{len(reports)} runs, {violations} energy-bound violations, "
                  f"min margin {margin:.3g}, batch {elapsed:.1f}s")


def test_c04_u0_bound(bound_batch):
    reports, elapsed = bound_batch
    violations = sum(u0.violated for u0, _ in reports)
    margin = min(u0.margin for u0, _ in reports)
    ok = violations == 0 and elapsed < 300.0
    report(4, ok, f"{len(reports)} runs, {violations} shell-0 bound violations, "
                  f"min margin {margin:.3g}, batch {elapsed:.1f}s")


def test_c05_coupling_contraction():
    budget = 300.0
    started = time.time()
    dt = 1e-3
    p = ModelParams(c=2.0, sigma=1.0, T=2.0, N=20, dt=dt)
    bad = []
    for seed in range(50):
        init_a = profile_state(20, seed=seed, amp=1.0)
        init_b = profile_state(20, seed=5000 + seed, amp=0.6)
        path = sample_brownian(2.0, dt, seed)
        norm = max(math.sqrt(sobolev_norm_sq(init_a)), math.sqrt(sobolev_norm_sq(init_b)))
        k1, _ = energy_bound_constants(bound_constant(norm, 1.0, path), 2.0)
        gate = stable_dt(p, k1, MP)
        result = couple(init_a, init_b, p, path, MP)
        if not (dt <= gate and result.monotone_violations == 0 and result.contracted):
            bad.append(seed)
    elapsed = time.time() - started
    ok = not bad and elapsed < budget
    report(5, ok, f"50 pairs, step under gate, zero monotonicity violations, "
                  f"d(T) < d(0) everywhere (failures: {bad}), {elapsed:.1f}s")


def test_c06_regularity_exponent():
    budget = 600.0
    started = time.time()
    dt = 2e-3
    burn = ModelParams(c=2.0, sigma=1.0, T=20.0, N=20, dt=dt)
    state = integrate(profile_state(20, seed=3, amp=0.5), burn,
                      sample_brownian(20.0, dt, 1001), MP).final_state
    main = ModelParams(c=2.0, sigma=1.0, T=200.0, N=20, dt=dt)
    traj = integrate(state, main, sample_brownian(200.0, dt, 1002), MP)
    fit = fit_decay_slope(regularity_profile(traj), 3, 14)
    threshold = -(2.0 / 3.0) * 2.0 + 0.2
    elapsed = time.time() - started
    ok = fit.slope <= threshold and elapsed < budget
    report(6, ok, f"slope {fit.slope:.3f} <= {threshold:.3f} "
                  f"(r2 {fit.r2:.3f}, window [3,14]), {elapsed:.1f}s")


def test_c07_continuity_modulus():
    budget = 600.0
    started = time.time()
    p = ModelParams(c=2.0, sigma=1.0, T=2.0, N=20, dt=1e-3)
    base_init = profile_state(20, seed=11, amp=0.5)
    base_path = sample_brownian(2.0, 1e-3, 99)
    points = continuity_modulus(base_init, base_path, p,
                                (0.4, 0.2, 0.1, 0.05), probes=8, seed=7, config=MP)
    values = [pt.worst_distance for pt in points]
    elapsed = time.time() - started
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    ok = decreasing and elapsed < budget
    report(7, ok, "worst sup-distance per delta: " +
           ", ".join(f"{pt.delta:g}->{pt.worst_distance:.4f}" for pt in points) +
           f", strictly decreasing: {decreasing}, {elapsed:.1f}s")


def test_c08_uniqueness_experiment():
    budget = 900.0
    started = time.time()
    p = ModelParams(c=2.0, sigma=1.0, T=8.0, N=20, dt=1e-3)
    init_a = profile_state(20, seed=21, amp=1.0)
    init_b = ShellState(np.zeros(21))
    res = uniqueness_experiment(init_a, init_b, p, (1.0, 2.0, 4.0, 8.0),
                                n_samples=64, seed=123, config=MP)
    mean, cloud = res.mean_coupled_sq, res.cloud_w2
    decreasing = bool(np.all(np.diff(mean) < 0.0) and np.all(np.diff(cloud) < 0.0))
    dominated = bool(np.all(cloud <= mean + 1e-15))
    ratio_mean = mean[-1] / mean[0]
    ratio_cloud = cloud[-1] / cloud[0]
    elapsed = time.time() - started
    ok = decreasing and dominated and ratio_mean < 0.5 and ratio_cloud < 0.5 \
        and elapsed < budget
    report(8, ok, f"both series strictly decreasing: {decreasing}, cloud <= coupled "
                  f"mean: {dominated}, final/initial ratios {ratio_mean:.2e} / "
                  f"{ratio_cloud:.2e} (< 0.5), {elapsed:.1f}s")


def test_c09_wasserstein_oracle():
    budget = 30.0
    started = time.time()
    rng = np.random.default_rng(777)
    mismatches = 0
    for trial in range(100):
        n = int(rng.integers(1, 9))
        width = int(rng.integers(2, 6))
        a = rng.uniform(0.0, 1.0, (n, width))
        b = rng.uniform(0.0, 1.0, (n, width))
        a[:, 0] -= 0.5
        b[:, 0] -= 0.5
        ma, mb = EmpiricalMeasure(a), EmpiricalMeasure(b)
        solver = wasserstein2(ma, mb, CONTRACTION)
        scale = 2.0 ** (CONTRACTION.alpha * np.arange(width))
        diff = a[:, None, :] * scale - b[None, :, :] * scale
        cost = np.einsum("ikj,ikj->ik", diff, diff)
        perms = np.array(list(itertools.permutations(range(n))))
        brute = float(np.min(cost[np.arange(n), perms].sum(axis=1))) / n
        if not math.isclose(solver, brute, rel_tol=0.0, abs_tol=1e-13):
            mismatches += 1
    elapsed = time.time() - started
    ok = mismatches == 0 and elapsed < budget
    report(9, ok, f"100 random pairs (n <= 8): {mismatches} assignment/brute-force "
                  f"mismatches, {elapsed:.1f}s")


def test_c10_truncation_consistency():
    budget = 60.0
    started = time.time()

    def run(n_shells):
        u = np.zeros(n_shells + 1)
        u[:5] = 0.02 * 2.0 ** (-np.arange(5.0))
        p = ModelParams(c=2.0, sigma=0.005, T=2.0, N=n_shells, dt=1e-3)
        return integrate(ShellState(u), p, sample_brownian(2.0, 1e-3, 2024), MP)

    t16, t24 = run(16), run(24)
    padded = np.zeros((len(t16), 25))
    padded[:, :17] = t16.states
    diff = padded - t24.states
    sup = float(np.max(np.sqrt(np.einsum("ij,ij->i", diff, diff))))
    elapsed = time.time() - started
    ok = sup <= 1e-3 and elapsed < budget
    report(10, ok, f"sup-t l2 discrepancy N=16 vs N=24: {sup:.2e} (<= 1e-3), "
                   f"{elapsed:.1f}s")
