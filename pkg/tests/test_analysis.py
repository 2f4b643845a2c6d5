import io
import math

import numpy as np
import pytest

from dyadicshell import (
    BoundReport,
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
)
from dyadicshell.analysis import distance_series_to_csv

from conftest import decaying_state, random_hplus


def closed_form_run(dt=1e-4, path_dt=1e-6):
    p = ModelParams(c=2.0, sigma=0.0, T=1.0, N=1, dt=dt)
    path = sample_brownian(1.0, path_dt, 0)
    traj = integrate(ShellState([1.0, 0.0]), p, path, SchemeConfig(scheme="semi-implicit"))
    return traj, path


def zero_run(N=3, T=1.0, dt=0.1):
    p = ModelParams(c=2.0, sigma=0.0, T=T, N=N, dt=dt)
    path = sample_brownian(T, dt, 0)
    return integrate(ShellState(np.zeros(N + 1)), p, path), path


class TestBoundConstants:
    def test_zero_inputs(self):
        _, path = zero_run()
        assert bound_constant(0.0, 0.0, path) == 0.0

    def test_scales_exactly_with_power_of_two(self):
        path = sample_brownian(1.0, 0.1, 5)
        a1 = bound_constant(0.7, 1.3, path)
        a2 = bound_constant(2.0 * 0.7, 2.0 * 1.3, path)
        assert a2 == 2.0 * a1

    def test_sup_margin_enlarges_noise_term(self):
        path = sample_brownian(1.0, 0.1, 5)
        plain = bound_constant(0.0, 1.0, path, eps_sup=0.0)
        enlarged = bound_constant(0.0, 1.0, path, eps_sup=0.01)
        assert enlarged == pytest.approx(1.01 * plain)

    def test_energy_forms(self):
        tight, loose = energy_bound_constants(1.0, 1.0)
        assert tight == 5.0
        assert loose == 9.0
        assert tight <= loose


class TestBoundReport:
    def test_flag_must_match_margin(self):
        with pytest.raises(ValueError):
            BoundReport(bound_name="x", theoretical=1.0, observed_max=2.0, margin=-1.0,
                        violated=False, worst_time=0.0, tolerance=1e-9)

    def test_json_round_trip(self):
        import json
        rep = BoundReport(bound_name="x", theoretical=1.0, observed_max=0.5, margin=0.5,
                          violated=False, worst_time=0.25, tolerance=1e-9)
        assert json.loads(rep.to_json())["margin"] == 0.5


class TestU0Bound:
    def test_zero_run(self):
        traj, path = zero_run()
        rep = check_u0_bound(traj, path, 0.0)
        assert rep.theoretical == 0.0
        assert rep.observed_max == 0.0
        assert not rep.violated

    def test_closed_form_margin(self):
        traj, path = closed_form_run()
        rep = check_u0_bound(traj, path, 1.0)
        assert rep.theoretical == 1.0
        assert rep.observed_max == pytest.approx(1.0)
        assert not rep.violated
        assert rep.worst_time == 0.0

    def test_mismatched_run_rejected(self):
        traj, _ = zero_run(T=1.0)
        other = sample_brownian(2.0, 0.1, 0)
        with pytest.raises(ValueError, match="different"):
            check_u0_bound(traj, other, 0.0)


class TestEnergyBound:
    def test_zero_run(self):
        traj, path = zero_run()
        rep = check_energy_bound(traj, path, 0.0)
        assert rep.theoretical == 0.0
        assert rep.observed_max == 0.0
        assert not rep.violated

    def test_closed_form_constants(self):
        traj, path = closed_form_run()
        rep = check_energy_bound(traj, path, 1.0)
        assert rep.theoretical == 5.0
        assert rep.theoretical_loose == 9.0
        assert rep.observed_max == pytest.approx(1.0, abs=1e-6)
        assert rep.margin == pytest.approx(4.0, abs=1e-6)
        assert not rep.violated

    def test_noisy_batch_never_violates(self):
        p = ModelParams(c=2.0, sigma=1.0, T=2.0, N=10, dt=1e-3)
        for seed in range(5):
            init = random_hplus(10, seed)
            path = sample_brownian(2.0, 1e-3, seed)
            traj = integrate(init, p, path)
            inorm = math.sqrt(sobolev_norm_sq(init))
            assert not check_u0_bound(traj, path, inorm).violated
            assert not check_energy_bound(traj, path, inorm).violated


class TestRegularityProfile:
    def test_zero_run(self):
        traj, _ = zero_run()
        rows = regularity_profile(traj)
        assert [r.j for r in rows] == [0, 1, 2, 3]
        assert all(r.mode == 0.0 for r in rows)
        assert all(r.cross == 0.0 for r in rows[:-1])
        assert math.isnan(rows[-1].cross)

    def test_closed_form_mode_integral(self):
        traj, _ = closed_form_run()
        rows = regularity_profile(traj)
        assert rows[0].mode == pytest.approx(math.tanh(1.0), abs=1e-6)

    def test_nonnegative(self):
        p = ModelParams(c=2.0, sigma=1.0, T=1.0, N=6, dt=1e-2)
        traj = integrate(random_hplus(6, 3), p, sample_brownian(1.0, 1e-2, 3))
        for row in regularity_profile(traj):
            assert row.mode >= 0.0
            assert math.isnan(row.cross) or row.cross >= 0.0


class TestFitDecaySlope:
    def test_recovers_exact_exponent(self):
        c = 3.0
        profile = [(j, 2.0 ** (-(2.0 / 3.0) * c * j)) for j in range(16)]
        fit = fit_decay_slope(profile, 0, 15)
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_constant_profile_fails_any_bound(self):
        profile = [(j, 3.7) for j in range(10)]
        fit = fit_decay_slope(profile, 0, 9)
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.slope > -(2.0 / 3.0) * 1.0 + 0.2

    def test_zero_entries_excluded_and_reported(self):
        profile = [(0, 1.0), (1, 0.5), (2, 0.0), (3, 0.125), (4, 0.0625)]
        fit = fit_decay_slope(profile, 0, 4)
        assert fit.excluded == (2,)
        assert fit.n_points == 4
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit_decay_slope([(0, 1.0), (1, 0.5), (2, 0.0)], 0, 2)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            fit_decay_slope([(0, 1.0)], 3, 3)


class TestCouple:
    def test_identical_initials_stay_identical(self):
        p = ModelParams(c=2.0, sigma=1.0, T=1.0, N=4, dt=1e-2)
        path = sample_brownian(1.0, 1e-2, 3)
        init = random_hplus(4, 1)
        res = couple(init, init, p, path)
        assert np.all(res.distances == 0.0)
        assert res.monotone_violations == 0
        assert not res.contracted  # final == initial == 0

    def test_initial_distance_is_exact(self):
        p = ModelParams(c=2.0, sigma=1.0, T=1.0, N=4, dt=1e-2)
        path = sample_brownian(1.0, 1e-2, 3)
        a = random_hplus(4, 1)
        b = random_hplus(4, 2)
        res = couple(a, b, p, path)
        assert res.initial == math.sqrt(sobolev_norm_sq(a.u - b.u, -0.5))
        assert res.distances[0] == res.initial

    def test_c_equal_3_rejected(self):
        p = ModelParams(c=3.0, sigma=1.0, T=1.0, N=4, dt=1e-2)
        path = sample_brownian(1.0, 1e-2, 3)
        with pytest.raises(ValueError, match="c < 3"):
            couple(random_hplus(4, 1), random_hplus(4, 2), p, path)

    def test_closed_form_pair_contracts_and_matches_reference(self):
        p = ModelParams(c=2.0, sigma=0.0, T=1.0, N=1, dt=1e-3)
        path = sample_brownian(1.0, 1e-5, 0)
        a = ShellState([1.0, 0.0])
        b = ShellState([0.5, 0.0])
        res = couple(a, b, p, path, SchemeConfig(scheme="semi-implicit"))
        assert np.all(np.diff(res.distances) < 0.0)
        assert res.contracted
        coarse = sample_brownian(1.0, 1e-3, 0)
        ref_a = reference_solve(a, p, coarse)
        ref_b = reference_solve(b, p, coarse)
        ref_d = [math.sqrt(sobolev_norm_sq(ra - rb, -0.5))
                 for ra, rb in zip(ref_a.states, ref_b.states)]
        assert np.max(np.abs(res.distances - np.array(ref_d))) < 1e-5

    def test_random_pairs_contract(self):
        p = ModelParams(c=2.0, sigma=1.0, T=2.0, N=8, dt=1e-3)
        for seed in range(4):
            path = sample_brownian(2.0, 1e-3, seed)
            a = random_hplus(8, seed)
            b = random_hplus(8, 100 + seed, amp=0.6)
            res = couple(a, b, p, path)
            assert res.monotone_violations == 0
            assert res.final < res.initial

    def test_default_tolerance_formula(self):
        p = ModelParams(c=2.0, sigma=1.0, T=1.0, N=4, dt=1e-2)
        path = sample_brownian(1.0, 1e-2, 3)
        a = random_hplus(4, 1)
        b = random_hplus(4, 2)
        res = couple(a, b, p, path)
        norm = max(math.sqrt(sobolev_norm_sq(a)), math.sqrt(sobolev_norm_sq(b)))
        k1, _ = energy_bound_constants(bound_constant(norm, 1.0, path), 1.0)
        assert res.tol_mono == pytest.approx(4.0 * 1e-2 * (1.0 + k1))

    def test_distance_csv(self):
        p = ModelParams(c=2.0, sigma=1.0, T=1.0, N=4, dt=0.25)
        path = sample_brownian(1.0, 0.25, 3)
        res = couple(random_hplus(4, 1), random_hplus(4, 2), p, path)
        buf = io.StringIO()
        distance_series_to_csv(res, buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "t,d"
        assert len(lines) == len(res.times) + 1


class TestContinuityModulus:
    def _setup(self, T=1.0, N=6, dt=2e-3):
        params = ModelParams(c=2.0, sigma=1.0, T=T, N=N, dt=dt)
        base_init = decaying_state(N, amp=0.8)
        base_path = sample_brownian(T, dt, 11)
        return params, base_init, base_path

    def test_zero_delta_gives_zero(self):
        params, init, path = self._setup()
        points = continuity_modulus(init, path, params, (0.2, 0.0), 2, seed=5)
        assert points[-1].delta == 0.0
        assert points[-1].worst_distance == 0.0

    def test_worst_distance_shrinks_with_delta(self):
        params, init, path = self._setup()
        points = continuity_modulus(init, path, params, (0.4, 0.2, 0.1, 0.05), 4, seed=5)
        values = [pt.worst_distance for pt in points]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert all(pt.worst_distance > 0.0 for pt in points)

    def test_rungs_roughly_linear_in_delta(self):
        params, init, path = self._setup()
        points = continuity_modulus(init, path, params, (0.2, 0.1), 3, seed=9)
        ratio = points[1].worst_distance / points[0].worst_distance
        assert ratio < 1.0

    def test_validation(self):
        params, init, path = self._setup()
        with pytest.raises(ValueError, match="decreasing"):
            continuity_modulus(init, path, params, (0.1, 0.2), 2, seed=5)
        with pytest.raises(ValueError, match="probe"):
            continuity_modulus(init, path, params, (0.2, 0.1), 0, seed=5)
        bad = ModelParams(c=3.0, sigma=1.0, T=1.0, N=6, dt=2e-3)
        with pytest.raises(ValueError, match="c < 3"):
            continuity_modulus(init, path, bad, (0.2,), 2, seed=5)
