import math

import numpy as np
import pytest

from openbilliard.dynamics import Caps
from openbilliard.estimators import (
    BoundViolation,
    Estimate,
    count_components,
    path_integral,
    perturbation_sweep,
    recover_volume,
    reflection_histogram,
    run_traces,
    trapped_measure,
    travel_time_integral,
)
from openbilliard.geometry import Ball, Scene
from openbilliard.measure import lambda_total, mu_total

N = 150_000


class TestTravelTimeIntegral:
    def test_empty_disk_mean_chord(self, scenes):
        scene = scenes["disk_empty"]
        est = travel_time_integral(scene, N, seed=101)
        mean = est.value / mu_total(scene)
        se = est.std_error / mu_total(scene)
        assert abs(mean - math.pi / 2.0) <= 3.0 * se

    def test_empty_ball_matches_phase_volume(self):
        scene = Scene(dimension=3, bodies=(), center=[0.0, 0.0, 0.0], radius=1.5)
        est = travel_time_integral(scene, N, seed=102)
        lam = lambda_total(scene)
        assert abs(est.value - lam.value) <= 3.0 * est.std_error

    def test_vanishing_obstacle_recovers_empty_value(self):
        base = Scene(dimension=2, bodies=(), center=[0.0, 0.0], radius=2.0)
        base_est = travel_time_integral(base, N, seed=103)
        prev = None
        for a in (0.5, 0.25, 0.1):
            scene = Scene(dimension=2, bodies=(Ball(center=[0.0, 0.0], radius=a),),
                          center=[0.0, 0.0], radius=2.0)
            est = travel_time_integral(scene, N, seed=103)
            assert est.value < base_est.value
            if prev is not None:
                assert est.value > prev  # monotone in the obstacle size
            prev = est.value
        assert abs(prev - base_est.value) <= base_est.value * 0.02

    def test_monotone_in_time_cap(self, scenes):
        scene = scenes["livshits_cavity"]
        vals = []
        for tf in (10.0, 20.0, 40.0):
            caps = Caps(t_max=tf * scene.radius, k_max=10_000)
            vals.append(travel_time_integral(scene, 20_000, caps, seed=7).value)
        assert vals[0] <= vals[1] <= vals[2]

    def test_seed_stability(self, scenes):
        scene = scenes["single_ball"]
        a = travel_time_integral(scene, 50_000, seed=42)
        b = travel_time_integral(scene, 50_000, seed=42)
        assert a.value == b.value and a.std_error == b.std_error

    def test_worker_count_does_not_change_values(self, scenes):
        scene = scenes["single_ball"]
        a = travel_time_integral(scene, 50_000, seed=42, workers=1)
        b = travel_time_integral(scene, 50_000, seed=42, workers=16)
        assert a.value == b.value and a.std_error == b.std_error


class TestRecoverVolume:
    def test_single_ball_area(self, scenes):
        est = recover_volume(scenes["single_ball"], N, seed=201)
        assert abs(est.value - math.pi / 4.0) <= 3.0 * est.std_error
        assert est.std_error / est.value <= 0.02

    def test_empty_scene_zero(self, scenes):
        est = recover_volume(scenes["disk_empty"], N, seed=202)
        assert abs(est.value) <= 3.0 * est.std_error

    def test_five_balls_total_area(self, scenes):
        est = recover_volume(scenes["five_balls"], N, seed=203)
        assert abs(est.value - 5.0 * math.pi * 0.09) <= 3.0 * est.std_error


class TestTrappedMeasure:
    def test_single_convex_body_zero(self, scenes):
        res = trapped_measure(scenes["single_ball"], N, seed=301)
        bound = 3.0 * res.std_error + res.cap_bias_bound
        assert abs(res.value) <= bound
        assert res.estimate.n_censored == 0

    def test_two_convex_bodies_zero(self, scenes):
        res = trapped_measure(scenes["two_disks"], N, seed=302)
        assert abs(res.value) <= 3.0 * res.std_error + res.cap_bias_bound

    def test_cavity_positive_and_cap_stable(self, scenes):
        scene = scenes["livshits_cavity"]
        caps = Caps(t_max=60.0 * scene.radius, k_max=10_000)
        res = trapped_measure(scene, N, caps, seed=303, mc_points=2_000_000)
        assert res.value > 5.0 * res.std_error
        double = trapped_measure(scene, N, Caps(t_max=2 * caps.t_max, k_max=10_000),
                                 seed=303, mc_points=2_000_000)
        assert abs(double.value - res.value) < 0.1 * res.value

    def test_half_cap_value_reported(self, scenes):
        scene = scenes["single_ball"]
        res = trapped_measure(scene, 50_000, Caps(t_max=8.0, k_max=100), seed=304)
        # capping at 4 censors every chord longer than 4, so the half-cap
        # estimate must sit above the full-cap one
        assert res.half_cap_value >= res.value


class TestReflectionHistogram:
    def test_empty_scene_all_mass_at_zero(self, scenes):
        scene = scenes["disk_empty"]
        hist = reflection_histogram(scene, 50_000, seed=401)
        assert hist.counts[0] == 50_000
        assert hist.weighted_sum == pytest.approx(mu_total(scene))
        # analytic: lambda/D = pi^2 R <= mu_total = 4 pi R
        assert hist.lower_bound <= hist.weighted_sum
        assert hist.bookkeeping_exact()

    def test_single_convex_body_reflects_at_most_once(self, scenes):
        hist = reflection_histogram(scenes["single_ball"], N, seed=402)
        assert len(hist.counts) <= 2 or np.all(hist.counts[2:] == 0)

    def test_two_disks_bounds_hold(self, scenes):
        hist = reflection_histogram(scenes["two_disks"], N, seed=403)
        assert hist.lower_bound_holds
        assert hist.upper_bound_holds
        assert hist.bookkeeping_exact()
        assert hist.decay_constant > 0.0

    def test_bound_violation_raises(self, scenes):
        # an impossible declared separation forces the upper bound down
        scene = scenes["two_disks"]
        bad = Scene(dimension=2, bodies=scene.bodies, center=scene.center,
                    radius=scene.radius, min_separation=2000.0,
                    strictly_convex=True, name="bad")
        with pytest.raises(BoundViolation) as err:
            reflection_histogram(bad, 20_000, seed=404)
        assert err.value.histogram is not None

    def test_bucket_identity_with_censoring(self, scenes):
        scene = scenes["livshits_cavity"]
        caps = Caps(t_max=5.0 * scene.radius, k_max=4)
        hist = reflection_histogram(scene, 30_000, caps, seed=405, check=False)
        assert hist.n_censored > 0
        assert hist.bookkeeping_exact()
        total_mass = float(np.sum(hist.masses)) + hist.censored_mass \
            + hist.degenerate_mass
        assert total_mass == pytest.approx(mu_total(scene))


class TestCountComponents:
    def test_exact_volume_gives_exact_count(self):
        est = Estimate(value=math.pi * 0.25, std_error=0.0)
        cc = count_components(est, radius=0.5, dim=2)
        assert cc.k_value == pytest.approx(1.0)
        assert cc.k_rounded == 1

    def test_unit_ball_3d_identity(self):
        est = Estimate(value=4.0 * math.pi / 3.0, std_error=0.0)
        cc = count_components(est, radius=1.0, dim=3)
        assert cc.k_value == pytest.approx(1.0)

    def test_five_balls_counts_five(self, scenes):
        est = recover_volume(scenes["five_balls"], N, seed=501)
        cc = count_components(est, radius=0.3, dim=2)
        assert 4.5 < cc.k_value < 5.5
        assert cc.k_rounded == 5

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            count_components(Estimate(value=1.0, std_error=0.0), radius=0.0, dim=2)


class TestSweep:
    def test_requires_zero_in_list(self, scenes):
        with pytest.raises(ValueError):
            perturbation_sweep(scenes["single_ball"], [0.1], 1000)

    def test_zero_row_matches_unperturbed_bit_exactly(self, scenes):
        scene = scenes["single_ball"]
        res = perturbation_sweep(scene, [0.0, 0.05], 20_000, seed=601)
        direct = trapped_measure(scene, 20_000, seed=601)
        assert res.rows[0].trapped.value == direct.value
        assert res.rows[0].trapped.std_error == direct.std_error

    def test_convex_scene_stays_zero(self, scenes):
        scene = scenes["single_ball"]
        eps = [0.0, 0.025 * scene.radius, 0.1 * scene.radius]
        res = perturbation_sweep(scene, eps, 60_000, seed=602)
        for row in res.rows:
            assert abs(row.trapped.value) <= 3.0 * row.trapped.std_error \
                + row.trapped.cap_bias_bound


class TestPathIntegralHook:
    def test_constant_integrand_matches_travel_time(self, scenes):
        scene = scenes["single_ball"]
        est = path_integral(scene, lambda p: 1.0, 300, seed=701)
        direct = travel_time_integral(scene, 300, seed=701)
        assert est.value == pytest.approx(direct.value, rel=1e-9)

    def test_indicator_integrand_estimates_shell_volume(self, scenes):
        # f = indicator of a centered annulus; the integral over phase space
        # is its area times the direction measure
        scene = scenes["disk_empty"]
        lo, hi = 0.3, 0.7

        def f(p):
            r = float(np.linalg.norm(p))
            return 1.0 if lo < r < hi else 0.0

        est = path_integral(scene, f, 400, seed=702, nodes=24)
        expected = math.pi * (hi**2 - lo**2) * 2.0 * math.pi
        assert abs(est.value - expected) <= max(4.0 * est.std_error,
                                                0.05 * expected)


def test_degenerate_fraction_tracked(scenes):
    data = run_traces(scenes["livshits_cavity"], 50_000,
                      Caps(t_max=100.0, k_max=10_000), seed=801)
    assert data.n_degenerate <= 1e-4 * data.n
