import math

import numpy as np
import pytest

from openbilliard.geometry import Ball, Ellipsoid, Scene
from openbilliard.measure import LiouvilleSampler
from openbilliard.raycast import ExitSphere, Hit, first_hit, sphere_exit_time

from _oracles import first_obstacle_crossing, sphere_exit_time as oracle_exit


@pytest.fixture(scope="module")
def ball_scene():
    return Scene(dimension=2, bodies=(Ball(center=[0.0, 0.0], radius=1.0),),
                 center=[0.0, 0.0], radius=3.0)


def test_head_on_chord(ball_scene):
    ev = first_hit(ball_scene, [-2.0, 0.0], [1.0, 0.0])
    assert isinstance(ev, Hit)
    assert abs(ev.record.time - 1.0) < 1e-9
    np.testing.assert_allclose(ev.record.point, [-1.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(ev.record.normal, [-1.0, 0.0], atol=1e-9)
    assert not ev.record.grazing


def test_miss_exits_through_sphere(ball_scene):
    ev = first_hit(ball_scene, [-2.0, 2.0], [1.0, 0.0])
    assert isinstance(ev, ExitSphere)
    assert abs(ev.time - (2.0 + math.sqrt(5.0))) < 1e-10
    np.testing.assert_allclose(ev.point, [math.sqrt(5.0), 2.0], atol=1e-9)


def test_tangent_ray_is_flagged_grazing(ball_scene):
    ev = first_hit(ball_scene, [-2.0, 1.0], [1.0, 0.0])
    assert isinstance(ev, Hit)
    assert ev.record.grazing
    np.testing.assert_allclose(ev.record.point, [0.0, 1.0], atol=1e-5)


def test_exit_matches_analytic_chord_on_empty_scene(rng):
    scene = Scene(dimension=2, bodies=(), center=[0.0, 0.0], radius=2.0)
    sampler = LiouvilleSampler(scene, seed=5)
    qs, vs = sampler.sample_entries(0, 2000)
    for i in range(0, 2000, 37):
        q, v = qs[i, :2], vs[i, :2]
        ev = first_hit(scene, q, v)
        assert isinstance(ev, ExitSphere)
        assert abs(ev.time - oracle_exit(scene, q, v)) < 1e-10 * scene.radius
        assert abs(np.linalg.norm(ev.point) - scene.radius) < 1e-9 * scene.radius


@pytest.mark.parametrize("scene_name", ["single_ball", "two_disks", "five_balls",
                                        "single_ball_3d"])
def test_marching_agrees_with_quadric_oracle(scenes, scene_name):
    scene = scenes[scene_name]
    sampler = LiouvilleSampler(scene, seed=99)
    qs, vs = sampler.sample_entries(0, 1500)
    n = scene.dimension
    for i in range(1500):
        q, v = qs[i, :n], vs[i, :n]
        ev = first_hit(scene, q, v)
        oracle = first_obstacle_crossing(scene, q, v)
        t_exit = oracle_exit(scene, q, v)
        if oracle is not None and oracle[0] < t_exit:
            assert isinstance(ev, Hit), f"ray {i}: oracle hit, marching exited"
            assert abs(ev.record.time - oracle[0]) < 1e-8
            assert ev.record.body_index == oracle[1]
        else:
            assert isinstance(ev, ExitSphere), f"ray {i}: oracle exit, marching hit"
            assert abs(ev.time - t_exit) < 1e-8


def test_rotated_ellipsoid_against_oracle(rng):
    ang = 0.65
    rot = np.array([[math.cos(ang), -math.sin(ang)],
                    [math.sin(ang), math.cos(ang)]])
    scene = Scene(dimension=2,
                  bodies=(Ellipsoid(center=[0.3, -0.2], semi_axes=[1.1, 0.5],
                                    rotation=rot),),
                  center=[0.0, 0.0], radius=3.0)
    sampler = LiouvilleSampler(scene, seed=4)
    qs, vs = sampler.sample_entries(0, 800)
    for i in range(800):
        q, v = qs[i, :2], vs[i, :2]
        ev = first_hit(scene, q, v)
        oracle = first_obstacle_crossing(scene, q, v)
        t_exit = oracle_exit(scene, q, v)
        if oracle is not None and oracle[0] < t_exit:
            assert isinstance(ev, Hit)
            assert abs(ev.record.time - oracle[0]) < 1e-8
        else:
            assert isinstance(ev, ExitSphere)


def test_variant_stable_under_stride_halving(scenes):
    scene = scenes["two_disks"]
    sampler = LiouvilleSampler(scene, seed=123)
    qs, vs = sampler.sample_entries(0, 600)
    for i in range(600):
        q, v = qs[i, :2], vs[i, :2]
        coarse = first_hit(scene, q, v, stride_factor=0.01)
        fine = first_hit(scene, q, v, stride_factor=0.005)
        assert type(coarse) is type(fine)
        if isinstance(coarse, Hit):
            assert abs(coarse.record.time - fine.record.time) < 1e-8


def test_hit_point_on_surface_within_tolerance(scenes):
    scene = scenes["livshits_cavity"]
    body = scene.bodies[0]
    sampler = LiouvilleSampler(scene, seed=17)
    qs, vs = sampler.sample_entries(0, 300)
    n_hits = 0
    for i in range(300):
        ev = first_hit(scene, qs[i, :2], vs[i, :2])
        if isinstance(ev, Hit):
            n_hits += 1
            assert abs(float(body.value(ev.record.point))) <= scene.hit_tol
            assert float(np.dot(ev.record.normal, vs[i, :2])) <= 1e-6
    assert n_hits > 50


def test_sphere_exit_time_requires_forward_exit():
    scene = Scene(dimension=2, bodies=(), center=[0.0, 0.0], radius=1.0)
    assert abs(sphere_exit_time(scene, [-1.0, 0.0], [1.0, 0.0]) - 2.0) < 1e-12
