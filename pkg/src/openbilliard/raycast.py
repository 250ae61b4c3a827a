"""First-intersection queries: obstacle boundary hits and sphere exits.

The production hit finder is stride marching over the minimum obstacle field
with sign-change bracketing, bisection to a 1e-12 bracket, and a short Newton
polish; the bounding-sphere exit is closed form and bounds the search.
Marching is restricted to the padded bounding intervals of the bodies, outside
of which the field is certifiably positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .geometry import (
    DegenerateGradient,
    GeometryError,
    Scene,
    as_point,
    as_unit,
    compile_body,
)

GRAZING_TOL = 1e-6            # |<normal, direction>| below this flags a grazing hit
DEFAULT_STRIDE_FACTOR = 0.01  # marching stride as a fraction of the bounding radius
BOUND_PAD_FACTOR = 0.02       # padding of body bounding spheres, fraction of R


@dataclass(frozen=True)
class HitRecord:
    """An obstacle-boundary crossing along a ray."""

    point: np.ndarray
    time: float
    body_index: int
    normal: np.ndarray      # inward: out of the obstacle, into the free region
    grazing: bool


@dataclass(frozen=True)
class Hit:
    record: HitRecord


@dataclass(frozen=True)
class ExitSphere:
    point: np.ndarray
    time: float


@dataclass(frozen=True)
class StepBudgetExhausted:
    steps: int = _kernels.STEP_BUDGET


RayEvent = Hit | ExitSphere | StepBudgetExhausted


@dataclass(frozen=True, eq=False)
class CompiledScene:
    """Scene flattened into the arrays the kernels consume."""

    scene: Scene
    ops: np.ndarray
    iparams: np.ndarray
    fparams: np.ndarray
    slices: np.ndarray    # (n_bodies, 2) program ranges
    bounds: np.ndarray    # (n_bodies, 4) padded bounding spheres
    center3: np.ndarray   # bounding center embedded in 3d
    radius: float
    stride: float
    hit_tol: float
    graze_tol: float


@lru_cache(maxsize=None)
def compile_scene(scene: Scene, stride_factor: float = DEFAULT_STRIDE_FACTOR) -> CompiledScene:
    ops_list, ip_list, fp_list, slices = [], [], [], []
    pos = 0
    pad = BOUND_PAD_FACTOR * scene.radius
    bounds = np.zeros((len(scene.bodies), 4))
    for i, body in enumerate(scene.bodies):
        o, ii, ff = compile_body(body)
        ops_list.append(o)
        ip_list.append(ii)
        fp_list.append(ff)
        slices.append((pos, pos + len(o)))
        pos += len(o)
        c, r = body.bounding_sphere()
        bounds[i, :len(c)] = c
        bounds[i, 3] = r + pad
    if ops_list:
        ops = np.concatenate(ops_list)
        ip = np.concatenate(ip_list)
        fp = np.concatenate(fp_list)
    else:
        ops = np.zeros(0, dtype=np.int64)
        ip = np.zeros(0, dtype=np.int64)
        fp = np.zeros((0, 15))
    center3 = np.zeros(3)
    center3[: scene.dimension] = scene.center
    return CompiledScene(
        scene=scene,
        ops=ops,
        iparams=ip,
        fparams=fp,
        slices=np.asarray(slices, dtype=np.int64).reshape(len(scene.bodies), 2),
        bounds=bounds,
        center3=center3,
        radius=scene.radius,
        stride=stride_factor * scene.radius,
        hit_tol=scene.hit_tol,
        graze_tol=GRAZING_TOL,
    )


def _embed(vec, dim):
    out = np.zeros(3)
    out[:dim] = vec
    return out


def first_hit(scene: Scene, q, v, stride_factor: float = DEFAULT_STRIDE_FACTOR) -> RayEvent:
    """Earliest boundary event on the ray q + t*v, t > 0.

    Returns the first obstacle crossing as a Hit (grazing hits flagged), the
    closed-form sphere exit when no obstacle is crossed, or
    StepBudgetExhausted for a pathological field.  Raises DegenerateGradient
    when the field gradient vanishes at the located crossing.
    """
    dim = scene.dimension
    q = as_point(q, dim)
    v = as_unit(v, dim)
    if np.linalg.norm(q - scene.center) > scene.radius * (1.0 + 1e-9):
        raise GeometryError("ray start lies outside the bounding sphere")
    cs = compile_scene(scene, stride_factor)
    q3 = _embed(q, dim)
    v3 = _embed(v, dim)
    ev, t, px, py, pz, nx, ny, nz, cos_in, body = _kernels.first_hit_one(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        q3[0], q3[1], q3[2], v3[0], v3[1], v3[2],
        cs.stride, cs.hit_tol, cs.graze_tol)
    point = np.array([px, py, pz])[:dim]
    if ev == _kernels.EV_EXIT:
        return ExitSphere(point=point, time=t)
    if ev == _kernels.EV_BUDGET:
        return StepBudgetExhausted()
    if ev == _kernels.EV_GRADFAIL:
        raise DegenerateGradient(f"no usable normal at t={t:.6g} on body {body}")
    if ev == _kernels.EV_GRAZE and body < 0:
        raise GeometryError("degenerate ray start at the bounding sphere")
    normal = np.array([nx, ny, nz])[:dim]
    return Hit(HitRecord(point=point, time=t, body_index=int(body),
                         normal=normal, grazing=(ev == _kernels.EV_GRAZE)))


def sphere_exit_time(scene: Scene, q, v) -> float:
    """Closed-form positive time at which the ray leaves the bounding sphere."""
    dim = scene.dimension
    q3 = _embed(as_point(q, dim), dim)
    v3 = _embed(as_unit(v, dim), dim)
    c3 = np.zeros(3)
    c3[:dim] = scene.center
    t = _kernels.sphere_exit(c3[0], c3[1], c3[2], scene.radius,
                             q3[0], q3[1], q3[2], v3[0], v3[1], v3[2])
    if t <= 0.0:
        raise GeometryError("ray does not leave the sphere forward in time")
    return float(t)
