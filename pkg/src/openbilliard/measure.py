"""Boundary-measure sampling and exact normalization constants.

The entry measure on inward states at the bounding sphere has density
``d(area) * d(direction) * <inward normal, v>``; sampling uses uniform sphere
positions and cosine-weighted inward directions, so integrals against the
measure are plain sample means times :func:`mu_total`.

Sampling is counter based: sample i is a pure function of (seed, i), so any
partitioning of the index range across workers or runs reproduces identical
values bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Ball, Ellipsoid, GeometryError, Scene, _ball_volume

ENTRY_DRAWS = 4       # one Philox counter block per entry sample
BOUNDARY_DRAWS = 8    # two blocks per full-boundary sample
VOLUME_MC_POINTS = 10_000_000
_VOLUME_SEED_SALT = 0x5EED_B0D1  # fixed stream for rejection-sampled volumes


def _uniform_blocks(seed: int, start: int, count: int, draws: int) -> np.ndarray:
    """Doubles for samples [start, start+count), ``draws`` per sample.

    Each sample owns ``draws // 4`` Philox counter blocks, so the mapping from
    (seed, index) to values is independent of batching.
    """
    blocks_per = draws // 4
    bg = np.random.Philox(key=np.uint64(seed))
    bg.advance(start * blocks_per)
    gen = np.random.Generator(bg)
    return gen.random(count * draws).reshape(count, draws)


@dataclass(frozen=True, eq=False)
class LiouvilleSampler:
    """Reproducible sampler of inward entry states on the bounding sphere."""

    scene: Scene
    seed: int

    def sample_entries(self, start: int, count: int):
        """Entry batch as 3d-embedded (positions, directions) arrays."""
        u = _uniform_blocks(self.seed, start, count, ENTRY_DRAWS)
        R = self.scene.radius
        qs = np.zeros((count, 3))
        vs = np.zeros((count, 3))
        if self.scene.dimension == 2:
            phi = 2.0 * math.pi * u[:, 0]
            nx = -np.cos(phi)
            ny = -np.sin(phi)
            qs[:, 0] = self.scene.center[0] - R * nx
            qs[:, 1] = self.scene.center[1] - R * ny
            theta = np.arcsin(2.0 * u[:, 1] - 1.0)  # density cos(theta)/2
            ct = np.cos(theta)
            st = np.sin(theta)
            vs[:, 0] = ct * nx - st * ny
            vs[:, 1] = ct * ny + st * nx
        else:
            cos_a = 2.0 * u[:, 0] - 1.0
            sin_a = np.sqrt(np.maximum(1.0 - cos_a**2, 0.0))
            beta = 2.0 * math.pi * u[:, 1]
            pos = np.stack([sin_a * np.cos(beta), sin_a * np.sin(beta), cos_a], axis=-1)
            qs[:] = self.scene.center + R * pos
            nrm = -pos  # inward
            t1, t2 = _tangent_basis(nrm)
            cos_t = np.sqrt(u[:, 2])  # cosine-weighted hemisphere
            sin_t = np.sqrt(np.maximum(1.0 - u[:, 2], 0.0))
            psi = 2.0 * math.pi * u[:, 3]
            vs[:] = (cos_t[:, None] * nrm
                     + (sin_t * np.cos(psi))[:, None] * t1
                     + (sin_t * np.sin(psi))[:, None] * t2)
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
        return qs, vs

    def sample_entry(self, index: int):
        """Single entry state in scene dimension (pure in (seed, index))."""
        from .dynamics import UnitPhasePoint

        qs, vs = self.sample_entries(index, 1)
        n = self.scene.dimension
        return UnitPhasePoint(q=qs[0, :n].copy(), v=vs[0, :n].copy())


def _tangent_basis(n):
    """Deterministic orthonormal pair spanning the plane normal to each row."""
    ref = np.where(np.abs(n[:, 0:1]) < 0.9,
                   np.array([[1.0, 0.0, 0.0]]),
                   np.array([[0.0, 1.0, 0.0]]))
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


@dataclass(frozen=True, eq=False)
class BoundaryLiouvilleSampler:
    """Sampler of the invariant boundary measure on the whole boundary of the
    free region: the bounding sphere plus every obstacle surface.

    Positions are drawn proportionally to surface measure (which is the
    position marginal of the measure), directions cosine-weighted into the
    free region.  Obstacle components must be balls; that covers the bundled
    scenes this sampler is tested on.
    """

    scene: Scene
    seed: int

    def __post_init__(self):
        for b in self.scene.bodies:
            if not isinstance(b, Ball):
                raise GeometryError(
                    "full-boundary sampling is implemented for ball obstacles only")

    def _component_areas(self):
        scene = self.scene
        if scene.dimension == 2:
            areas = [2.0 * math.pi * scene.radius]
            areas += [2.0 * math.pi * b.radius for b in scene.bodies]
        else:
            areas = [4.0 * math.pi * scene.radius**2]
            areas += [4.0 * math.pi * b.radius**2 for b in scene.bodies]
        return np.asarray(areas)

    def sample_states(self, start: int, count: int):
        """Returns (positions, directions, component) with component -1 for
        the sphere and the body index otherwise; 3d-embedded arrays."""
        u = _uniform_blocks(self.seed, start, count, BOUNDARY_DRAWS)
        scene = self.scene
        areas = self._component_areas()
        cum = np.cumsum(areas / np.sum(areas))
        comp = np.searchsorted(cum, u[:, 0], side="right")
        comp = np.minimum(comp, len(areas) - 1)
        qs = np.zeros((count, 3))
        ns = np.zeros((count, 3))
        for ci in range(len(areas)):
            mask = comp == ci
            if not np.any(mask):
                continue
            if ci == 0:
                center, radius, sign = scene.center, scene.radius, -1.0
            else:
                body = scene.bodies[ci - 1]
                center, radius, sign = body.center, body.radius, 1.0
            if scene.dimension == 2:
                phi = 2.0 * math.pi * u[mask, 1]
                d = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
                qs[mask, :2] = center + radius * d
                ns[mask, :2] = sign * d
            else:
                ca = 2.0 * u[mask, 1] - 1.0
                sa = np.sqrt(np.maximum(1.0 - ca**2, 0.0))
                be = 2.0 * math.pi * u[mask, 2]
                d = np.stack([sa * np.cos(be), sa * np.sin(be), ca], axis=-1)
                qs[mask] = center + radius * d
                ns[mask] = sign * d
        if scene.dimension == 2:
            theta = np.arcsin(2.0 * u[:, 3] - 1.0)
            ct = np.cos(theta)
            st = np.sin(theta)
            vs = np.zeros((count, 3))
            vs[:, 0] = ct * ns[:, 0] - st * ns[:, 1]
            vs[:, 1] = ct * ns[:, 1] + st * ns[:, 0]
        else:
            t1, t2 = _tangent_basis(ns)
            cos_t = np.sqrt(u[:, 4])
            sin_t = np.sqrt(np.maximum(1.0 - u[:, 4], 0.0))
            psi = 2.0 * math.pi * u[:, 5]
            vs = (cos_t[:, None] * ns
                  + (sin_t * np.cos(psi))[:, None] * t1
                  + (sin_t * np.sin(psi))[:, None] * t2)
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
        return qs, vs, comp.astype(np.int64) - 1


def arc_coordinate(scene: Scene, comp: np.ndarray, qs3: np.ndarray) -> np.ndarray:
    """Arc-length coordinate along the concatenated boundary components
    (planar scenes): sphere first, then each ball obstacle in order."""
    if scene.dimension != 2:
        raise GeometryError("arc coordinates are defined for planar scenes")
    offsets = [0.0]
    total = 2.0 * math.pi * scene.radius
    for b in scene.bodies:
        offsets.append(total)
        total += 2.0 * math.pi * b.radius
    out = np.zeros(len(comp))
    for ci in range(-1, len(scene.bodies)):
        mask = comp == ci
        if not np.any(mask):
            continue
        if ci == -1:
            center, radius, off = scene.center, scene.radius, 0.0
        else:
            center, radius, off = (scene.bodies[ci].center, scene.bodies[ci].radius,
                                   offsets[ci + 1])
        d = qs3[mask, :2] - center
        ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)
        out[mask] = off + radius * ang
    return out


def surface_area_sphere(scene: Scene) -> float:
    if scene.dimension == 2:
        return 2.0 * math.pi * scene.radius
    return 4.0 * math.pi * scene.radius**2


def cosine_factor(dim: int) -> float:
    """Integral of the cosine weight over the inward hemisphere: 2 in the
    plane, pi in space."""
    return 2.0 if dim == 2 else math.pi


def mu_total(scene: Scene) -> float:
    """Total mass of the entry measure on inward sphere states."""
    return surface_area_sphere(scene) * cosine_factor(scene.dimension)


def sphere_surface_measure(dim: int) -> float:
    """Surface measure of the unit direction sphere: 2*pi or 4*pi."""
    return 2.0 * math.pi if dim == 2 else 4.0 * math.pi


@lru_cache(maxsize=None)
def obstacle_volume(scene: Scene, mc_points: int = VOLUME_MC_POINTS):
    """Total obstacle volume with its standard error.

    Closed form (zero error) for balls and ellipsoids; rejection sampling in
    the padded bounding box otherwise, on a fixed dedicated random stream so
    the value is reproducible.
    """
    total = 0.0
    var = 0.0
    for i, body in enumerate(scene.bodies):
        if isinstance(body, (Ball, Ellipsoid)):
            total += body.volume()
            continue
        from .geometry import RadialBump

        if isinstance(body, RadialBump) and body.amplitude == 0.0 and \
                isinstance(body.base, (Ball, Ellipsoid)):
            total += body.base.volume()
            continue
        value, sigma = _mc_volume(scene, body, seed=_VOLUME_SEED_SALT + i,
                                  n_points=mc_points)
        total += value
        var += sigma**2
    return total, math.sqrt(var)


def _mc_volume(scene: Scene, body, seed: int, n_points: int):
    from . import _kernels
    from .geometry import compile_body

    center, radius = body.bounding_sphere()
    dim = scene.dimension
    lo = center - radius
    box_vol = (2.0 * radius) ** dim
    ops, ip, fp = compile_body(body)
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    inside = 0
    chunk = 2_000_000
    done = 0
    while done < n_points:
        m = min(chunk, n_points - done)
        pts = np.zeros((m, 3))
        pts[:, :dim] = lo + 2.0 * radius * gen.random((m, dim))
        vals = np.empty(m)
        _kernels.field_value_batch(ops, ip, fp, 0, len(ops), pts, vals)
        inside += int(np.count_nonzero(vals < 0.0))
        done += m
    p = inside / n_points
    value = box_vol * p
    sigma = box_vol * math.sqrt(max(p * (1.0 - p), 0.0) / n_points)
    return value, sigma


def region_volume(scene: Scene, mc_points: int = VOLUME_MC_POINTS):
    """Volume of the free region: ball volume minus obstacle volume."""
    vol_m = _ball_volume(scene.dimension, scene.radius)
    vol_k, sigma = obstacle_volume(scene, mc_points)
    return vol_m - vol_k, sigma


def lambda_total(scene: Scene, mc_points: int = VOLUME_MC_POINTS):
    """Phase-space volume of the free region: Vol(region) * Vol(directions).

    Returns an Estimate; exact (zero error) when every obstacle volume is
    closed form.
    """
    from .estimators import Estimate

    vol, sigma = region_volume(scene, mc_points)
    s = sphere_surface_measure(scene.dimension)
    return Estimate(value=vol * s, std_error=sigma * s,
                    n_samples=0 if sigma == 0.0 else mc_points)


@dataclass(frozen=True)
class MeasureConstants:
    """The normalization constants of one scene in one bundle."""

    mu_total: float
    lambda_total: float
    lambda_std_error: float
    sphere_area: float
    obstacle_volume: float
    obstacle_volume_std_error: float


def measure_constants(scene: Scene, mc_points: int = VOLUME_MC_POINTS) -> MeasureConstants:
    vol_k, sig_k = obstacle_volume(scene, mc_points)
    lam = lambda_total(scene, mc_points)
    return MeasureConstants(
        mu_total=mu_total(scene),
        lambda_total=lam.value,
        lambda_std_error=lam.std_error,
        sphere_area=surface_area_sphere(scene),
        obstacle_volume=vol_k,
        obstacle_volume_std_error=sig_k,
    )
