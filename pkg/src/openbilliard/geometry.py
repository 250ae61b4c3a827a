"""Implicit-surface obstacles, bounding scenes, and boundary perturbations.

Obstacles are smooth scalar fields with the convention ``f < 0`` strictly
inside the obstacle, ``f > 0`` outside, so the field gradient at a surface
point is the normal pointing out of the obstacle, into the free region.
Composite shapes are built with a log-sum-exp smooth union, which is C-infinity
and reduces to the plain minimum as the blend parameter goes to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Tolerances shared across the package (lengths are relative to the scene
# scale, i.e. the bounding radius R, unless stated otherwise).
GRAD_FLOOR = 1e-8            # minimum gradient norm at an accepted surface point
UNIT_TOL = 1e-12             # |norm - 1| allowed when a unit vector is constructed
CONTAINMENT_SLACK = 1e-6     # bodies must stay R*(1 - slack) inside the bounding ball
SURFACE_SAMPLES = 4096       # default surface points per body for sampled checks

# Opcodes of the flattened field program consumed by the numba kernels.
OP_BALL = 0
OP_ELLIPSOID = 1
OP_SMOOTH_UNION = 2
OP_RADIAL_BUMP = 3
N_FPARAMS = 15
# Children of a smooth union whose field exceeds the minimum by more than
# EXP_CUTOFF blend units contribute less than half an ulp to the log-sum-exp
# and may be skipped without changing the rounded result.
EXP_CUTOFF = 45.0


class GeometryError(ValueError):
    """Base class for geometry construction and validation failures."""


class DegenerateGradient(GeometryError):
    """Field gradient vanished at a point where a surface normal was needed."""


class PerturbationTooLarge(GeometryError):
    """A perturbed surface left the bounding ball."""


class SceneValidationError(GeometryError):
    """A scene violated a load-time invariant."""


def as_point(q, dim: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (dim,):
        raise GeometryError(f"expected a {dim}-vector, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise GeometryError(f"non-finite point {q}")
    return q


def as_unit(v, dim: int) -> np.ndarray:
    v = as_point(v, dim)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > UNIT_TOL and norm > 0.0:
        raise GeometryError(f"vector has norm {norm}, not unit")
    if norm == 0.0:
        raise GeometryError("zero vector cannot be normalized")
    return v / norm


def _mollifier(s):
    """Smooth bump profile: 1 at s = 0, identically 0 for ``|s| >= 1``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


@dataclass(frozen=True, eq=False)
class ImplicitBody:
    """A smooth scalar field whose zero sub-level set is one obstacle."""

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    def value(self, q: np.ndarray) -> np.ndarray:
        """Field value at points of shape (..., n)."""
        raise NotImplementedError

    def gradient(self, q: np.ndarray) -> np.ndarray:
        """Analytic field gradient at points of shape (..., n)."""
        raise NotImplementedError

    def bounding_sphere(self, slack: float = 0.0):
        """Center and radius of a sphere containing ``{f <= slack}``."""
        raise NotImplementedError

    def surface_points(self, n: int = SURFACE_SAMPLES) -> np.ndarray:
        """Sampled points on the zero set (dense but not certified)."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Ball(ImplicitBody):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0.0:
            raise GeometryError("ball radius must be positive")
        if self.center.ndim != 1 or self.center.shape[0] not in (2, 3):
            raise GeometryError("ball center must be a 2- or 3-vector")

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return np.linalg.norm(q - self.center, axis=-1) - self.radius

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        d = q - self.center
        norm = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / norm

    def bounding_sphere(self, slack: float = 0.0):
        return self.center.copy(), self.radius + max(slack, 0.0)

    def surface_points(self, n: int = SURFACE_SAMPLES):
        return self.center + self.radius * _sphere_directions(n, self.dimension)

    def volume(self) -> float:
        return _ball_volume(self.dimension, self.radius)


@dataclass(frozen=True, eq=False)
class Ellipsoid(ImplicitBody):
    """Ellipsoid via the anisotropic norm field ``|diag(1/a) R^T (q - c)| - 1``."""

    center: np.ndarray
    semi_axes: np.ndarray
    rotation: np.ndarray | None = None

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        axes = np.asarray(self.semi_axes, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "semi_axes", axes)
        n = center.shape[0]
        if axes.shape != (n,) or np.any(axes <= 0.0):
            raise GeometryError("semi-axes must be positive, one per dimension")
        if self.rotation is not None:
            rot = np.asarray(self.rotation, dtype=float)
            if rot.shape != (n, n):
                raise GeometryError(f"rotation must be {n}x{n}")
            if not np.allclose(rot @ rot.T, np.eye(n), atol=1e-10):
                raise GeometryError("rotation matrix is not orthonormal")
            object.__setattr__(self, "rotation", rot)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def _local(self, q):
        d = np.asarray(q, dtype=float) - self.center
        if self.rotation is not None:
            d = d @ self.rotation  # row vectors times R equals R^T applied to columns
        return d / self.semi_axes

    def value(self, q):
        return np.linalg.norm(self._local(q), axis=-1) - 1.0

    def gradient(self, q):
        u = self._local(q)
        norm = np.linalg.norm(u, axis=-1, keepdims=True)
        g = (u / norm) / self.semi_axes
        if self.rotation is not None:
            g = g @ self.rotation.T
        return g

    def bounding_sphere(self, slack: float = 0.0):
        return self.center.copy(), float(np.max(self.semi_axes)) * (1.0 + max(slack, 0.0))

    def surface_points(self, n: int = SURFACE_SAMPLES):
        u = _sphere_directions(n, self.dimension) * self.semi_axes
        if self.rotation is not None:
            u = u @ self.rotation.T
        return self.center + u

    def volume(self) -> float:
        return _ball_volume(self.dimension, 1.0) * float(np.prod(self.semi_axes))


@dataclass(frozen=True, eq=False)
class SmoothUnion(ImplicitBody):
    """Log-sum-exp blend of child fields: ``-k*log(sum(exp(-f_i/k)))``."""

    children: tuple
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "kappa", float(self.kappa))
        if len(self.children) == 0:
            raise GeometryError("smooth union needs at least one child")
        if self.kappa <= 0.0:
            raise GeometryError("blend parameter must be positive")
        dims = {c.dimension for c in self.children}
        if len(dims) != 1:
            raise GeometryError("smooth union children mix dimensions")

    @property
    def dimension(self) -> int:
        return self.children[0].dimension

    def _child_values(self, q):
        return np.stack([c.value(q) for c in self.children], axis=0)

    def value(self, q):
        f = self._child_values(q)
        m = np.min(f, axis=0)
        s = np.sum(np.exp(-(f - m) / self.kappa), axis=0)
        return m - self.kappa * np.log(s)

    def gradient(self, q):
        f = self._child_values(q)
        m = np.min(f, axis=0)
        w = np.exp(-(f - m) / self.kappa)
        w = w / np.sum(w, axis=0)
        grads = np.stack([c.gradient(q) for c in self.children], axis=0)
        return np.sum(w[..., None] * grads, axis=0)

    def bounding_sphere(self, slack: float = 0.0):
        # The blend lies below min(f_i) by at most kappa*log(n_children), so a
        # sphere containing every child's {f <= slack + kappa*log(n)} works.
        pad = max(slack, 0.0) + self.kappa * math.log(len(self.children))
        spheres = [c.bounding_sphere(pad) for c in self.children]
        center = np.mean([c for c, _ in spheres], axis=0)
        radius = max(float(np.linalg.norm(c - center)) + r for c, r in spheres)
        return center, radius

    def surface_points(self, n: int = SURFACE_SAMPLES):
        per = max(n // len(self.children), 32)
        seeds = np.concatenate([c.surface_points(per) for c in self.children], axis=0)
        return _project_to_surface(self, seeds)


@dataclass(frozen=True, eq=False)
class RadialBump(ImplicitBody):
    """Base field minus a smooth angular bump, pushing the surface outward.

    The bump weight is 1 exactly along ``direction`` seen from ``anchor`` and
    drops smoothly to 0 at angular distance ``angular_width``, so the perturbed
    field differs from the base by at most ``amplitude`` in sup norm.
    """

    base: ImplicitBody
    amplitude: float
    direction: np.ndarray
    angular_width: float
    anchor: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "angular_width", float(self.angular_width))
        object.__setattr__(self, "direction", as_unit(self.direction, self.base.dimension))
        if self.amplitude < 0.0:
            raise GeometryError("bump amplitude must be non-negative")
        if not 0.0 < self.angular_width <= math.pi:
            raise GeometryError("angular width must be in (0, pi]")
        anchor = self.anchor
        if anchor is None:
            anchor, _ = self.base.bounding_sphere()
        object.__setattr__(self, "anchor", as_point(anchor, self.base.dimension))

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def _angle(self, q):
        u = np.asarray(q, dtype=float) - self.anchor
        dot = np.sum(u * self.direction, axis=-1)
        if self.dimension == 2:
            cross = u[..., 0] * self.direction[1] - u[..., 1] * self.direction[0]
            return np.arctan2(np.abs(cross), dot)
        cross = np.cross(u, self.direction)
        return np.arctan2(np.linalg.norm(cross, axis=-1), dot)

    def bump_weight(self, q):
        return _mollifier(self._angle(q) / self.angular_width)

    def value(self, q):
        return self.base.value(q) - self.amplitude * self.bump_weight(q)

    def gradient(self, q):
        g = self.base.gradient(q)
        if self.amplitude == 0.0:
            return g
        q = np.asarray(q, dtype=float)
        u = q - self.anchor
        theta = self._angle(q)
        s = theta / self.angular_width
        w = _mollifier(s)
        # d(mollifier)/ds = w * (-2s / (1-s^2)^2); the 1/sin(theta) factor of
        # grad(theta) is cancelled near theta = 0 by the s factor.
        with np.errstate(divide="ignore", invalid="ignore"):
            dw_ds = np.where(np.abs(s) < 1.0, w * (-2.0 * s) / (1.0 - s * s) ** 2, 0.0)
        unorm = np.linalg.norm(u, axis=-1, keepdims=True)
        uhat = u / unorm
        dot = np.sum(uhat * self.direction, axis=-1, keepdims=True)
        perp = dot * uhat - self.direction  # grad(theta) * |u| * sin(theta)
        sin_t = np.sin(theta)[..., None]
        factor = np.where(sin_t > 1e-12, dw_ds[..., None] / (self.angular_width * unorm * np.where(sin_t > 1e-12, sin_t, 1.0)), 0.0)
        return g - self.amplitude * factor * perp

    def bounding_sphere(self, slack: float = 0.0):
        return self.base.bounding_sphere(max(slack, 0.0) + self.amplitude)

    def surface_points(self, n: int = SURFACE_SAMPLES):
        return _project_to_surface(self, self.base.surface_points(n))


@dataclass(frozen=True, eq=False)
class BumpSpec:
    """Where and how wide a boundary bump is, without its amplitude."""

    direction: np.ndarray
    angular_width: float
    anchor: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PerturbationFamily:
    """Declares which scene body a sweep perturbs and with what bump."""

    body_index: int
    spec: BumpSpec


@dataclass(frozen=True, eq=False)
class Scene:
    """Obstacle bodies inside a bounding ball; the free region is the closure
    of the ball minus the obstacles."""

    dimension: int
    bodies: tuple
    center: np.ndarray
    radius: float
    min_separation: float | None = None
    strictly_convex: bool = False
    perturbation: PerturbationFamily | None = None
    name: str = ""

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise GeometryError("only dimensions 2 and 3 are supported")
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "center", as_point(self.center, self.dimension))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0.0:
            raise GeometryError("bounding radius must be positive")
        for b in self.bodies:
            if b.dimension != self.dimension:
                raise GeometryError("body dimension does not match the scene")

    @property
    def scale(self) -> float:
        return self.radius

    @property
    def hit_tol(self) -> float:
        return 1e-9 * self.radius

    def min_field(self, q):
        """Minimum obstacle field over all bodies; +inf for an empty scene."""
        q = np.asarray(q, dtype=float)
        if not self.bodies:
            return np.full(q.shape[:-1], np.inf)
        return np.min([b.value(q) for b in self.bodies], axis=0)

    def contains(self, q, slack: float = 1e-9):
        """True where q lies in the free region, within relative slack."""
        q = np.asarray(q, dtype=float)
        inside_ball = np.linalg.norm(q - self.center, axis=-1) <= self.radius * (1.0 + slack)
        return inside_ball & (self.min_field(q) >= -slack * self.radius)


def eval_body(body: ImplicitBody, q) -> float:
    """Scalar field of one body: negative inside, positive outside, 0 on the surface."""
    return float(body.value(as_point(q, body.dimension)))


def inward_normal(body: ImplicitBody, q) -> np.ndarray:
    """Unit normal at a surface point, pointing out of the obstacle into the
    free region (the normalized field gradient)."""
    q = as_point(q, body.dimension)
    g = body.gradient(q)
    norm = float(np.linalg.norm(g))
    if norm < GRAD_FLOOR:
        raise DegenerateGradient(f"gradient norm {norm:.3e} below {GRAD_FLOOR} at {q}")
    return g / norm


def perturb(base: ImplicitBody, eps: float, spec: BumpSpec,
            bounding_center=None, bounding_radius: float | None = None) -> RadialBump:
    """One-parameter family of boundary perturbations with identity at eps = 0.

    Returns a bumped body whose field differs from the base by at most ``eps``
    in sup norm. When a bounding ball is supplied, raises PerturbationTooLarge
    if the perturbed surface leaves it (sampled check, as at scene load).
    """
    if eps < 0.0:
        raise GeometryError("perturbation size must be non-negative")
    bumped = RadialBump(base=base, amplitude=float(eps), direction=spec.direction,
                        angular_width=spec.angular_width, anchor=spec.anchor)
    if bounding_radius is not None:
        center = as_point(bounding_center, base.dimension)
        pts = bumped.surface_points()
        limit = bounding_radius * (1.0 - CONTAINMENT_SLACK)
        worst = float(np.max(np.linalg.norm(pts - center, axis=-1)))
        if worst > limit:
            raise PerturbationTooLarge(
                f"perturbed surface reaches {worst:.6g}, limit {limit:.6g}")
    return bumped


def perturbed_scene(scene: Scene, eps: float) -> Scene:
    """Scene with its declared perturbation family applied at size eps."""
    if scene.perturbation is None:
        raise GeometryError("scene declares no perturbation family")
    fam = scene.perturbation
    bodies = list(scene.bodies)
    bodies[fam.body_index] = perturb(bodies[fam.body_index], eps, fam.spec,
                                     bounding_center=scene.center,
                                     bounding_radius=scene.radius)
    return Scene(dimension=scene.dimension, bodies=tuple(bodies), center=scene.center,
                 radius=scene.radius, min_separation=scene.min_separation,
                 strictly_convex=scene.strictly_convex, perturbation=scene.perturbation,
                 name=f"{scene.name}@eps={eps:g}" if scene.name else "")


def validate_scene(scene: Scene, samples_per_body: int = SURFACE_SAMPLES) -> None:
    """Load-time invariants: containment, surface regularity, separation.

    All checks are sampled (default 4096 surface points per body), not
    certified.  Raises SceneValidationError on the first violation.
    """
    limit = scene.radius * (1.0 - CONTAINMENT_SLACK)
    clouds = []
    for i, body in enumerate(scene.bodies):
        pts = body.surface_points(samples_per_body)
        dist = np.linalg.norm(pts - scene.center, axis=-1)
        if float(np.max(dist)) > limit:
            raise SceneValidationError(
                f"body {i} reaches {float(np.max(dist)):.6g} from the center, "
                f"limit {limit:.6g}")
        gnorm = np.linalg.norm(body.gradient(pts), axis=-1)
        if float(np.min(gnorm)) < GRAD_FLOOR:
            raise SceneValidationError(
                f"body {i} has gradient norm {float(np.min(gnorm)):.3e} on its surface")
        resid = np.abs(body.value(pts))
        if float(np.max(resid)) > 1e-6 * scene.radius:
            raise SceneValidationError(
                f"body {i} surface sampling did not converge (|f| up to "
                f"{float(np.max(resid)):.3e})")
        clouds.append(pts)
    if scene.min_separation is not None and len(scene.bodies) >= 2:
        from scipy.spatial import cKDTree

        for i in range(len(clouds)):
            tree = cKDTree(clouds[i])
            for j in range(i + 1, len(clouds)):
                d, _ = tree.query(clouds[j], k=1)
                if float(np.min(d)) < scene.min_separation * (1.0 - 1e-3):
                    raise SceneValidationError(
                        f"bodies {i} and {j} are {float(np.min(d)):.6g} apart, "
                        f"declared separation {scene.min_separation}")


def _project_to_surface(body: ImplicitBody, seeds: np.ndarray, iters: int = 60) -> np.ndarray:
    """Newton-project points onto the zero set along the field gradient."""
    q = np.array(seeds, dtype=float)
    for _ in range(iters):
        f = body.value(q)
        if float(np.max(np.abs(f))) < 1e-13:
            break
        g = body.gradient(q)
        gn2 = np.sum(g * g, axis=-1)
        gn2 = np.maximum(gn2, GRAD_FLOOR**2)
        step = (f / gn2)[..., None] * g
        # Damp long steps; the blend field is not a distance function.
        norm = np.linalg.norm(step, axis=-1, keepdims=True)
        cap = 0.25 * _body_scale(body)
        scale = np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)
        step = step * scale
        q = q - step
    keep = np.abs(body.value(q)) < 1e-9 * _body_scale(body)
    if not np.any(keep):
        raise GeometryError("surface projection failed for every seed point")
    return q[keep]


@lru_cache(maxsize=None)
def _body_scale(body: ImplicitBody) -> float:
    _, radius = body.bounding_sphere()
    return max(radius, 1e-12)


def _sphere_directions(n: int, dim: int) -> np.ndarray:
    if dim == 2:
        t = (np.arange(n) + 0.5) * (2.0 * math.pi / n)
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    # Fibonacci lattice on the 2-sphere.
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0) * radius**dim


# --- flattened field programs (consumed by the tracing kernels) -----------


def compile_body(body: ImplicitBody):
    """Flatten a body into postorder (ops, iparams, fparams) arrays.

    Two-dimensional bodies are embedded in the z = 0 plane; all kernel
    arithmetic is three-dimensional.
    """
    ops, iparams, fparams = [], [], []
    _emit(body, ops, iparams, fparams)
    return (np.asarray(ops, dtype=np.int64),
            np.asarray(iparams, dtype=np.int64),
            np.asarray(fparams, dtype=np.float64).reshape(len(ops), N_FPARAMS))


def _pad3(vec) -> np.ndarray:
    v = np.zeros(3)
    v[: len(vec)] = vec
    return v


def _emit(body, ops, iparams, fparams):
    row = np.zeros(N_FPARAMS)
    if isinstance(body, Ball):
        row[0:3] = _pad3(body.center)
        row[3] = body.radius
        ops.append(OP_BALL); iparams.append(0); fparams.append(row)
    elif isinstance(body, Ellipsoid):
        n = body.dimension
        row[0:3] = _pad3(body.center)
        inv_axes = np.ones(3)
        inv_axes[:n] = 1.0 / body.semi_axes
        row[3:6] = inv_axes
        rot_t = np.eye(3)
        if body.rotation is not None:
            rot_t[:n, :n] = body.rotation.T
        row[6:15] = rot_t.reshape(-1)
        ops.append(OP_ELLIPSOID); iparams.append(0); fparams.append(row)
    elif isinstance(body, SmoothUnion):
        for child in body.children:
            _emit(child, ops, iparams, fparams)
        row[0] = body.kappa
        ops.append(OP_SMOOTH_UNION); iparams.append(len(body.children)); fparams.append(row)
    elif isinstance(body, RadialBump):
        _emit(body.base, ops, iparams, fparams)
        row[0] = body.amplitude
        row[1:4] = _pad3(body.direction)
        row[4] = body.angular_width
        row[5:8] = _pad3(body.anchor)
        ops.append(OP_RADIAL_BUMP); iparams.append(0); fparams.append(row)
    else:
        raise GeometryError(f"cannot compile body of type {type(body).__name__}")
