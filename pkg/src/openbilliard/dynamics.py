"""The billiard flow: reflection law, billiard ball map, trajectory tracing.

Trajectories start at the bounding sphere pointing inward, fly straight,
reflect specularly at obstacle boundaries, and end when they cross the sphere
again (Exited), outlive a time or reflection cap (Censored), or meet a
tangency or numerical failure (Degenerate).  The billiard ball map, unlike
``trace``, also reflects at the sphere itself.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import GeometryError, Scene, as_point, as_unit
from .raycast import DEFAULT_STRIDE_FACTOR, compile_scene

DEFAULT_TIME_CAP_FACTOR = 1e3   # T_max default, in units of the bounding radius
DEFAULT_REFLECTION_CAP = 10_000
REVERSAL_TOL_FACTOR = 1e-6      # allowed reversal deviation, relative to R


class CapKind(enum.Enum):
    TIME = "time"
    REFLECTIONS = "reflections"


class DegenerateReason(enum.Enum):
    GRAZING = "grazing"
    STEP_BUDGET = "step_budget"
    GRADIENT_FAILURE = "gradient_failure"


@dataclass(frozen=True)
class UnitPhasePoint:
    """Position and unit direction: the state of the billiard flow."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", as_unit(self.v, q.shape[0]))


@dataclass(frozen=True)
class Caps:
    """Censoring caps; the numerical surrogate for infinite travelling time."""

    t_max: float
    k_max: int


def default_caps(scene: Scene) -> Caps:
    return Caps(t_max=DEFAULT_TIME_CAP_FACTOR * scene.radius,
                k_max=DEFAULT_REFLECTION_CAP)


@dataclass(frozen=True)
class Exited:
    travel_time: float
    reflections: int
    exit: UnitPhasePoint


@dataclass(frozen=True)
class Censored:
    elapsed: float
    reflections: int
    cap_hit: CapKind


@dataclass(frozen=True)
class Degenerate:
    reason: DegenerateReason
    elapsed: float
    reflections: int


TraceOutcome = Exited | Censored | Degenerate

_DEGEN_BY_CODE = {
    _kernels.OUT_DEGEN_GRAZING: DegenerateReason.GRAZING,
    _kernels.OUT_DEGEN_BUDGET: DegenerateReason.STEP_BUDGET,
    _kernels.OUT_DEGEN_GRADIENT: DegenerateReason.GRADIENT_FAILURE,
}


class DegenerateHit(GeometryError):
    """A billiard-map step ran into a grazing or failed boundary hit."""


class ReversalMismatch(AssertionError):
    """Forward and time-reversed trajectories disagree beyond tolerance."""


def reflect(v, normal) -> np.ndarray:
    """Specular reflection: v - 2 <n, v> n, renormalized.

    An involution that fixes the tangential component.
    """
    v = np.asarray(v, dtype=float)
    normal = np.asarray(normal, dtype=float)
    w = v - 2.0 * float(np.dot(normal, v)) * normal
    return w / np.linalg.norm(w)


def _embed(vec, dim):
    out = np.zeros(3)
    out[:dim] = vec
    return out


def inward_sphere_normal(scene: Scene, q) -> np.ndarray:
    n = (scene.center - np.asarray(q, dtype=float)) / scene.radius
    return n / np.linalg.norm(n)


def billiard_map(scene: Scene, x: UnitPhasePoint,
                 stride_factor: float = DEFAULT_STRIDE_FACTOR) -> UnitPhasePoint:
    """One step of the billiard ball map on boundary states.

    Flows to the next boundary hit (obstacle or bounding sphere) and reflects
    there.  Raises DegenerateHit on grazing or failed hits.
    """
    dim = scene.dimension
    cs = compile_scene(scene, stride_factor)
    q3 = _embed(as_point(x.q, dim), dim)
    v3 = _embed(x.v, dim)
    qs = q3.reshape(1, 3)
    vs = v3.reshape(1, 3)
    ok = np.zeros(1, dtype=np.int64)
    out_q = np.zeros((1, 3))
    out_v = np.zeros((1, 3))
    comp = np.zeros(1, dtype=np.int64)
    _kernels.billiard_step_batch(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        qs, vs, cs.stride, cs.hit_tol, cs.graze_tol, ok, out_q, out_v, comp)
    if ok[0] == 0:
        raise DegenerateHit("grazing or failed hit during billiard map step")
    return UnitPhasePoint(q=out_q[0, :dim].copy(), v=out_v[0, :dim].copy())


def billiard_map_batch(scene: Scene, qs3: np.ndarray, vs3: np.ndarray,
                       stride_factor: float = DEFAULT_STRIDE_FACTOR,
                       workers: int = 1):
    """Billiard ball map over a batch of 3d-embedded boundary states.

    Returns (ok, positions, directions, component) where component is -1 for
    the bounding sphere and the body index otherwise; rows with ok == 0 were
    degenerate steps and should be discarded.
    """
    import numba

    cs = compile_scene(scene, stride_factor)
    n = qs3.shape[0]
    ok = np.zeros(n, dtype=np.int64)
    out_q = np.zeros((n, 3))
    out_v = np.zeros((n, 3))
    comp = np.zeros(n, dtype=np.int64)
    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
    _kernels.billiard_step_batch(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        qs3, vs3, cs.stride, cs.hit_tol, cs.graze_tol, ok, out_q, out_v, comp)
    return ok, out_q, out_v, comp


def _check_entry(scene: Scene, x: UnitPhasePoint) -> None:
    r = float(np.linalg.norm(x.q - scene.center))
    if abs(r - scene.radius) > 1e-9 * scene.radius:
        raise GeometryError("trace entry must lie on the bounding sphere")
    if float(np.dot(inward_sphere_normal(scene, x.q), x.v)) <= 0.0:
        raise GeometryError("trace entry must point inward")


def trace(scene: Scene, x: UnitPhasePoint, caps: Caps | None = None,
          stride_factor: float = DEFAULT_STRIDE_FACTOR) -> TraceOutcome:
    """Follow one trajectory from a sphere entry to its end."""
    if caps is None:
        caps = default_caps(scene)
    _check_entry(scene, x)
    dim = scene.dimension
    cs = compile_scene(scene, stride_factor)
    q3 = _embed(x.q, dim)
    v3 = _embed(x.v, dim)
    record = np.zeros((0, 3))
    code, t, k, ex, ey, ez, evx, evy, evz, _ = _kernels.trace_recorded(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        q3[0], q3[1], q3[2], v3[0], v3[1], v3[2],
        caps.t_max, caps.k_max, cs.stride, cs.hit_tol, cs.graze_tol, record)
    return _outcome_from_code(dim, code, t, k, ex, ey, ez, evx, evy, evz)


def _outcome_from_code(dim, code, t, k, ex, ey, ez, evx, evy, evz) -> TraceOutcome:
    if code == _kernels.OUT_EXITED:
        exit_state = UnitPhasePoint(q=np.array([ex, ey, ez])[:dim],
                                    v=np.array([evx, evy, evz])[:dim])
        return Exited(travel_time=float(t), reflections=int(k), exit=exit_state)
    if code == _kernels.OUT_CENSORED_TIME:
        return Censored(elapsed=float(t), reflections=int(k), cap_hit=CapKind.TIME)
    if code == _kernels.OUT_CENSORED_REFL:
        return Censored(elapsed=float(t), reflections=int(k),
                        cap_hit=CapKind.REFLECTIONS)
    return Degenerate(reason=_DEGEN_BY_CODE[int(code)], elapsed=float(t),
                      reflections=int(k))


def trace_with_points(scene: Scene, x: UnitPhasePoint, caps: Caps | None = None,
                      stride_factor: float = DEFAULT_STRIDE_FACTOR):
    """Trace one trajectory and return (outcome, boundary points).

    The points are the reflection points in order, followed by the final
    boundary point for exited trajectories.
    """
    if caps is None:
        caps = default_caps(scene)
    _check_entry(scene, x)
    dim = scene.dimension
    cs = compile_scene(scene, stride_factor)
    q3 = _embed(x.q, dim)
    v3 = _embed(x.v, dim)
    record = np.zeros((caps.k_max + 2, 3))
    code, t, k, ex, ey, ez, evx, evy, evz, nrec = _kernels.trace_recorded(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        q3[0], q3[1], q3[2], v3[0], v3[1], v3[2],
        caps.t_max, caps.k_max, cs.stride, cs.hit_tol, cs.graze_tol, record)
    outcome = _outcome_from_code(dim, code, t, k, ex, ey, ez, evx, evy, evz)
    return outcome, record[:nrec, :dim].copy()


def trace_entries(scene: Scene, qs3: np.ndarray, vs3: np.ndarray, caps: Caps,
                  stride_factor: float = DEFAULT_STRIDE_FACTOR,
                  workers: int = 1):
    """Batch tracing of pre-embedded entries; the estimator work horse.

    Returns (codes, times, reflections, exits) arrays indexed by entry.  The
    results are a pure function of (scene, entries, caps); the worker count
    only partitions the loop.
    """
    import numba

    cs = compile_scene(scene, stride_factor)
    n = qs3.shape[0]
    codes = np.zeros(n, dtype=np.int64)
    times = np.zeros(n)
    refl = np.zeros(n, dtype=np.int64)
    exits = np.zeros((n, 6))
    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))
    _kernels.trace_batch(
        cs.ops, cs.iparams, cs.fparams, cs.slices, cs.bounds,
        cs.center3[0], cs.center3[1], cs.center3[2], cs.radius,
        qs3, vs3, caps.t_max, caps.k_max, cs.stride, cs.hit_tol, cs.graze_tol,
        codes, times, refl, exits)
    return codes, times, refl, exits


def time_reverse_check(scene: Scene, outcome: Exited, entry: UnitPhasePoint,
                       caps: Caps | None = None,
                       stride_factor: float = DEFAULT_STRIDE_FACTOR) -> float:
    """Numerical reversibility audit of one exited trajectory.

    Re-traces forward with recording, then traces from the reversed exit state
    and compares the reflection-point sequences.  Returns the maximum pointwise
    deviation; raises ReversalMismatch if it exceeds 1e-6 * R or the
    reflection counts differ.
    """
    if not isinstance(outcome, Exited):
        raise TypeError("time_reverse_check needs an Exited outcome")
    fwd, fwd_pts = trace_with_points(scene, entry, caps, stride_factor)
    if not isinstance(fwd, Exited):
        raise ReversalMismatch("forward re-trace did not exit")
    back_entry = UnitPhasePoint(q=fwd.exit.q, v=-fwd.exit.v)
    back, back_pts = trace_with_points(scene, back_entry, caps, stride_factor)
    if not isinstance(back, Exited):
        raise ReversalMismatch("reversed trace did not exit")
    if back.reflections != fwd.reflections:
        raise ReversalMismatch(
            f"reflection count {back.reflections} != {fwd.reflections}")
    # Forward boundary sequence: entry, h1, ..., hk.  The backward trace
    # records hk, ..., h1 and finally lands back at the entry position.
    fwd_seq = np.vstack([entry.q[None, :], fwd_pts[:-1]])
    if back_pts.shape != fwd_seq.shape:
        raise ReversalMismatch("boundary sequence lengths differ")
    dev = float(np.max(np.linalg.norm(back_pts - fwd_seq[::-1], axis=1)))
    limit = REVERSAL_TOL_FACTOR * scene.radius
    if dev > limit:
        raise ReversalMismatch(f"reversal deviation {dev:.3e} exceeds {limit:.3e}")
    return dev
