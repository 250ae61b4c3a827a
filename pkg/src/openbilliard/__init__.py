"""Billiard scattering in the exterior of smooth obstacles inside a bounding
ball: high-throughput trajectory tracing and the travelling-time estimators
built on it."""

__version__ = "0.1.0"

from .geometry import (
    Ball,
    BumpSpec,
    Ellipsoid,
    PerturbationFamily,
    RadialBump,
    Scene,
    SmoothUnion,
    eval_body,
    inward_normal,
    perturb,
    perturbed_scene,
    validate_scene,
)
from .dynamics import (
    Caps,
    Censored,
    Degenerate,
    Exited,
    UnitPhasePoint,
    billiard_map,
    default_caps,
    reflect,
    time_reverse_check,
    trace,
)
from .raycast import ExitSphere, Hit, HitRecord, StepBudgetExhausted, first_hit
from .measure import LiouvilleSampler, lambda_total, measure_constants, mu_total
from .estimators import (
    BoundViolation,
    Estimate,
    count_components,
    path_integral,
    perturbation_sweep,
    recover_volume,
    reflection_histogram,
    trapped_measure,
    travel_time_integral,
)
from .scenes import load_bundled, load_scene, parse_scene, scene_hash, serialize_scene
