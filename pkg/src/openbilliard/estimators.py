"""Monte Carlo estimators built on the travelling-time identity.

With f = 1 the boundary integral of travelling times equals the phase-space
volume of the free region, which yields, in turn: a consistency check
(santalo), obstacle volume recovery, the trapped-set measure as the deficit
``lambda_total - integral``, reflection-count bounds, component counting, and
an empirical perturbation sweep of the trapped measure.

Censored trajectories contribute their elapsed time, never an extrapolation,
so the travelling-time integral is a certified lower bound and the trapped
measure a certified upper bound at any finite cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .dynamics import Caps, default_caps, trace_entries
from .geometry import Scene, perturbed_scene, validate_scene, _ball_volume
from .measure import (
    VOLUME_MC_POINTS,
    LiouvilleSampler,
    lambda_total,
    mu_total,
    sphere_surface_measure,
)
from .raycast import DEFAULT_STRIDE_FACTOR

DEGENERATE_ALARM = 1e-4  # tolerated degenerate fraction before an estimate is suspect


class BoundViolation(RuntimeError):
    """A reflection-count bound failed beyond Monte Carlo slack."""

    def __init__(self, message, histogram=None):
        super().__init__(message)
        self.histogram = histogram


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its sampling provenance."""

    value: float
    std_error: float
    n_samples: int = 0
    n_censored: int = 0
    n_degenerate: int = 0
    t_max: float | None = None
    k_max: int | None = None
    seed: int | None = None

    @property
    def reliable(self) -> bool:
        if self.n_samples == 0:
            return True
        return self.n_degenerate <= DEGENERATE_ALARM * self.n_samples


@dataclass(frozen=True)
class TraceData:
    """Raw per-trajectory results of one seeded batch."""

    codes: np.ndarray
    times: np.ndarray
    reflections: np.ndarray
    caps: Caps
    seed: int

    @property
    def n(self) -> int:
        return len(self.codes)

    @property
    def valid(self) -> np.ndarray:
        return self.codes <= _kernels.OUT_CENSORED_REFL

    @property
    def n_censored(self) -> int:
        return int(np.count_nonzero(
            (self.codes == _kernels.OUT_CENSORED_TIME)
            | (self.codes == _kernels.OUT_CENSORED_REFL)))

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.codes > _kernels.OUT_CENSORED_REFL))


def run_traces(scene: Scene, n_samples: int, caps: Caps | None = None,
               seed: int = 0, workers: int = 1,
               stride_factor: float = DEFAULT_STRIDE_FACTOR) -> TraceData:
    """Sample entries and trace them; the common driver of every estimator."""
    if caps is None:
        caps = default_caps(scene)
    sampler = LiouvilleSampler(scene, seed)
    qs, vs = sampler.sample_entries(0, n_samples)
    codes, times, refl, _ = trace_entries(scene, qs, vs, caps,
                                          stride_factor=stride_factor,
                                          workers=workers)
    return TraceData(codes=codes, times=times, reflections=refl,
                     caps=caps, seed=seed)


def _time_mean(data: TraceData):
    """Mean and standard error of elapsed times over non-degenerate samples."""
    t = data.times[data.valid]
    n_eff = len(t)
    if n_eff == 0:
        return 0.0, 0.0, 0
    mean = float(np.mean(t))
    if n_eff > 1:
        se = float(np.std(t, ddof=1)) / math.sqrt(n_eff)
    else:
        se = 0.0
    return mean, se, n_eff


def _estimate_from(data: TraceData, value, std_error) -> Estimate:
    return Estimate(value=float(value), std_error=float(std_error),
                    n_samples=data.n, n_censored=data.n_censored,
                    n_degenerate=data.n_degenerate,
                    t_max=data.caps.t_max, k_max=data.caps.k_max, seed=data.seed)


def travel_time_integral(scene: Scene, n_samples: int, caps: Caps | None = None,
                         seed: int = 0, workers: int = 1,
                         data: TraceData | None = None) -> Estimate:
    """Estimate of the travelling-time integral over inward sphere states.

    Censored trajectories contribute their elapsed time as a lower bound; the
    censored count in the result exposes the (downward) bias direction.
    """
    if data is None:
        data = run_traces(scene, n_samples, caps, seed, workers)
    mean, se, _ = _time_mean(data)
    mu = mu_total(scene)
    return _estimate_from(data, mu * mean, mu * se)


def recover_volume(scene: Scene, n_samples: int, caps: Caps | None = None,
                   seed: int = 0, workers: int = 1,
                   data: TraceData | None = None) -> Estimate:
    """Obstacle volume recovered from travelling times alone:
    Vol(bounding ball) - integral / Vol(unit direction sphere).

    Meaningful when trapping has measure zero; with trapping present the
    censored count exposes the violation and the volume is over-estimated.
    """
    integral = travel_time_integral(scene, n_samples, caps, seed, workers, data)
    s = sphere_surface_measure(scene.dimension)
    vol_m = _ball_volume(scene.dimension, scene.radius)
    return Estimate(value=vol_m - integral.value / s,
                    std_error=integral.std_error / s,
                    n_samples=integral.n_samples, n_censored=integral.n_censored,
                    n_degenerate=integral.n_degenerate, t_max=integral.t_max,
                    k_max=integral.k_max, seed=integral.seed)


@dataclass(frozen=True)
class TrappedResult:
    """Trapped-set measure estimate plus its censoring diagnostics."""

    estimate: Estimate
    half_cap_value: float   # same estimator evaluated at T_max / 2
    cap_bias_bound: float   # mu_total * censored fraction * T_max

    @property
    def value(self) -> float:
        return self.estimate.value

    @property
    def std_error(self) -> float:
        return self.estimate.std_error


def trapped_measure(scene: Scene, n_samples: int, caps: Caps | None = None,
                    seed: int = 0, workers: int = 1,
                    mc_points: int = VOLUME_MC_POINTS,
                    data: TraceData | None = None) -> TrappedResult:
    """Measure of the trapped phase-space set: lambda_total minus the
    travelling-time integral.

    Censoring truncates travelling times, so the value is an upper bound on
    the trapped measure; the half-cap value makes convergence in the cap
    visible.
    """
    if data is None:
        data = run_traces(scene, n_samples, caps, seed, workers)
    lam = lambda_total(scene, mc_points)
    mu = mu_total(scene)
    mean, se, n_eff = _time_mean(data)
    value = lam.value - mu * mean
    sigma = math.hypot(lam.std_error, mu * se)
    est = _estimate_from(data, value, sigma)
    half_times = np.minimum(data.times[data.valid], data.caps.t_max / 2.0)
    half_value = lam.value - mu * float(np.mean(half_times)) if n_eff else lam.value
    n_time_censored = int(np.count_nonzero(data.codes == _kernels.OUT_CENSORED_TIME))
    bias = mu * (n_time_censored / max(n_eff, 1)) * data.caps.t_max
    return TrappedResult(estimate=est, half_cap_value=float(half_value),
                         cap_bias_bound=float(bias))


@dataclass(frozen=True)
class ReflectionHistogram:
    """Exited-trajectory reflection counts converted to measure masses."""

    counts: np.ndarray          # counts[k] = exited trajectories with k reflections
    n_samples: int
    n_censored: int
    n_degenerate: int
    mu_total: float
    lambda_value: float
    lambda_std_error: float
    weighted_sum: float         # S = sum (k+1) mass_k
    weighted_sum_std_error: float
    diameter: float
    min_separation: float | None
    lower_bound: float          # lambda / D
    upper_bound: float | None   # lambda / d when declared
    decay_constant: float       # max_k (k+1) * mass_k
    caps: Caps
    seed: int

    @property
    def masses(self) -> np.ndarray:
        return self.mu_total * self.counts / self.n_samples

    @property
    def censored_mass(self) -> float:
        return self.mu_total * self.n_censored / self.n_samples

    @property
    def degenerate_mass(self) -> float:
        return self.mu_total * self.n_degenerate / self.n_samples

    def bookkeeping_exact(self) -> bool:
        """Exact bucket identity on counts: all buckets sum to the total."""
        total = Fraction(int(np.sum(self.counts)) + self.n_censored
                         + self.n_degenerate, self.n_samples)
        return total == 1

    @property
    def lower_bound_holds(self) -> bool:
        return self.weighted_sum + 3.0 * self._combined_sigma(self.diameter) \
            >= self.lower_bound

    @property
    def upper_bound_holds(self) -> bool | None:
        if self.upper_bound is None:
            return None
        return self.weighted_sum - 3.0 * self._combined_sigma(self.min_separation) \
            <= self.upper_bound

    def _combined_sigma(self, denom) -> float:
        return math.hypot(self.weighted_sum_std_error,
                          self.lambda_std_error / denom)


def reflection_histogram(scene: Scene, n_samples: int, caps: Caps | None = None,
                         seed: int = 0, workers: int = 1,
                         mc_points: int = VOLUME_MC_POINTS,
                         check: bool = True,
                         data: TraceData | None = None) -> ReflectionHistogram:
    """Histogram of exited reflection counts with the two-sided bound audit.

    The weighted sum S = sum (k+1) mass_k must lie between lambda/diameter and
    lambda/min_separation (the latter when the scene declares a separation and
    strictly convex components).  Raises BoundViolation beyond 3 sigma slack
    when ``check`` is set; the exception carries the histogram.
    """
    if data is None:
        data = run_traces(scene, n_samples, caps, seed, workers)
    exited = data.codes == _kernels.OUT_EXITED
    ks = data.reflections[exited]
    kmax = int(np.max(ks)) if len(ks) else 0
    counts = np.bincount(ks, minlength=kmax + 1).astype(np.int64)
    mu = mu_total(scene)
    lam = lambda_total(scene, mc_points)
    weights = np.where(exited, data.reflections + 1.0, 0.0)
    S = mu * float(np.mean(weights))
    S_se = mu * float(np.std(weights, ddof=1)) / math.sqrt(data.n)
    D = 2.0 * scene.radius
    masses = mu * counts / data.n
    decay_c = float(np.max((np.arange(len(counts)) + 1) * masses)) if len(counts) else 0.0
    upper = None
    if scene.min_separation is not None and scene.strictly_convex:
        upper = lam.value / scene.min_separation
    hist = ReflectionHistogram(
        counts=counts, n_samples=data.n, n_censored=data.n_censored,
        n_degenerate=data.n_degenerate, mu_total=mu,
        lambda_value=lam.value, lambda_std_error=lam.std_error,
        weighted_sum=S, weighted_sum_std_error=S_se, diameter=D,
        min_separation=scene.min_separation,
        lower_bound=lam.value / D, upper_bound=upper, decay_constant=decay_c,
        caps=data.caps, seed=data.seed)
    if check:
        if not hist.lower_bound_holds:
            raise BoundViolation(
                f"weighted reflection sum {S:.6g} below lambda/D = "
                f"{hist.lower_bound:.6g} beyond 3 sigma", hist)
        if hist.upper_bound_holds is False:
            raise BoundViolation(
                f"weighted reflection sum {S:.6g} above lambda/d = "
                f"{hist.upper_bound:.6g} beyond 3 sigma", hist)
    return hist


@dataclass(frozen=True)
class ComponentCount:
    """Component count recovered from a volume estimate and a known radius."""

    k_value: float
    k_rounded: int
    k_std_error: float


def count_components(volume_estimate: Estimate, radius: float, dim: int) -> ComponentCount:
    """Number of equal balls of the given radius that make up the recovered
    volume: k = Vol / (pi^(n/2) a^n / Gamma(n/2 + 1))."""
    if radius <= 0.0:
        raise ValueError("component radius must be positive")
    ball = math.pi ** (dim / 2.0) * radius**dim / math.gamma(dim / 2.0 + 1.0)
    k = volume_estimate.value / ball
    return ComponentCount(k_value=k, k_rounded=int(round(k)),
                          k_std_error=volume_estimate.std_error / ball)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    trapped: TrappedResult


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    @property
    def baseline(self) -> TrappedResult:
        for row in self.rows:
            if row.eps == 0.0:
                return row.trapped
        raise ValueError("sweep rows lack the eps = 0 baseline")

    def deviations(self):
        """|value(eps) - value(0)| per row, in the row order."""
        base = self.baseline.value
        return [(row.eps, abs(row.trapped.value - base)) for row in self.rows]


def perturbation_sweep(scene: Scene, eps_list, n_samples: int,
                       caps: Caps | None = None, seed: int = 0, workers: int = 1,
                       mc_points: int = VOLUME_MC_POINTS,
                       validate: bool = True) -> SweepResult:
    """Trapped-measure stability under the scene's declared boundary bumps.

    Every row shares the same seed, so the eps = 0 row reproduces the
    unperturbed estimate bit for bit and row-to-row differences are smooth in
    eps rather than dominated by sampling noise.
    """
    eps_list = [float(e) for e in eps_list]
    if 0.0 not in eps_list:
        raise ValueError("the eps list must include 0")
    rows = []
    for eps in eps_list:
        sc = perturbed_scene(scene, eps)
        if validate:
            validate_scene(sc)
        rows.append(SweepRow(eps=eps, trapped=trapped_measure(
            sc, n_samples, caps, seed, workers, mc_points)))
    return SweepResult(rows=tuple(rows))


def path_integral(scene: Scene, integrand, n_samples: int,
                  caps: Caps | None = None, seed: int = 0,
                  nodes: int = 8) -> Estimate:
    """Extension hook: mean over entries of the line integral of ``integrand``
    along each trajectory, times mu_total.

    Per-segment Gauss-Legendre quadrature over the recorded boundary polyline;
    exact bookkeeping for exited trajectories (censored ones contribute only
    their completed segments).  Python-loop driven: intended for small sample
    counts and experimentation, not production estimates.
    """
    from .dynamics import Censored, Degenerate, trace_with_points

    if caps is None:
        caps = default_caps(scene)
    sampler = LiouvilleSampler(scene, seed)
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    totals = np.zeros(n_samples)
    keep = np.ones(n_samples, dtype=bool)
    n_cens = 0
    n_degen = 0
    for i in range(n_samples):
        x = sampler.sample_entry(i)
        outcome, pts = trace_with_points(scene, x, caps)
        if isinstance(outcome, Degenerate):
            n_degen += 1
            keep[i] = False
            continue
        if isinstance(outcome, Censored):
            n_cens += 1
        poly = np.vstack([x.q[None, :], pts])
        acc = 0.0
        for a, b in zip(poly[:-1], poly[1:]):
            seg = b - a
            length = float(np.linalg.norm(seg))
            samples = a[None, :] + xg[:, None] * seg[None, :]
            acc += length * float(np.dot(wg, [integrand(p) for p in samples]))
        totals[i] = acc
    mu = mu_total(scene)
    kept = totals[keep]
    mean = float(np.mean(kept)) if len(kept) else 0.0
    se = float(np.std(kept, ddof=1)) / math.sqrt(len(kept)) if len(kept) > 1 else 0.0
    return Estimate(value=mu * mean, std_error=mu * se, n_samples=n_samples,
                    n_censored=n_cens, n_degenerate=n_degen,
                    t_max=caps.t_max, k_max=caps.k_max, seed=seed)
