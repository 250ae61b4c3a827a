"""Command-line front end.

Subcommands map one-to-one onto the estimators:

    santalo-check   travelling-time integral vs the phase-space volume
    volume          obstacle volume recovered from travelling times
    trapped         trapped-set measure with cap-convergence diagnostics
    histogram       reflection counts, measure masses, two-sided bound audit
    count           component count from the recovered volume (needs --radius)
    sweep           trapped measure under the scene's bump family (--epsilons)

The result document goes to --out (or stdout) as CSV or structured text; logs
and progress go to stderr.  Every output embeds the seed, sample count, caps,
scene hash, and censored/degenerate counts, so any run can be reproduced
bit for bit from its own header.

Exit codes: 0 ok, 2 usage, 3 scene parse error, 4 scene validation error,
5 reflection-bound violation, 6 unreliable estimate (degenerate fraction).
"""

from __future__ import annotations

import argparse
import io
import logging
import sys

from .dynamics import Caps
from .estimators import (
    BoundViolation,
    count_components,
    perturbation_sweep,
    recover_volume,
    reflection_histogram,
    trapped_measure,
    travel_time_integral,
)
from .geometry import GeometryError, SceneValidationError, validate_scene
from .measure import lambda_total, mu_total
from .scenes import BUNDLED, SceneFormatError, load_bundled, parse_scene, scene_hash

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_BOUND = 5
EXIT_UNRELIABLE = 6

log = logging.getLogger("openbilliard")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="openbilliard",
        description="billiard travelling-time experiments in the exterior of "
                    "smooth obstacles")
    ap.add_argument("--log-level", default="INFO")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, radius=False, epsilons=False):
        p.add_argument("--scene", required=True,
                       help=f"scene file path or bundled name {BUNDLED}")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--samples", type=int, default=100_000)
        p.add_argument("--t-max", type=float, default=None,
                       help="time cap (default 1e3 * bounding radius)")
        p.add_argument("--k-max", type=int, default=10_000)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "text"), default="csv")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads; must not change any output")
        if radius:
            p.add_argument("--radius", type=float, required=True,
                           help="known component radius for counting")
        if epsilons:
            p.add_argument("--epsilons", type=str, required=True,
                           help="comma-separated bump sizes; must include 0")

    common(sub.add_parser("santalo-check", help="integral identity audit"))
    common(sub.add_parser("volume", help="obstacle volume from travelling times"))
    common(sub.add_parser("trapped", help="trapped-set measure"))
    common(sub.add_parser("histogram", help="reflection-count histogram and bounds"))
    common(sub.add_parser("count", help="component count"), radius=True)
    common(sub.add_parser("sweep", help="trapped measure under boundary bumps"),
           epsilons=True)
    return ap


def _load(args):
    name_or_path = args.scene
    if name_or_path in BUNDLED:
        text = None
        try:
            scene = load_bundled(name_or_path, validate=False)
        except SceneFormatError as exc:
            log.error("bundled scene failed to parse: %s", exc)
            raise SystemExit(EXIT_PARSE)
    else:
        try:
            with open(name_or_path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            log.error("cannot read scene file: %s", exc)
            raise SystemExit(EXIT_PARSE)
        try:
            scene = parse_scene(text)
        except SceneFormatError as exc:
            log.error("scene parse error: %s", exc)
            raise SystemExit(EXIT_PARSE)
    try:
        validate_scene(scene)
    except SceneValidationError as exc:
        log.error("scene validation error: %s", exc)
        raise SystemExit(EXIT_VALIDATION)
    return scene


def _caps(args, scene) -> Caps:
    t_max = args.t_max if args.t_max is not None else 1e3 * scene.radius
    return Caps(t_max=float(t_max), k_max=int(args.k_max))


def _meta(args, scene, caps, est=None) -> list[tuple[str, object]]:
    meta = [("scene", scene.name or args.scene),
            ("scene_hash", scene_hash(scene)),
            ("seed", args.seed),
            ("n_samples", args.samples),
            ("t_max", repr(caps.t_max)),
            ("k_max", caps.k_max)]
    if est is not None:
        meta += [("n_censored", est.n_censored), ("n_degenerate", est.n_degenerate)]
    return meta


def _emit(args, header, rows, meta):
    """Write one result document: rows of (column, value) records."""
    buf = io.StringIO()
    if args.format == "csv":
        meta_cols = [k for k, _ in meta]
        buf.write(",".join(meta_cols + header) + "\n")
        meta_vals = [str(v) for _, v in meta]
        for row in rows:
            buf.write(",".join(meta_vals + [_fmt(v) for v in row]) + "\n")
    else:
        for k, v in meta:
            buf.write(f"{k}: {v}\n")
        for row in rows:
            for name, v in zip(header, row):
                buf.write(f"{name}: {_fmt(v)}\n")
            buf.write("\n")
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _check_reliable(est) -> None:
    if not est.reliable:
        log.error("degenerate fraction %d / %d exceeds the alarm threshold",
                  est.n_degenerate, est.n_samples)
        raise SystemExit(EXIT_UNRELIABLE)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    scene = _load(args)
    caps = _caps(args, scene)
    kw = dict(caps=caps, seed=args.seed, workers=args.workers)
    log.info("scene %s (%s), N=%d, seed=%d", scene.name or args.scene,
             scene_hash(scene), args.samples, args.seed)

    if args.command == "santalo-check":
        est = travel_time_integral(scene, args.samples, **kw)
        _check_reliable(est)
        lam = lambda_total(scene)
        sigma = (est.std_error**2 + lam.std_error**2) ** 0.5
        gap = abs(est.value - lam.value)
        verdict = "PASS" if gap <= 3.0 * sigma else "FAIL"
        _emit(args, ["integral", "integral_std_error", "lambda_total",
                     "lambda_std_error", "abs_diff", "sigma_distance", "verdict"],
              [(est.value, est.std_error, lam.value, lam.std_error, gap,
                gap / sigma if sigma > 0 else 0.0, verdict)],
              _meta(args, scene, caps, est))
        return EXIT_OK

    if args.command == "volume":
        est = recover_volume(scene, args.samples, **kw)
        _check_reliable(est)
        _emit(args, ["volume", "std_error", "sigma_over_value"],
              [(est.value, est.std_error,
                est.std_error / abs(est.value) if est.value else float("inf"))],
              _meta(args, scene, caps, est))
        return EXIT_OK

    if args.command == "trapped":
        res = trapped_measure(scene, args.samples, **kw)
        _check_reliable(res.estimate)
        _emit(args, ["trapped", "std_error", "half_cap_trapped",
                     "censored_fraction", "cap_bias_bound"],
              [(res.value, res.std_error, res.half_cap_value,
                res.estimate.n_censored / max(res.estimate.n_samples, 1),
                res.cap_bias_bound)],
              _meta(args, scene, caps, res.estimate))
        return EXIT_OK

    if args.command == "histogram":
        try:
            hist = reflection_histogram(scene, args.samples, **kw)
        except BoundViolation as exc:
            log.error("bound violation: %s", exc)
            hist = exc.histogram
            if hist is not None:
                _emit_histogram(args, scene, caps, hist)
            raise SystemExit(EXIT_BOUND)
        if hist.n_degenerate > 1e-4 * hist.n_samples:
            log.error("degenerate fraction exceeds the alarm threshold")
            raise SystemExit(EXIT_UNRELIABLE)
        _emit_histogram(args, scene, caps, hist)
        return EXIT_OK

    if args.command == "count":
        est = recover_volume(scene, args.samples, **kw)
        _check_reliable(est)
        cc = count_components(est, args.radius, scene.dimension)
        _emit(args, ["radius", "volume", "k_value", "k_rounded", "k_std_error"],
              [(args.radius, est.value, cc.k_value, cc.k_rounded, cc.k_std_error)],
              _meta(args, scene, caps, est))
        return EXIT_OK

    if args.command == "sweep":
        try:
            eps_list = [float(tok) for tok in args.epsilons.split(",")]
        except ValueError:
            log.error("--epsilons must be a comma-separated list of numbers")
            raise SystemExit(2)
        try:
            result = perturbation_sweep(scene, eps_list, args.samples, **kw)
        except (GeometryError, ValueError) as exc:
            log.error("sweep failed: %s", exc)
            raise SystemExit(EXIT_VALIDATION)
        base = result.baseline.value
        rows = [(row.eps, row.trapped.value, row.trapped.std_error,
                 row.trapped.half_cap_value, abs(row.trapped.value - base))
                for row in result.rows]
        first = result.rows[0].trapped.estimate
        _emit(args, ["epsilon", "trapped", "std_error", "half_cap_trapped",
                     "deviation_from_base"], rows, _meta(args, scene, caps, first))
        return EXIT_OK

    raise SystemExit(2)


def _emit_histogram(args, scene, caps, hist):
    rows = [(int(k), int(c), hist.mu_total * c / hist.n_samples, "exited")
            for k, c in enumerate(hist.counts) if c > 0]
    rows.append((-1, hist.n_censored, hist.censored_mass, "censored"))
    rows.append((-2, hist.n_degenerate, hist.degenerate_mass, "degenerate"))
    meta = _meta(args, scene, caps)
    meta += [("n_censored", hist.n_censored), ("n_degenerate", hist.n_degenerate),
             ("weighted_sum", _fmt(hist.weighted_sum)),
             ("weighted_sum_std_error", _fmt(hist.weighted_sum_std_error)),
             ("lower_bound", _fmt(hist.lower_bound)),
             ("upper_bound", _fmt(hist.upper_bound) if hist.upper_bound else ""),
             ("decay_constant", _fmt(hist.decay_constant)),
             ("lower_bound_verdict", "PASS" if hist.lower_bound_holds else "FAIL"),
             ("upper_bound_verdict",
              {True: "PASS", False: "FAIL", None: "N/A"}[hist.upper_bound_holds])]
    _emit(args, ["k", "count", "mu_mass", "bucket"], rows, meta)


if __name__ == "__main__":
    sys.exit(main())
