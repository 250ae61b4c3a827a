"""Scene files and the bundled scene library.

A scene document is YAML with a fixed vocabulary; unknown keys are errors so
typos fail closed.  Top level::

    name: two_disks            # optional
    dimension: 2
    bounding_ball: {center: [0.0, 0.0], radius: 5.0}
    bodies: [...]
    min_separation: 2.0        # optional, enables the upper reflection bound
    strictly_convex: true      # optional, declares strictly convex components
    perturbation:              # optional bump family for sweeps
      body: 0
      direction: [1.0, 0.0]
      angular_width: 1.2
      anchor: [0.0, 0.0]       # optional

Body kinds: ``ball {center, radius}``, ``ellipsoid {center, semi_axes,
rotation?}``, ``smooth_union {kappa?, children}`` (kappa defaults to
0.05 * bounding radius), ``radial_bump {base, amplitude, direction,
angular_width, anchor?}``.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources

import numpy as np
import yaml

from .geometry import (
    Ball,
    BumpSpec,
    Ellipsoid,
    GeometryError,
    ImplicitBody,
    PerturbationFamily,
    RadialBump,
    Scene,
    SmoothUnion,
    validate_scene,
)

BUNDLED = ("disk_empty", "single_ball", "single_ball_3d", "two_disks",
           "five_balls", "livshits_cavity")

DEFAULT_KAPPA_FACTOR = 0.05


class SceneFormatError(GeometryError):
    """The scene document does not follow the format."""


def _require_keys(mapping, allowed, required, context):
    if not isinstance(mapping, dict):
        raise SceneFormatError(f"{context}: expected a mapping")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise SceneFormatError(f"{context}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(mapping)
    if missing:
        raise SceneFormatError(f"{context}: missing keys {sorted(missing)}")


def _floats(value, context):
    try:
        arr = [float(x) for x in value]
    except (TypeError, ValueError) as exc:
        raise SceneFormatError(f"{context}: expected a list of numbers") from exc
    return arr


def parse_scene(text: str) -> Scene:
    """Parse and return a Scene; raises SceneFormatError on malformed input."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SceneFormatError(f"not valid YAML: {exc}") from exc
    return scene_from_dict(doc)


def scene_from_dict(doc) -> Scene:
    _require_keys(doc, ["name", "dimension", "bounding_ball", "bodies",
                        "min_separation", "strictly_convex", "perturbation"],
                  ["dimension", "bounding_ball", "bodies"], "scene")
    dim = doc["dimension"]
    if dim not in (2, 3):
        raise SceneFormatError(f"dimension must be 2 or 3, got {dim!r}")
    _require_keys(doc["bounding_ball"], ["center", "radius"],
                  ["center", "radius"], "bounding_ball")
    center = _floats(doc["bounding_ball"]["center"], "bounding_ball.center")
    if len(center) != dim:
        raise SceneFormatError("bounding_ball.center has the wrong dimension")
    radius = float(doc["bounding_ball"]["radius"])
    if radius <= 0.0:
        raise SceneFormatError("bounding_ball.radius must be positive")
    if not isinstance(doc["bodies"], list):
        raise SceneFormatError("bodies must be a list")
    bodies = tuple(_body_from_dict(b, dim, radius, f"bodies[{i}]")
                   for i, b in enumerate(doc["bodies"]))
    perturbation = None
    if doc.get("perturbation") is not None:
        p = doc["perturbation"]
        _require_keys(p, ["body", "direction", "angular_width", "anchor"],
                      ["body", "direction", "angular_width"], "perturbation")
        idx = int(p["body"])
        if not 0 <= idx < len(bodies):
            raise SceneFormatError(f"perturbation.body {idx} out of range")
        anchor = None
        if p.get("anchor") is not None:
            anchor = np.asarray(_floats(p["anchor"], "perturbation.anchor"))
        perturbation = PerturbationFamily(
            body_index=idx,
            spec=BumpSpec(direction=np.asarray(_floats(p["direction"],
                                                       "perturbation.direction")),
                          angular_width=float(p["angular_width"]),
                          anchor=anchor))
    min_sep = doc.get("min_separation")
    try:
        return Scene(dimension=dim, bodies=bodies, center=np.asarray(center),
                     radius=radius,
                     min_separation=None if min_sep is None else float(min_sep),
                     strictly_convex=bool(doc.get("strictly_convex", False)),
                     perturbation=perturbation,
                     name=str(doc.get("name", "")))
    except GeometryError as exc:
        raise SceneFormatError(str(exc)) from exc


def _body_from_dict(b, dim, radius, context) -> ImplicitBody:
    if not isinstance(b, dict) or "kind" not in b:
        raise SceneFormatError(f"{context}: a body needs a 'kind'")
    kind = b["kind"]
    try:
        if kind == "ball":
            _require_keys(b, ["kind", "center", "radius"],
                          ["kind", "center", "radius"], context)
            center = _floats(b["center"], f"{context}.center")
            if len(center) != dim:
                raise SceneFormatError(f"{context}: center dimension mismatch")
            return Ball(center=np.asarray(center), radius=float(b["radius"]))
        if kind == "ellipsoid":
            _require_keys(b, ["kind", "center", "semi_axes", "rotation"],
                          ["kind", "center", "semi_axes"], context)
            center = _floats(b["center"], f"{context}.center")
            axes = _floats(b["semi_axes"], f"{context}.semi_axes")
            if len(center) != dim or len(axes) != dim:
                raise SceneFormatError(f"{context}: dimension mismatch")
            rot = None
            if b.get("rotation") is not None:
                rot = np.asarray([[float(x) for x in row] for row in b["rotation"]])
            return Ellipsoid(center=np.asarray(center), semi_axes=np.asarray(axes),
                             rotation=rot)
        if kind == "smooth_union":
            _require_keys(b, ["kind", "kappa", "children"], ["kind", "children"],
                          context)
            kappa = float(b.get("kappa", DEFAULT_KAPPA_FACTOR * radius))
            children = tuple(_body_from_dict(c, dim, radius, f"{context}.children[{i}]")
                             for i, c in enumerate(b["children"]))
            return SmoothUnion(children=children, kappa=kappa)
        if kind == "radial_bump":
            _require_keys(b, ["kind", "base", "amplitude", "direction",
                              "angular_width", "anchor"],
                          ["kind", "base", "amplitude", "direction",
                           "angular_width"], context)
            anchor = None
            if b.get("anchor") is not None:
                anchor = np.asarray(_floats(b["anchor"], f"{context}.anchor"))
            return RadialBump(
                base=_body_from_dict(b["base"], dim, radius, f"{context}.base"),
                amplitude=float(b["amplitude"]),
                direction=np.asarray(_floats(b["direction"], f"{context}.direction")),
                angular_width=float(b["angular_width"]),
                anchor=anchor)
    except GeometryError as exc:
        raise SceneFormatError(f"{context}: {exc}") from exc
    raise SceneFormatError(f"{context}: unknown body kind {kind!r}")


def scene_to_dict(scene: Scene) -> dict:
    doc = {
        "dimension": scene.dimension,
        "bounding_ball": {"center": [float(x) for x in scene.center],
                          "radius": float(scene.radius)},
        "bodies": [_body_to_dict(b) for b in scene.bodies],
    }
    if scene.name:
        doc["name"] = scene.name
    if scene.min_separation is not None:
        doc["min_separation"] = float(scene.min_separation)
    if scene.strictly_convex:
        doc["strictly_convex"] = True
    if scene.perturbation is not None:
        fam = scene.perturbation
        p = {"body": fam.body_index,
             "direction": [float(x) for x in fam.spec.direction],
             "angular_width": float(fam.spec.angular_width)}
        if fam.spec.anchor is not None:
            p["anchor"] = [float(x) for x in fam.spec.anchor]
        doc["perturbation"] = p
    return doc


def _body_to_dict(body: ImplicitBody) -> dict:
    if isinstance(body, Ball):
        return {"kind": "ball", "center": [float(x) for x in body.center],
                "radius": float(body.radius)}
    if isinstance(body, Ellipsoid):
        d = {"kind": "ellipsoid", "center": [float(x) for x in body.center],
             "semi_axes": [float(x) for x in body.semi_axes]}
        if body.rotation is not None:
            d["rotation"] = [[float(x) for x in row] for row in body.rotation]
        return d
    if isinstance(body, SmoothUnion):
        return {"kind": "smooth_union", "kappa": float(body.kappa),
                "children": [_body_to_dict(c) for c in body.children]}
    if isinstance(body, RadialBump):
        return {"kind": "radial_bump", "base": _body_to_dict(body.base),
                "amplitude": float(body.amplitude),
                "direction": [float(x) for x in body.direction],
                "angular_width": float(body.angular_width),
                "anchor": [float(x) for x in body.anchor]}
    raise GeometryError(f"cannot serialize body of type {type(body).__name__}")


def serialize_scene(scene: Scene) -> str:
    return yaml.safe_dump(scene_to_dict(scene), sort_keys=False,
                          default_flow_style=None)


def scene_hash(scene: Scene) -> str:
    """Stable content hash of the scene (canonical JSON, full float precision)."""
    canon = json.dumps(scene_to_dict(scene), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Field-by-field equality through the canonical dictionary form."""
    return scene_to_dict(a) == scene_to_dict(b)


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        scene = parse_scene(fh.read())
    validate_scene(scene)
    return scene


def bundled_scene_text(name: str) -> str:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scene {name!r}; have {BUNDLED}")
    return resources.files("openbilliard").joinpath(f"data/{name}.yaml").read_text()


def load_bundled(name: str, validate: bool = True) -> Scene:
    scene = parse_scene(bundled_scene_text(name))
    if validate:
        validate_scene(scene)
    return scene
