"""Construct the bundled scenes and write their YAML files into the package.

Run from the repository root:

    python3 scripts/make_scenes.py

The livshits_cavity layout is the product of the tuning runs in
tune_livshits.py: two shallow concave bowls (dense ball chains blended into
smooth arcs) under a flat lid, sealed at the sides, with an open gate between
the bowls.  Bouncing orbits between each bowl and the lid are adiabatically
confined (the gap narrows toward both rims), giving a trapped set of positive
measure that rays entering through the gate can never reach; its measured
value is the regression baseline in the acceptance suite.
"""
import math
import pathlib
import sys

import numpy as np

sys.path.insert(0, "src")
from openbilliard import (
    Ball,
    BumpSpec,
    Ellipsoid,
    PerturbationFamily,
    Scene,
    SmoothUnion,
    validate_scene,
)
from openbilliard.scenes import serialize_scene

LIVSHITS = dict(
    xs=1.80,          # bowl centers at +- xs
    rho=4.0,          # bowl chain radius; the blended mirror is concave up
    rb=0.35,          # chain bead radius
    spacing=0.12,     # bead spacing; kappa >= spacing smooths the facets
    kappa=0.06,
    gate_half=0.45,   # true gate aperture half-width (bead surfaces)
    rim_out=2.90,     # outer rim bead-center x position
    lid_y=0.70,       # lid underside height over the bowl bottoms
    lid_b=0.06,
    wall_x=3.30,
    wall_y=0.40,
    wall_r=0.60,
    bump_ang=1.10,    # bump direction, radians from vertical toward +x
    bump_width=0.45,
    radius=4.5,
)


def livshits_cavity(p=LIVSHITS) -> Scene:
    xs = p["xs"]
    # effective offset of the blended chain surface from the bead centerline
    dstar = p["rb"] + p["kappa"] * math.log(
        math.sqrt(2 * math.pi * p["kappa"] * p["lid_y"]) / p["spacing"])
    ycc = p["rho"] - dstar  # bowl bottoms sit at y = 0
    bodies = []
    rim_in = p["gate_half"] + p["rb"]
    ang_in = math.asin((xs - rim_in) / p["rho"])
    ang_out = math.asin((p["rim_out"] - xs) / p["rho"])
    n_beads = max(int(math.ceil((ang_in + ang_out) * p["rho"] / p["spacing"])) + 1, 5)
    for s in (-1.0, 1.0):
        for i in range(n_beads):
            ang = -math.pi / 2 - s * ang_in + s * (ang_in + ang_out) * i / (n_beads - 1)
            bodies.append(Ball(center=[s * xs + p["rho"] * math.cos(ang),
                                       ycc + p["rho"] * math.sin(ang)],
                               radius=p["rb"]))
        bodies.append(Ball(center=[s * p["wall_x"], p["wall_y"]], radius=p["wall_r"]))
    bodies.append(Ellipsoid(center=[0.0, p["lid_y"] + p["lid_b"]],
                            semi_axes=[p["wall_x"] - 0.1, p["lid_b"]]))
    union = SmoothUnion(children=tuple(bodies), kappa=p["kappa"])
    d = np.array([math.sin(p["bump_ang"]), math.cos(p["bump_ang"])])
    return Scene(dimension=2, bodies=(union,), center=[0.0, 0.0],
                 radius=p["radius"],
                 perturbation=PerturbationFamily(0, BumpSpec(
                     direction=d, angular_width=p["bump_width"],
                     anchor=[0.0, -1.0])),
                 name="livshits_cavity")


def disk_empty() -> Scene:
    return Scene(dimension=2, bodies=(), center=[0.0, 0.0], radius=1.0,
                 name="disk_empty")


def single_ball() -> Scene:
    return Scene(dimension=2, bodies=(Ball(center=[0.0, 0.0], radius=0.5),),
                 center=[0.0, 0.0], radius=2.0,
                 perturbation=PerturbationFamily(0, BumpSpec(
                     direction=[1.0, 0.0], angular_width=1.2, anchor=[0.0, 0.0])),
                 name="single_ball")


def single_ball_3d() -> Scene:
    return Scene(dimension=3, bodies=(Ball(center=[0.0, 0.0, 0.0], radius=0.5),),
                 center=[0.0, 0.0, 0.0], radius=2.0,
                 perturbation=PerturbationFamily(0, BumpSpec(
                     direction=[1.0, 0.0, 0.0], angular_width=1.2,
                     anchor=[0.0, 0.0, 0.0])),
                 name="single_ball_3d")


def two_disks() -> Scene:
    return Scene(dimension=2,
                 bodies=(Ball(center=[-2.0, 0.0], radius=1.0),
                         Ball(center=[2.0, 0.0], radius=1.0)),
                 center=[0.0, 0.0], radius=5.0,
                 min_separation=2.0, strictly_convex=True,
                 name="two_disks")


def five_balls() -> Scene:
    bodies = []
    for k in range(5):
        ang = 2.0 * math.pi * k / 5.0
        bodies.append(Ball(center=[math.cos(ang), math.sin(ang)], radius=0.3))
    return Scene(dimension=2, bodies=tuple(bodies), center=[0.0, 0.0],
                 radius=2.0, name="five_balls")


ALL = {
    "disk_empty": disk_empty,
    "single_ball": single_ball,
    "single_ball_3d": single_ball_3d,
    "two_disks": two_disks,
    "five_balls": five_balls,
    "livshits_cavity": livshits_cavity,
}


def main():
    out_dir = pathlib.Path("src/openbilliard/data")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, builder in ALL.items():
        scene = builder()
        validate_scene(scene)
        path = out_dir / f"{name}.yaml"
        path.write_text(serialize_scene(scene))
        print(f"wrote {path} ({len(scene.bodies)} bodies)")


if __name__ == "__main__":
    main()
