"""Design loop for the livshits_cavity scene.

Probes the layout built in make_scenes.py: an occupancy map, billiard-map
survival probes inside the bouncing channel, and the trapped estimate at
several caps.  Use this when retuning the cavity parameters.
"""
import math
import sys
import time

import numpy as np

sys.path.insert(0, "src")
from openbilliard import *
from openbilliard.dynamics import Caps
from openbilliard.estimators import trapped_measure

from make_scenes import LIVSHITS as PARAMS, livshits_cavity


def build(p=PARAMS):
    return livshits_cavity(p)


def ascii_map(scene, xlim=3.6, ylo=-1.0, yhi=3.6, nx=110, ny=44):
    xs = np.linspace(-xlim, xlim, nx)
    ys = np.linspace(ylo, yhi, ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    f = scene.bodies[0].value(pts).reshape(ny, nx)
    for row in range(ny - 1, -1, -1):
        print("".join("#" if f[row, col] < 0 else "." for col in range(nx)))


def orbit_probe(scene, x0, tilt=0.0, n_iters=4000):
    """How long a state started just above the floor at x = x0 stays inside."""
    from scipy.optimize import brentq
    from openbilliard.dynamics import billiard_map, UnitPhasePoint, DegenerateHit

    body = scene.bodies[0]
    y0 = brentq(lambda y: float(body.value(np.array([x0, y]))), -0.06, 0.55)
    th = math.pi / 2 + tilt
    x = UnitPhasePoint(q=[x0, y0], v=[math.cos(th), math.sin(th)])
    alive = 0
    try:
        for it in range(n_iters):
            x = billiard_map(scene, x)
            if abs(np.linalg.norm(x.q - scene.center) - scene.radius) < 1e-6 * scene.radius:
                break
            alive = it + 1
    except DegenerateHit:
        pass
    return alive


def measure(scene, n=200_000, seed=11):
    for tf in (50, 100, 200):
        caps = Caps(t_max=tf * scene.radius, k_max=10_000)
        t0 = time.time()
        res = trapped_measure(scene, n, caps, seed=seed, mc_points=2_000_000)
        print(f"  T={tf}R: trapped {res.value:8.3f} +- {res.std_error:.3f} "
              f"({res.value/max(res.std_error,1e-9):5.1f} sig)  half-cap {res.half_cap_value:8.3f} "
              f"cens {res.estimate.n_censored:5d} degen {res.estimate.n_degenerate} "
              f"[{time.time()-t0:.0f}s]")


if __name__ == "__main__":
    sc = build()
    validate_scene(sc)
    print(f"bodies in union: {len(sc.bodies[0].children)}")
    ascii_map(sc, ylo=-1.2, yhi=1.6)
    xs = PARAMS["xs"]
    probes = [(xs, 0.0), (xs + 0.2, 0.0), (xs - 0.3, 0.0), (xs + 0.5, 0.0),
              (xs, 0.3), (xs, 0.6), (xs + 0.3, 0.4), (xs - 0.4, 0.25)]
    for x0, tilt in probes:
        print(f"probe x0={x0:+.2f} tilt={tilt:.2f}: {orbit_probe(sc, x0, tilt)} bounces")
    measure(sc)
