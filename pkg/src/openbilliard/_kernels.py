"""Compiled tracing core: field-program evaluation, ray marching, trajectories.

Everything here operates on the flattened (ops, iparams, fparams) field
programs produced by :func:`openbilliard.geometry.compile_body`, embedded in
three dimensions (planar scenes keep z = 0 throughout).  All functions are
pure; per-ray outputs land in caller-provided arrays indexed by ray, so
results never depend on thread count or scheduling.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .geometry import (
    OP_BALL,
    OP_ELLIPSOID,
    OP_RADIAL_BUMP,
    OP_SMOOTH_UNION,
    EXP_CUTOFF,
    GRAD_FLOOR,
)

# Fixed numerical policy (lengths are absolute, in scene units).
BISECT_TOL = 1e-12     # bracket width after bisection
MIN_ADVANCE = 1e-12    # hits closer than this to the segment start are skipped
STEP_BUDGET = 100_000  # marching samples allowed per free flight
NEWTON_ITERS = 3
STACK_DEPTH = 64

# Segment event codes.
EV_HIT = 0
EV_EXIT = 1
EV_BUDGET = 2
EV_GRAZE = 3
EV_GRADFAIL = 4

# Trajectory outcome codes.
OUT_EXITED = 0
OUT_CENSORED_TIME = 1
OUT_CENSORED_REFL = 2
OUT_DEGEN_GRAZING = 3
OUT_DEGEN_BUDGET = 4
OUT_DEGEN_GRADIENT = 5


@njit(cache=True)
def _bump_weight(px, py, pz, fp, k):
    dx = fp[k, 1]
    dy = fp[k, 2]
    dz = fp[k, 3]
    width = fp[k, 4]
    ux = px - fp[k, 5]
    uy = py - fp[k, 6]
    uz = pz - fp[k, 7]
    dot = ux * dx + uy * dy + uz * dz
    cx = uy * dz - uz * dy
    cy = uz * dx - ux * dz
    cz = ux * dy - uy * dx
    cross = math.sqrt(cx * cx + cy * cy + cz * cz)
    theta = math.atan2(cross, dot)
    s = theta / width
    if s >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - s * s))


@njit(cache=True)
def prog_value(ops, ip, fp, start, end, px, py, pz, stack):
    """Field value of one compiled body at a point."""
    sp = 0
    for k in range(start, end):
        op = ops[k]
        if op == OP_BALL:
            dx = px - fp[k, 0]
            dy = py - fp[k, 1]
            dz = pz - fp[k, 2]
            stack[sp] = math.sqrt(dx * dx + dy * dy + dz * dz) - fp[k, 3]
            sp += 1
        elif op == OP_ELLIPSOID:
            dx = px - fp[k, 0]
            dy = py - fp[k, 1]
            dz = pz - fp[k, 2]
            ux = fp[k, 3] * (fp[k, 6] * dx + fp[k, 7] * dy + fp[k, 8] * dz)
            uy = fp[k, 4] * (fp[k, 9] * dx + fp[k, 10] * dy + fp[k, 11] * dz)
            uz = fp[k, 5] * (fp[k, 12] * dx + fp[k, 13] * dy + fp[k, 14] * dz)
            stack[sp] = math.sqrt(ux * ux + uy * uy + uz * uz) - 1.0
            sp += 1
        elif op == OP_SMOOTH_UNION:
            nc = ip[k]
            kappa = fp[k, 0]
            m = stack[sp - nc]
            for j in range(sp - nc + 1, sp):
                if stack[j] < m:
                    m = stack[j]
            ssum = 0.0
            for j in range(sp - nc, sp):
                e = (stack[j] - m) / kappa
                if e < EXP_CUTOFF:
                    ssum += math.exp(-e)
            sp -= nc
            stack[sp] = m - kappa * math.log(ssum)
            sp += 1
        else:  # OP_RADIAL_BUMP
            amp = fp[k, 0]
            if amp != 0.0:
                stack[sp - 1] = stack[sp - 1] - amp * _bump_weight(px, py, pz, fp, k)
    return stack[0]


@njit(cache=True)
def prog_value_grad(ops, ip, fp, start, end, px, py, pz, stack, gstack):
    """Field value and analytic gradient of one compiled body at a point."""
    sp = 0
    for k in range(start, end):
        op = ops[k]
        if op == OP_BALL:
            dx = px - fp[k, 0]
            dy = py - fp[k, 1]
            dz = pz - fp[k, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            stack[sp] = r - fp[k, 3]
            if r > 0.0:
                gstack[sp, 0] = dx / r
                gstack[sp, 1] = dy / r
                gstack[sp, 2] = dz / r
            else:
                gstack[sp, 0] = 0.0
                gstack[sp, 1] = 0.0
                gstack[sp, 2] = 0.0
            sp += 1
        elif op == OP_ELLIPSOID:
            dx = px - fp[k, 0]
            dy = py - fp[k, 1]
            dz = pz - fp[k, 2]
            ux = fp[k, 3] * (fp[k, 6] * dx + fp[k, 7] * dy + fp[k, 8] * dz)
            uy = fp[k, 4] * (fp[k, 9] * dx + fp[k, 10] * dy + fp[k, 11] * dz)
            uz = fp[k, 5] * (fp[k, 12] * dx + fp[k, 13] * dy + fp[k, 14] * dz)
            r = math.sqrt(ux * ux + uy * uy + uz * uz)
            stack[sp] = r - 1.0
            if r > 0.0:
                wx = fp[k, 3] * ux / r
                wy = fp[k, 4] * uy / r
                wz = fp[k, 5] * uz / r
                gstack[sp, 0] = fp[k, 6] * wx + fp[k, 9] * wy + fp[k, 12] * wz
                gstack[sp, 1] = fp[k, 7] * wx + fp[k, 10] * wy + fp[k, 13] * wz
                gstack[sp, 2] = fp[k, 8] * wx + fp[k, 11] * wy + fp[k, 14] * wz
            else:
                gstack[sp, 0] = 0.0
                gstack[sp, 1] = 0.0
                gstack[sp, 2] = 0.0
            sp += 1
        elif op == OP_SMOOTH_UNION:
            nc = ip[k]
            kappa = fp[k, 0]
            m = stack[sp - nc]
            for j in range(sp - nc + 1, sp):
                if stack[j] < m:
                    m = stack[j]
            ssum = 0.0
            gx = 0.0
            gy = 0.0
            gz = 0.0
            for j in range(sp - nc, sp):
                e = (stack[j] - m) / kappa
                if e < EXP_CUTOFF:
                    w = math.exp(-e)
                    ssum += w
                    gx += w * gstack[j, 0]
                    gy += w * gstack[j, 1]
                    gz += w * gstack[j, 2]
            sp -= nc
            stack[sp] = m - kappa * math.log(ssum)
            gstack[sp, 0] = gx / ssum
            gstack[sp, 1] = gy / ssum
            gstack[sp, 2] = gz / ssum
            sp += 1
        else:  # OP_RADIAL_BUMP
            amp = fp[k, 0]
            if amp != 0.0:
                dx = fp[k, 1]
                dy = fp[k, 2]
                dz = fp[k, 3]
                width = fp[k, 4]
                ux = px - fp[k, 5]
                uy = py - fp[k, 6]
                uz = pz - fp[k, 7]
                dot = ux * dx + uy * dy + uz * dz
                ccx = uy * dz - uz * dy
                ccy = uz * dx - ux * dz
                ccz = ux * dy - uy * dx
                cross = math.sqrt(ccx * ccx + ccy * ccy + ccz * ccz)
                theta = math.atan2(cross, dot)
                s = theta / width
                if s < 1.0:
                    w = math.exp(1.0 - 1.0 / (1.0 - s * s))
                    stack[sp - 1] = stack[sp - 1] - amp * w
                    if cross > 1e-12:
                        dw_ds = w * (-2.0 * s) / ((1.0 - s * s) * (1.0 - s * s))
                        unorm = math.sqrt(ux * ux + uy * uy + uz * uz)
                        uhx = ux / unorm
                        uhy = uy / unorm
                        uhz = uz / unorm
                        dh = uhx * dx + uhy * dy + uhz * dz
                        # grad(theta) = (cos(theta)*uhat - d) / (|u| sin(theta))
                        # and |u|*sin(theta) = |u x d| = cross.
                        scale = amp * dw_ds / (width * cross)
                        gstack[sp - 1, 0] -= scale * (dh * uhx - dx)
                        gstack[sp - 1, 1] -= scale * (dh * uhy - dy)
                        gstack[sp - 1, 2] -= scale * (dh * uhz - dz)
    return stack[0], gstack[0, 0], gstack[0, 1], gstack[0, 2]


@njit(cache=True)
def _min_value_at(ops, ip, fp, slices, win, t, qx, qy, qz, vx, vy, vz, stack):
    """min over bodies of the field at q + t v; bodies whose padded bounding
    interval misses t are skipped (their field is positive there)."""
    px = qx + t * vx
    py = qy + t * vy
    pz = qz + t * vz
    best = 1.0e300
    for b in range(slices.shape[0]):
        if t < win[b, 0] or t > win[b, 1]:
            continue
        f = prog_value(ops, ip, fp, slices[b, 0], slices[b, 1], px, py, pz, stack)
        if f < best:
            best = f
    return best


@njit(cache=True)
def _argmin_body(ops, ip, fp, slices, px, py, pz, stack):
    best = 1.0e300
    arg = 0
    for b in range(slices.shape[0]):
        f = prog_value(ops, ip, fp, slices[b, 0], slices[b, 1], px, py, pz, stack)
        if f < best:
            best = f
            arg = b
    return arg


@njit(cache=True)
def _slope_at(ops, ip, fp, slices, win, t, qx, qy, qz, vx, vy, vz, stack, gstack):
    """Value and directional derivative of the active minimum field."""
    px = qx + t * vx
    py = qy + t * vy
    pz = qz + t * vz
    best = 1.0e300
    slope = 0.0
    for b in range(slices.shape[0]):
        if t < win[b, 0] or t > win[b, 1]:
            continue
        f, gx, gy, gz = prog_value_grad(
            ops, ip, fp, slices[b, 0], slices[b, 1], px, py, pz, stack, gstack)
        if f < best:
            best = f
            slope = gx * vx + gy * vy + gz * vz
    return best, slope


@njit(cache=True)
def sphere_exit(cx, cy, cz, R, qx, qy, qz, vx, vy, vz):
    """Positive time at which the ray leaves the bounding sphere."""
    ox = qx - cx
    oy = qy - cy
    oz = qz - cz
    b = ox * vx + oy * vy + oz * vz
    c = ox * ox + oy * oy + oz * oz - R * R
    disc = b * b - c
    if disc <= 0.0:
        return -1.0
    return -b + math.sqrt(disc)


@njit(cache=True)
def _ray_interval(bcx, bcy, bcz, br, qx, qy, qz, vx, vy, vz):
    """Entry and exit times of the ray through a sphere; (1, 0) if missed."""
    ox = qx - bcx
    oy = qy - bcy
    oz = qz - bcz
    b = ox * vx + oy * vy + oz * vz
    c = ox * ox + oy * oy + oz * oz - br * br
    disc = b * b - c
    if disc <= 0.0:
        return 1.0, 0.0
    root = math.sqrt(disc)
    return -b - root, -b + root


@njit(cache=True)
def _segment(ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
             qx, qy, qz, vx, vy, vz, stride, hit_tol, graze_tol, stack, gstack):
    """First boundary event along one free flight.

    Returns (event, t, px, py, pz, nx, ny, nz, cos_in, body_index); for
    EV_EXIT the point is the sphere exit and the normal fields are unused.
    """
    t_exit = sphere_exit(cx, cy, cz, R, qx, qy, qz, vx, vy, vz)
    if t_exit <= MIN_ADVANCE:
        return EV_GRAZE, 0.0, qx, qy, qz, 0.0, 0.0, 0.0, 0.0, -1
    nb = slices.shape[0]
    if nb == 0:
        return (EV_EXIT, t_exit, qx + t_exit * vx, qy + t_exit * vy,
                qz + t_exit * vz, 0.0, 0.0, 0.0, 0.0, -1)

    # Per-body windows from the padded bounding spheres; outside every window
    # the scene field is certifiably positive, so marching can skip.
    w0 = 1.0e300
    w1 = -1.0e300
    for b in range(nb):
        ta, tb = _ray_interval(bounds[b, 0], bounds[b, 1], bounds[b, 2],
                               bounds[b, 3], qx, qy, qz, vx, vy, vz)
        if ta > tb or tb < MIN_ADVANCE or ta > t_exit:
            win[b, 0] = 1.0
            win[b, 1] = 0.0
            continue
        if ta < 0.0:
            ta = 0.0
        if tb > t_exit:
            tb = t_exit
        win[b, 0] = ta
        win[b, 1] = tb
        if ta < w0:
            w0 = ta
        if tb > w1:
            w1 = tb
    if w0 > w1:
        return (EV_EXIT, t_exit, qx + t_exit * vx, qy + t_exit * vy,
                qz + t_exit * vz, 0.0, 0.0, 0.0, 0.0, -1)

    t_prev = w0 if w0 > MIN_ADVANCE else MIN_ADVANCE
    f_prev = _min_value_at(ops, ip, fp, slices, win, t_prev,
                           qx, qy, qz, vx, vy, vz, stack)
    steps = 0
    # Walk out of the departure zone of the surface we just reflected from.
    while f_prev <= 0.0:
        t_prev += stride
        steps += 1
        if t_prev >= w1 or steps > STEP_BUDGET:
            return (EV_EXIT, t_exit, qx + t_exit * vx, qy + t_exit * vy,
                    qz + t_exit * vz, 0.0, 0.0, 0.0, 0.0, -1)
        f_prev = _min_value_at(ops, ip, fp, slices, win, t_prev,
                               qx, qy, qz, vx, vy, vz, stack)

    f_prev2 = f_prev
    t_prev2 = t_prev
    while True:
        t_next = t_prev + stride
        if t_next > w1:
            t_next = w1
        steps += 1
        if steps > STEP_BUDGET:
            return EV_BUDGET, t_prev, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1
        f_next = _min_value_at(ops, ip, fp, slices, win, t_next,
                               qx, qy, qz, vx, vy, vz, stack)
        if f_next <= 0.0:
            a = t_prev
            b = t_next
            break
        if f_prev < stride and f_prev < f_prev2 and f_next > f_prev:
            # The sampled field dipped without changing sign: either a
            # tangency or a crossing thinner than the stride.
            tm, fm = _refine_minimum(ops, ip, fp, slices, win, t_prev2, t_next,
                                     qx, qy, qz, vx, vy, vz, stack, gstack)
            if fm < -hit_tol:
                a = t_prev2
                b = tm
                break
            if fm <= hit_tol:
                return _finish_hit(ops, ip, fp, slices, qx, qy, qz, vx, vy, vz,
                                   tm, hit_tol, graze_tol, stack, gstack)
        if t_next >= w1:
            return (EV_EXIT, t_exit, qx + t_exit * vx, qy + t_exit * vy,
                    qz + t_exit * vz, 0.0, 0.0, 0.0, 0.0, -1)
        f_prev2 = f_prev
        t_prev2 = t_prev
        t_prev = t_next
        f_prev = f_next

    # Bisection to a tight bracket, then a short Newton polish.
    while b - a > BISECT_TOL:
        mid = 0.5 * (a + b)
        fm = _min_value_at(ops, ip, fp, slices, win, mid,
                           qx, qy, qz, vx, vy, vz, stack)
        if fm <= 0.0:
            b = mid
        else:
            a = mid
    t_hit = 0.5 * (a + b)
    for _ in range(NEWTON_ITERS):
        fh, sl = _slope_at(ops, ip, fp, slices, win, t_hit,
                           qx, qy, qz, vx, vy, vz, stack, gstack)
        if abs(sl) < 1e-14:
            break
        t_new = t_hit - fh / sl
        if t_new < a or t_new > b:
            break
        t_hit = t_new
    return _finish_hit(ops, ip, fp, slices, qx, qy, qz, vx, vy, vz,
                       t_hit, hit_tol, graze_tol, stack, gstack)


@njit(cache=True)
def _refine_minimum(ops, ip, fp, slices, win, a, b,
                    qx, qy, qz, vx, vy, vz, stack, gstack):
    """Locate a local minimum of the field along the ray inside [a, b] by
    bisecting the sign change of the directional derivative."""
    fa, sa = _slope_at(ops, ip, fp, slices, win, a, qx, qy, qz, vx, vy, vz,
                       stack, gstack)
    fb, sb = _slope_at(ops, ip, fp, slices, win, b, qx, qy, qz, vx, vy, vz,
                       stack, gstack)
    if sa >= 0.0 or sb <= 0.0:
        return a, min(fa, fb)
    for _ in range(80):
        if b - a <= BISECT_TOL:
            break
        mid = 0.5 * (a + b)
        fm, sm = _slope_at(ops, ip, fp, slices, win, mid,
                           qx, qy, qz, vx, vy, vz, stack, gstack)
        if sm < 0.0:
            a = mid
        else:
            b = mid
    mid = 0.5 * (a + b)
    fm = _min_value_at(ops, ip, fp, slices, win, mid,
                       qx, qy, qz, vx, vy, vz, stack)
    return mid, fm


@njit(cache=True)
def _finish_hit(ops, ip, fp, slices, qx, qy, qz, vx, vy, vz,
                t_hit, hit_tol, graze_tol, stack, gstack):
    px = qx + t_hit * vx
    py = qy + t_hit * vy
    pz = qz + t_hit * vz
    body = _argmin_body(ops, ip, fp, slices, px, py, pz, stack)
    fh, gx, gy, gz = prog_value_grad(ops, ip, fp, slices[body, 0], slices[body, 1],
                                     px, py, pz, stack, gstack)
    gnorm = math.sqrt(gx * gx + gy * gy + gz * gz)
    if gnorm < GRAD_FLOOR or abs(fh) > hit_tol:
        return EV_GRADFAIL, t_hit, px, py, pz, 0.0, 0.0, 0.0, 0.0, body
    nx = gx / gnorm
    ny = gy / gnorm
    nz = gz / gnorm
    cos_in = nx * vx + ny * vy + nz * vz
    if abs(cos_in) < graze_tol:
        return EV_GRAZE, t_hit, px, py, pz, nx, ny, nz, cos_in, body
    if cos_in > 0.0:
        # Leaving an obstacle from outside cannot happen from a valid state.
        return EV_GRADFAIL, t_hit, px, py, pz, nx, ny, nz, cos_in, body
    return EV_HIT, t_hit, px, py, pz, nx, ny, nz, cos_in, body


@njit(cache=True)
def _trace_one(ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
               qx, qy, qz, vx, vy, vz, t_max, k_max, stride, hit_tol, graze_tol,
               stack, gstack, record, max_record):
    """Follow one trajectory from a boundary entry to exit, cap, or failure.

    Returns (code, time, reflections, exit_qx, .., exit_vz, n_recorded).
    When max_record > 0 the reflection points followed by the final boundary
    point are written to ``record``.
    """
    elapsed = 0.0
    k = 0
    nrec = 0
    while True:
        ev, t, px, py, pz, nx, ny, nz, cos_in, body = _segment(
            ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
            qx, qy, qz, vx, vy, vz, stride, hit_tol, graze_tol, stack, gstack)
        if ev == EV_EXIT:
            if elapsed + t > t_max:
                return (OUT_CENSORED_TIME, t_max, k,
                        qx, qy, qz, vx, vy, vz, nrec)
            if max_record > 0 and nrec < max_record:
                record[nrec, 0] = px
                record[nrec, 1] = py
                record[nrec, 2] = pz
                nrec += 1
            return OUT_EXITED, elapsed + t, k, px, py, pz, vx, vy, vz, nrec
        if ev == EV_HIT:
            if elapsed + t > t_max:
                return (OUT_CENSORED_TIME, t_max, k,
                        qx, qy, qz, vx, vy, vz, nrec)
            elapsed += t
            if k + 1 > k_max:
                return (OUT_CENSORED_REFL, elapsed, k,
                        px, py, pz, vx, vy, vz, nrec)
            k += 1
            if max_record > 0 and nrec < max_record:
                record[nrec, 0] = px
                record[nrec, 1] = py
                record[nrec, 2] = pz
                nrec += 1
            dot = vx * nx + vy * ny + vz * nz
            vx = vx - 2.0 * dot * nx
            vy = vy - 2.0 * dot * ny
            vz = vz - 2.0 * dot * nz
            norm = math.sqrt(vx * vx + vy * vy + vz * vz)
            vx /= norm
            vy /= norm
            vz /= norm
            qx = px
            qy = py
            qz = pz
            continue
        if ev == EV_GRAZE:
            return (OUT_DEGEN_GRAZING, elapsed + t, k,
                    px, py, pz, vx, vy, vz, nrec)
        if ev == EV_BUDGET:
            return (OUT_DEGEN_BUDGET, elapsed + t, k,
                    qx, qy, qz, vx, vy, vz, nrec)
        return (OUT_DEGEN_GRADIENT, elapsed + t, k,
                px, py, pz, vx, vy, vz, nrec)


@njit(cache=True, parallel=True)
def trace_batch(ops, ip, fp, slices, bounds, cx, cy, cz, R,
                entries_q, entries_v, t_max, k_max, stride, hit_tol, graze_tol,
                out_code, out_time, out_refl, out_exit):
    """Trace many independent entries; slot i of each output belongs to ray i."""
    n = entries_q.shape[0]
    nb = slices.shape[0]
    for i in prange(n):
        stack = np.empty(STACK_DEPTH, dtype=np.float64)
        gstack = np.empty((STACK_DEPTH, 3), dtype=np.float64)
        win = np.empty((nb, 2), dtype=np.float64)
        rec = np.empty((1, 3), dtype=np.float64)
        code, t, k, ex, ey, ez, evx, evy, evz, _ = _trace_one(
            ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
            entries_q[i, 0], entries_q[i, 1], entries_q[i, 2],
            entries_v[i, 0], entries_v[i, 1], entries_v[i, 2],
            t_max, k_max, stride, hit_tol, graze_tol, stack, gstack, rec, 0)
        out_code[i] = code
        out_time[i] = t
        out_refl[i] = k
        out_exit[i, 0] = ex
        out_exit[i, 1] = ey
        out_exit[i, 2] = ez
        out_exit[i, 3] = evx
        out_exit[i, 4] = evy
        out_exit[i, 5] = evz


@njit(cache=True)
def trace_recorded(ops, ip, fp, slices, bounds, cx, cy, cz, R,
                   qx, qy, qz, vx, vy, vz, t_max, k_max, stride, hit_tol,
                   graze_tol, record):
    """Single trajectory with its boundary-point sequence written out."""
    stack = np.empty(STACK_DEPTH, dtype=np.float64)
    gstack = np.empty((STACK_DEPTH, 3), dtype=np.float64)
    win = np.empty((slices.shape[0], 2), dtype=np.float64)
    return _trace_one(ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
                      qx, qy, qz, vx, vy, vz, t_max, k_max, stride, hit_tol,
                      graze_tol, stack, gstack, record, record.shape[0])


@njit(cache=True)
def first_hit_one(ops, ip, fp, slices, bounds, cx, cy, cz, R,
                  qx, qy, qz, vx, vy, vz, stride, hit_tol, graze_tol):
    stack = np.empty(STACK_DEPTH, dtype=np.float64)
    gstack = np.empty((STACK_DEPTH, 3), dtype=np.float64)
    win = np.empty((slices.shape[0], 2), dtype=np.float64)
    return _segment(ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
                    qx, qy, qz, vx, vy, vz, stride, hit_tol, graze_tol,
                    stack, gstack)


@njit(cache=True, parallel=True)
def field_value_batch(ops, ip, fp, start, end, pts, out):
    """Field values of one compiled body at many 3d points."""
    for i in prange(pts.shape[0]):
        stack = np.empty(STACK_DEPTH, dtype=np.float64)
        out[i] = prog_value(ops, ip, fp, start, end,
                            pts[i, 0], pts[i, 1], pts[i, 2], stack)


@njit(cache=True, parallel=True)
def billiard_step_batch(ops, ip, fp, slices, bounds, cx, cy, cz, R,
                        qs, vs, stride, hit_tol, graze_tol,
                        out_ok, out_q, out_v, out_comp):
    """Billiard ball map applied to a batch of boundary states.

    Reflects at whichever boundary part is hit next, the bounding sphere
    included.  out_comp is the obstacle index, or -1 for the sphere;
    out_ok is 0 where the step was degenerate (grazing or failed hit).
    """
    n = qs.shape[0]
    nb = slices.shape[0]
    for i in prange(n):
        stack = np.empty(STACK_DEPTH, dtype=np.float64)
        gstack = np.empty((STACK_DEPTH, 3), dtype=np.float64)
        win = np.empty((nb, 2), dtype=np.float64)
        ev, t, px, py, pz, nx, ny, nz, cos_in, body = _segment(
            ops, ip, fp, slices, bounds, win, cx, cy, cz, R,
            qs[i, 0], qs[i, 1], qs[i, 2], vs[i, 0], vs[i, 1], vs[i, 2],
            stride, hit_tol, graze_tol, stack, gstack)
        if ev == EV_EXIT:
            nx = (cx - px) / R
            ny = (cy - py) / R
            nz = (cz - pz) / R
            body = -1
            ev = EV_HIT
        if ev != EV_HIT:
            out_ok[i] = 0
            out_q[i, 0] = px
            out_q[i, 1] = py
            out_q[i, 2] = pz
            out_v[i, 0] = vs[i, 0]
            out_v[i, 1] = vs[i, 1]
            out_v[i, 2] = vs[i, 2]
            out_comp[i] = body
            continue
        vx = vs[i, 0]
        vy = vs[i, 1]
        vz = vs[i, 2]
        dot = vx * nx + vy * ny + vz * nz
        wx = vx - 2.0 * dot * nx
        wy = vy - 2.0 * dot * ny
        wz = vz - 2.0 * dot * nz
        norm = math.sqrt(wx * wx + wy * wy + wz * wz)
        out_ok[i] = 1
        out_q[i, 0] = px
        out_q[i, 1] = py
        out_q[i, 2] = pz
        out_v[i, 0] = wx / norm
        out_v[i, 1] = wy / norm
        out_v[i, 2] = wz / norm
        out_comp[i] = body
