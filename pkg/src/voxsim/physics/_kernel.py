"""Compiled inner loops for the voxel lattice integrator.

Quaternions are stored scalar-first ``(w, x, y, z)``.  Every routine here works
on flat numpy arrays so that a whole simulation can run without returning to the
interpreter between substeps.  Nothing uses fastmath or threading; results are
bit-reproducible on a fixed platform.
"""

import math

import numpy as np
from numba import njit

# contact modes reported by contact_force
NO_CONTACT = 0
STICK = 1
SLIDE = 2

# beam stiffness columns: axial EA/L, torsion GJ/L, shear 12EI/L^3, coupling 6EI/L^2, bending 2EI/L
K_AXIAL, K_TORSION, K_SHEAR, K_COUPLE, K_BEND = range(5)
# beam damping columns
C_AXIAL, C_SHEAR, C_TORSION, C_BEND = range(4)


@njit(cache=True)
def qmul(a0, a1, a2, a3, b0, b1, b2, b3):
    return (
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


@njit(cache=True)
def qrot(w, x, y, z, vx, vy, vz):
    # v' = v + 2w (u x v) + 2 u x (u x v)
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    ccx = y * cz - z * cy
    ccy = z * cx - x * cz
    ccz = x * cy - y * cx
    return (
        vx + 2.0 * (w * cx + ccx),
        vy + 2.0 * (w * cy + ccy),
        vz + 2.0 * (w * cz + ccz),
    )


@njit(cache=True)
def qrotvec(w, x, y, z):
    """Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi]."""
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    if s == 0.0:
        return 0.0, 0.0, 0.0
    k = 2.0 * math.atan2(s, w) / s
    return k * x, k * y, k * z


@njit(cache=True)
def _permute_to_local(ax, vx, vy, vz):
    if ax == 0:
        return vx, vy, vz
    if ax == 1:
        return vy, vz, vx
    return vz, vx, vy


@njit(cache=True)
def _permute_from_local(ax, lx, ly, lz):
    if ax == 0:
        return lx, ly, lz
    if ax == 1:
        return lz, lx, ly
    return ly, lz, lx


@njit(cache=True)
def accumulate_beams(pos, vel, quat, angvel, ba, bb, bax, rest, ref, bk, bc, force, torque):
    """Add restoring and damping loads of every permanent beam to ``force``/``torque``.

    The beam frame is the normalized mean of the two endpoint orientations with
    its local x axis along the beam's construction axis.  Elastic loads are the
    linear 3D frame element response to the endpoint offsets in that frame.
    ``bk`` holds constants for element length ``ref``; an actuated beam of
    length ``rest`` keeps its section properties and rescales them.
    """
    for b in range(ba.shape[0]):
        i = ba[b]
        j = bb[b]
        ax = bax[b]
        qa0, qa1, qa2, qa3 = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
        qb0, qb1, qb2, qb3 = quat[j, 0], quat[j, 1], quat[j, 2], quat[j, 3]
        if qa0 * qb0 + qa1 * qb1 + qa2 * qb2 + qa3 * qb3 < 0.0:
            qb0, qb1, qb2, qb3 = -qb0, -qb1, -qb2, -qb3
        m0 = qa0 + qb0
        m1 = qa1 + qb1
        m2 = qa2 + qb2
        m3 = qa3 + qb3
        inv = 1.0 / math.sqrt(m0 * m0 + m1 * m1 + m2 * m2 + m3 * m3)
        m0 *= inv
        m1 *= inv
        m2 *= inv
        m3 *= inv

        dpx = pos[j, 0] - pos[i, 0]
        dpy = pos[j, 1] - pos[i, 1]
        dpz = pos[j, 2] - pos[i, 2]
        d0, d1, d2 = _permute_to_local(ax, *qrot(m0, -m1, -m2, -m3, dpx, dpy, dpz))

        r = qmul(m0, -m1, -m2, -m3, qa0, qa1, qa2, qa3)
        t1x, t1y, t1z = _permute_to_local(ax, *qrotvec(r[0], r[1], r[2], r[3]))
        r = qmul(m0, -m1, -m2, -m3, qb0, qb1, qb2, qb3)
        t2x, t2y, t2z = _permute_to_local(ax, *qrotvec(r[0], r[1], r[2], r[3]))

        sc = ref[b] / rest[b]
        a1 = bk[b, K_AXIAL] * sc
        a2 = bk[b, K_TORSION] * sc
        b1 = bk[b, K_SHEAR] * sc * sc * sc
        b2 = bk[b, K_COUPLE] * sc * sc
        b3 = bk[b, K_BEND] * sc

        ux = d0 - rest[b]
        # restoring loads on the far node (j) and near node (i), local frame
        f2x = -a1 * ux
        f2y = -(b1 * d1 - b2 * (t1z + t2z))
        f2z = -(b1 * d2 + b2 * (t1y + t2y))
        m1x = -a2 * (t1x - t2x)
        m1y = -(b2 * d2 + b3 * (2.0 * t1y + t2y))
        m1z = -(-b2 * d1 + b3 * (2.0 * t1z + t2z))
        m2x = -m1x
        m2y = -(b2 * d2 + b3 * (t1y + 2.0 * t2y))
        m2z = -(-b2 * d1 + b3 * (t1z + 2.0 * t2z))

        # damping on deformation rates; rigid spin of the pair is excluded
        wmx = 0.5 * (angvel[i, 0] + angvel[j, 0])
        wmy = 0.5 * (angvel[i, 1] + angvel[j, 1])
        wmz = 0.5 * (angvel[i, 2] + angvel[j, 2])
        dvx = vel[j, 0] - vel[i, 0] - (wmy * dpz - wmz * dpy)
        dvy = vel[j, 1] - vel[i, 1] - (wmz * dpx - wmx * dpz)
        dvz = vel[j, 2] - vel[i, 2] - (wmx * dpy - wmy * dpx)
        lv0, lv1, lv2 = _permute_to_local(ax, *qrot(m0, -m1, -m2, -m3, dvx, dvy, dvz))
        dwx = angvel[j, 0] - angvel[i, 0]
        dwy = angvel[j, 1] - angvel[i, 1]
        dwz = angvel[j, 2] - angvel[i, 2]
        lw0, lw1, lw2 = _permute_to_local(ax, *qrot(m0, -m1, -m2, -m3, dwx, dwy, dwz))
        f2x -= bc[b, C_AXIAL] * lv0
        f2y -= bc[b, C_SHEAR] * lv1
        f2z -= bc[b, C_SHEAR] * lv2
        mdx = bc[b, C_TORSION] * lw0
        mdy = bc[b, C_BEND] * lw1
        mdz = bc[b, C_BEND] * lw2
        m1x += mdx
        m1y += mdy
        m1z += mdz
        m2x -= mdx
        m2y -= mdy
        m2z -= mdz

        # small-strain moments balance only in the rest geometry, and the shear
        # damping pair is a couple; split the residual so the beam never applies
        # a net torque to the pair
        ex = 0.5 * (m1x + m2x + d1 * f2z - d2 * f2y)
        ey = 0.5 * (m1y + m2y + d2 * f2x - d0 * f2z)
        ez = 0.5 * (m1z + m2z + d0 * f2y - d1 * f2x)
        m1x -= ex
        m1y -= ey
        m1z -= ez
        m2x -= ex
        m2y -= ey
        m2z -= ez

        fwx, fwy, fwz = qrot(m0, m1, m2, m3, *_permute_from_local(ax, f2x, f2y, f2z))
        force[j, 0] += fwx
        force[j, 1] += fwy
        force[j, 2] += fwz
        force[i, 0] -= fwx
        force[i, 1] -= fwy
        force[i, 2] -= fwz
        tx, ty, tz = qrot(m0, m1, m2, m3, *_permute_from_local(ax, m1x, m1y, m1z))
        torque[i, 0] += tx
        torque[i, 1] += ty
        torque[i, 2] += tz
        tx, ty, tz = qrot(m0, m1, m2, m3, *_permute_from_local(ax, m2x, m2y, m2z))
        torque[j, 0] += tx
        torque[j, 1] += ty
        torque[j, 2] += tz


@njit(cache=True)
def accumulate_collisions(pos, vel, pa, pb, plen, pk, pc, colliding, force):
    """Compressive-only axial springs between intersecting non-adjacent node pairs."""
    for c in range(pa.shape[0]):
        i = pa[c]
        j = pb[c]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist >= plen[c] or dist == 0.0:
            colliding[c] = 0
            continue
        colliding[c] = 1
        nx = dx / dist
        ny = dy / dist
        nz = dz / dist
        vn = (vel[j, 0] - vel[i, 0]) * nx + (vel[j, 1] - vel[i, 1]) * ny + (vel[j, 2] - vel[i, 2]) * nz
        fn = pk[c] * (plen[c] - dist) - pc[c] * vn
        if fn <= 0.0:
            continue
        force[j, 0] += fn * nx
        force[j, 1] += fn * ny
        force[j, 2] += fn * nz
        force[i, 0] -= fn * nx
        force[i, 1] -= fn * ny
        force[i, 2] -= fn * nz


@njit(cache=True)
def contact_force(z, vx, vy, vz, fx, fy, mass, half, kc, cc, mu_s, mu_k, v_stick, h):
    """Ground reaction on one node given the other tangential loads ``(fx, fy)``.

    Returns ``(cfx, cfy, cfz, mode)``.  In stick mode the tangential reaction is
    exactly what stops the node within the substep ``h``; it is granted only
    while that stays within ``mu_s * N``.
    """
    pen = half - z
    if pen <= 0.0:
        return 0.0, 0.0, 0.0, NO_CONTACT
    n = kc * pen - cc * vz
    if n <= 0.0:
        return 0.0, 0.0, 0.0, NO_CONTACT
    vt = math.sqrt(vx * vx + vy * vy)
    if vt < v_stick:
        rx = fx + mass * vx / h
        ry = fy + mass * vy / h
        r = math.sqrt(rx * rx + ry * ry)
        if r <= mu_s * n:
            return -rx, -ry, n, STICK
        return -mu_k * n * rx / r, -mu_k * n * ry / r, n, SLIDE
    return -mu_k * n * vx / vt, -mu_k * n * vy / vt, n, SLIDE


@njit(cache=True)
def integrate_nodes(pos, vel, quat, angvel, mass, inertia, half, kc, cc,
                    force, torque, gravity, mu_s, mu_k, v_stick, h):
    """Gravity, ground contact and one semi-implicit Euler update (velocity first).

    Returns False as soon as a non-finite value appears.
    """
    for n in range(pos.shape[0]):
        m = mass[n]
        fx = force[n, 0]
        fy = force[n, 1]
        fz = force[n, 2] + m * gravity
        ovx = vel[n, 0]
        ovy = vel[n, 1]
        cfx, cfy, cfz, mode = contact_force(
            pos[n, 2], ovx, ovy, vel[n, 2], fx, fy, m, half[n], kc[n], cc[n],
            mu_s, mu_k, v_stick, h)
        fx += cfx
        fy += cfy
        fz += cfz

        vx = ovx + h * fx / m
        vy = ovy + h * fy / m
        vz = vel[n, 2] + h * fz / m
        if mode == STICK:
            vx = 0.0
            vy = 0.0
        elif mode == SLIDE and ovx * ovx + ovy * ovy >= v_stick * v_stick:
            # kinetic friction may stop a slide but never reverse it
            if vx * ovx + vy * ovy < 0.0:
                vx = 0.0
                vy = 0.0
        vel[n, 0] = vx
        vel[n, 1] = vy
        vel[n, 2] = vz
        pos[n, 0] += h * vx
        pos[n, 1] += h * vy
        pos[n, 2] += h * vz

        inv_i = h / inertia[n]
        wx = angvel[n, 0] + torque[n, 0] * inv_i
        wy = angvel[n, 1] + torque[n, 1] * inv_i
        wz = angvel[n, 2] + torque[n, 2] * inv_i
        angvel[n, 0] = wx
        angvel[n, 1] = wy
        angvel[n, 2] = wz
        wn = math.sqrt(wx * wx + wy * wy + wz * wz)
        if wn > 0.0:
            half_angle = 0.5 * wn * h
            s = math.sin(half_angle) / wn
            q = qmul(math.cos(half_angle), s * wx, s * wy, s * wz,
                     quat[n, 0], quat[n, 1], quat[n, 2], quat[n, 3])
            inv = 1.0 / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
            quat[n, 0] = q[0] * inv
            quat[n, 1] = q[1] * inv
            quat[n, 2] = q[2] * inv
            quat[n, 3] = q[3] * inv

        if not (math.isfinite(pos[n, 0]) and math.isfinite(pos[n, 1]) and math.isfinite(pos[n, 2])
                and math.isfinite(vx) and math.isfinite(vy) and math.isfinite(vz)
                and math.isfinite(wx) and math.isfinite(wy) and math.isfinite(wz)):
            return False
    return True


@njit(cache=True)
def actuation_ratio(t_since_settle, frequency, peak_ratio):
    if t_since_settle <= 0.0:
        return 1.0
    s = math.sin(2.0 * math.pi * frequency * t_since_settle)
    if s <= 0.0:
        return 1.0
    return 1.0 + (peak_ratio - 1.0) * s


@njit(cache=True)
def run_steps(pos, vel, quat, angvel, mass, inertia, half, kc, cc,
              ba, bb, bax, brest, bact, bk, bc,
              pa, pb, plen, pk, pc, colliding,
              force, torque, rest, external,
              k_start, n_steps, n_sub, dt, settle_steps, frequency, peak_ratio,
              gravity, mu_s, mu_k, v_stick):
    """Advance ``n_steps`` reported steps starting at step index ``k_start``.

    ``external`` is a per-node load added every substep (zeros in normal runs).
    Returns -1 on success, otherwise the index of the step that went non-finite.
    """
    h = dt / n_sub
    for k in range(k_start, k_start + n_steps):
        for s in range(n_sub):
            if k < settle_steps:
                mult = 1.0
            else:
                t = ((k - settle_steps) + s / n_sub) * dt
                mult = actuation_ratio(t, frequency, peak_ratio) ** (1.0 / 3.0)
            for b in range(brest.shape[0]):
                rest[b] = brest[b] * (1.0 + bact[b] * (mult - 1.0))
            force[:, :] = external
            torque[:, :] = 0.0
            accumulate_beams(pos, vel, quat, angvel, ba, bb, bax, rest, brest, bk, bc, force, torque)
            accumulate_collisions(pos, vel, pa, pb, plen, pk, pc, colliding, force)
            ok = integrate_nodes(pos, vel, quat, angvel, mass, inertia, half, kc, cc,
                                 force, torque, gravity, mu_s, mu_k, v_stick, h)
            if not ok:
                return k
    return -1
