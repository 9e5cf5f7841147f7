"""Numba kernels for the arm simulation inner loops.

Everything here operates on flat float64 arrays unpacked from the model
objects; the wrapper API lives in arm.py and contacts.py. Keeping the
per-substep work (kinematics, dynamics, contact detection, integration)
inside one jitted block is what makes the batch experiments tractable.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# body-part primitive kinds
PART_SPHERE = 0
PART_CAPSULE = 1


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _axis_angle(axis, angle):
    x, y, z = axis[0], axis[1], axis[2]
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    R = np.empty((3, 3))
    R[0, 0] = t * x * x + c
    R[0, 1] = t * x * y - s * z
    R[0, 2] = t * x * z + s * y
    R[1, 0] = t * x * y + s * z
    R[1, 1] = t * y * y + c
    R[1, 2] = t * y * z - s * x
    R[2, 0] = t * x * z - s * y
    R[2, 1] = t * y * z + s * x
    R[2, 2] = t * z * z + c
    return R


@njit(cache=True)
def forward_kinematics(q, base_R, base_p, origins, rots, axes):
    """World pose of every link frame.

    Link frame i sits at joint i after its rotation:
        T_i = T_{i-1} * Trans(origins[i]) * rots[i] * Rot(axes[i], q[i])

    Returns (R, p, z): link rotations (n,3,3), link origins (n,3) and
    world joint axes (n,3).
    """
    n = q.shape[0]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    z = np.empty((n, 3))
    Rp = base_R.copy()
    pp = base_p.copy()
    for i in range(n):
        p[i] = pp + Rp @ origins[i]
        Rf = Rp @ rots[i]
        R[i] = Rf @ _axis_angle(axes[i], q[i])
        z[i] = R[i] @ axes[i]
        Rp = R[i]
        pp = p[i]
    return R, p, z


@njit(cache=True)
def com_world(R, p, coms):
    n = p.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        out[i] = p[i] + R[i] @ coms[i]
    return out


@njit(cache=True)
def mass_matrix(R, p, z, masses, coms, inertias):
    """Joint-space inertia via per-link COM Jacobian contributions."""
    n = p.shape[0]
    M = np.zeros((n, n))
    for i in range(n):
        Iw = R[i] @ inertias[i] @ R[i].T
        ci = p[i] + R[i] @ coms[i]
        # columns j<=i of the COM translational/rotational Jacobians
        jv = np.zeros((3, i + 1))
        for j in range(i + 1):
            r = ci - p[j]
            jv[0, j] = z[j, 1] * r[2] - z[j, 2] * r[1]
            jv[1, j] = z[j, 2] * r[0] - z[j, 0] * r[2]
            jv[2, j] = z[j, 0] * r[1] - z[j, 1] * r[0]
        for j in range(i + 1):
            Iz_j = Iw @ z[j]
            for k in range(j, i + 1):
                val = masses[i] * (
                    jv[0, j] * jv[0, k] + jv[1, j] * jv[1, k] + jv[2, j] * jv[2, k]
                )
                val += z[j, 0] * (Iw[0, 0] * z[k, 0] + Iw[0, 1] * z[k, 1] + Iw[0, 2] * z[k, 2]) \
                    + z[j, 1] * (Iw[1, 0] * z[k, 0] + Iw[1, 1] * z[k, 1] + Iw[1, 2] * z[k, 2]) \
                    + z[j, 2] * (Iw[2, 0] * z[k, 0] + Iw[2, 1] * z[k, 1] + Iw[2, 2] * z[k, 2])
                M[j, k] += val
                if k != j:
                    M[k, j] += val
    return M


@njit(cache=True)
def rnea(R, p, z, masses, coms, inertias, qd, qdd, gravity):
    """Inverse dynamics: joint torques for motion (qd, qdd) under gravity.

    World-frame Newton-Euler recursion over the revolute chain; gravity
    enters as a fictitious base acceleration.
    """
    n = p.shape[0]
    w = np.zeros(3)
    dw = np.zeros(3)
    a_o = -gravity.copy().astype(np.float64)
    pp = np.zeros(3)

    w_all = np.empty((n, 3))
    dw_all = np.empty((n, 3))
    ac_all = np.empty((n, 3))
    cw = np.empty((n, 3))
    Iw_all = np.empty((n, 3, 3))

    for i in range(n):
        d = p[i] - pp
        a_o = a_o + _cross(dw, d) + _cross(w, _cross(w, d))
        zq = z[i] * qd[i]
        dw = dw + z[i] * qdd[i] + _cross(w, zq)
        w = w + zq
        ci = p[i] + R[i] @ coms[i]
        rc = ci - p[i]
        ac = a_o + _cross(dw, rc) + _cross(w, _cross(w, rc))
        w_all[i] = w
        dw_all[i] = dw
        ac_all[i] = ac
        cw[i] = ci
        Iw_all[i] = R[i] @ inertias[i] @ R[i].T
        pp = p[i]

    tau = np.zeros(n)
    f_next = np.zeros(3)
    n_next = np.zeros(3)
    for i in range(n - 1, -1, -1):
        F = masses[i] * ac_all[i]
        Nc = Iw_all[i] @ dw_all[i] + _cross(w_all[i], Iw_all[i] @ w_all[i])
        ni = Nc + _cross(cw[i] - p[i], F) + n_next
        if i < n - 1:
            ni = ni + _cross(p[i + 1] - p[i], f_next)
        fi = F + f_next
        tau[i] = z[i, 0] * ni[0] + z[i, 1] * ni[1] + z[i, 2] * ni[2]
        f_next = fi
        n_next = ni
    return tau


@njit(cache=True)
def point_jacobian(p, z, link_index, point):
    """Translational Jacobian (3,n) of a world point rigidly on a link."""
    n = p.shape[0]
    J = np.zeros((3, n))
    for j in range(link_index + 1):
        r = point - p[j]
        J[0, j] = z[j, 1] * r[2] - z[j, 2] * r[1]
        J[1, j] = z[j, 2] * r[0] - z[j, 0] * r[2]
        J[2, j] = z[j, 0] * r[1] - z[j, 1] * r[0]
    return J


@njit(cache=True)
def frame_jacobian(p, z, link_index, point):
    """Stacked linear+angular Jacobian (6,n) at a world point on a link."""
    n = p.shape[0]
    J = np.zeros((6, n))
    for j in range(link_index + 1):
        r = point - p[j]
        J[0, j] = z[j, 1] * r[2] - z[j, 2] * r[1]
        J[1, j] = z[j, 2] * r[0] - z[j, 0] * r[2]
        J[2, j] = z[j, 0] * r[1] - z[j, 1] * r[0]
        J[3, j] = z[j, 0]
        J[4, j] = z[j, 1]
        J[5, j] = z[j, 2]
    return J


@njit(cache=True)
def _closest_point_segment(pt, a, b):
    ab = b - a
    denom = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2]
    if denom < 1e-18:
        return a.copy()
    t = ((pt[0] - a[0]) * ab[0] + (pt[1] - a[1]) * ab[1] + (pt[2] - a[2]) * ab[2]) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return a + t * ab


@njit(cache=True)
def _closest_segment_segment(p1, q1, p2, q2):
    """Closest points between segments [p1,q1] and [p2,q2] (Ericson 5.1.9)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    eps = 1e-18
    if a <= eps and e <= eps:
        return p1.copy(), p2.copy()
    if a <= eps:
        t = f / e
        t = min(1.0, max(0.0, t))
        return p1.copy(), p2 + t * d2
    c = d1 @ r
    if e <= eps:
        s = min(1.0, max(0.0, -c / a))
        return p1 + s * d1, p2.copy()
    b = d1 @ d2
    denom = a * e - b * b
    if denom > eps:
        s = min(1.0, max(0.0, (b * f - c * e) / denom))
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(1.0, max(0.0, -c / a))
    elif t > 1.0:
        t = 1.0
        s = min(1.0, max(0.0, (b - c) / a))
    return p1 + s * d1, p2 + t * d2


@njit(cache=True)
def detect_contacts(R, p, cap_p0, cap_p1, cap_r, part_kind, part_a, part_b, part_r):
    """One candidate contact per (link, part) pair whose core distance is
    below the radius sum.

    Returns (count, link_idx, part_idx, point, normal, depth) with the
    normal pointing from the body part toward the link.
    """
    n = p.shape[0]
    m = part_kind.shape[0]
    cap = n * m
    link_idx = np.empty(cap, dtype=np.int64)
    part_idx = np.empty(cap, dtype=np.int64)
    point = np.empty((cap, 3))
    normal = np.empty((cap, 3))
    depth = np.empty(cap)
    count = 0
    for i in range(n):
        a0 = p[i] + R[i] @ cap_p0[i]
        a1 = p[i] + R[i] @ cap_p1[i]
        for k in range(m):
            if part_kind[k] == PART_SPHERE:
                cl = _closest_point_segment(part_a[k], a0, a1)
                cb = part_a[k]
            else:
                cl, cb = _closest_segment_segment(a0, a1, part_a[k], part_b[k])
            dvec = cl - cb
            dist = np.sqrt(dvec[0] ** 2 + dvec[1] ** 2 + dvec[2] ** 2)
            pen = cap_r[i] + part_r[k] - dist
            if pen <= 0.0:
                continue
            if dist > 1e-9:
                nrm = dvec / dist
            else:
                nrm = np.zeros(3)
                nrm[2] = 1.0
            surf_link = cl - cap_r[i] * nrm
            surf_body = cb + part_r[k] * nrm
            link_idx[count] = i
            part_idx[count] = k
            point[count] = 0.5 * (surf_link + surf_body)
            normal[count] = nrm
            depth[count] = pen
            count += 1
    return count, link_idx[:count], part_idx[:count], point[:count], normal[:count], depth[:count]


@njit(cache=True)
def contact_forces_and_torque(p, z, qd, part_vel, count, link_idx, part_idx,
                              point, normal, depth, stiffness, damping):
    """Spring-damper normal force per contact (acting on the arm) plus the
    joint-space torque of all contact reactions."""
    n = p.shape[0]
    force = np.zeros((count, 3))
    tau_ext = np.zeros(n)
    for k in range(count):
        li = link_idx[k]
        vpt = np.zeros(3)
        for j in range(li + 1):
            r = point[k] - p[j]
            vpt[0] += qd[j] * (z[j, 1] * r[2] - z[j, 2] * r[1])
            vpt[1] += qd[j] * (z[j, 2] * r[0] - z[j, 0] * r[2])
            vpt[2] += qd[j] * (z[j, 0] * r[1] - z[j, 1] * r[0])
        vrel = vpt - part_vel[part_idx[k]]
        vn = vrel[0] * normal[k, 0] + vrel[1] * normal[k, 1] + vrel[2] * normal[k, 2]
        spring = stiffness * depth[k]
        damp = -damping * vn
        # damping bounded by the spring term: force stays continuous at
        # impact (no velocity spikes) and never adhesive
        if damp > spring:
            damp = spring
        elif damp < -spring:
            damp = -spring
        fmag = spring + damp
        f = fmag * normal[k]
        force[k] = f
        for j in range(li + 1):
            r = point[k] - p[j]
            tau_ext[j] += (z[j, 1] * r[2] - z[j, 2] * r[1]) * f[0] \
                + (z[j, 2] * r[0] - z[j, 0] * r[2]) * f[1] \
                + (z[j, 0] * r[1] - z[j, 1] * r[0]) * f[2]
    return force, tau_ext


@njit(cache=True)
def observe_parts(R, p, z, qd, cap_p0, cap_p1, cap_r,
                  part_kind, part_a, part_b, part_r, part_vel,
                  stiffness, damping):
    """Per-part aggregate forces and strongest-contact anchors.

    Returns (f_part (m,), anchor_link (m,), anchor_point (m,3),
    anchor_normal (m,3), in_contact (m,)).
    """
    m = part_kind.shape[0]
    count, li, pi, pt, nrm, dep = detect_contacts(
        R, p, cap_p0, cap_p1, cap_r, part_kind, part_a, part_b, part_r)
    force, _ = contact_forces_and_torque(
        p, z, qd, part_vel, count, li, pi, pt, nrm, dep, stiffness, damping)
    f_part = np.zeros(m)
    anchor_link = np.full(m, -1, dtype=np.int64)
    anchor_point = np.zeros((m, 3))
    anchor_normal = np.zeros((m, 3))
    in_contact = np.zeros(m, dtype=np.int64)
    for k in range(count):
        j = pi[k]
        in_contact[j] = 1
        mag = np.sqrt(force[k, 0] ** 2 + force[k, 1] ** 2 + force[k, 2] ** 2)
        if mag >= f_part[j]:
            f_part[j] = mag
            anchor_link[j] = li[k]
            anchor_point[j] = pt[k]
            anchor_normal[j] = nrm[k]
        if anchor_link[j] < 0:
            anchor_link[j] = li[k]
            anchor_point[j] = pt[k]
            anchor_normal[j] = nrm[k]
    return f_part, anchor_link, anchor_point, anchor_normal, in_contact


@njit(cache=True)
def _rotation_vector(Rm):
    tr = Rm[0, 0] + Rm[1, 1] + Rm[2, 2]
    cos_a = (tr - 1.0) * 0.5
    if cos_a > 1.0:
        cos_a = 1.0
    elif cos_a < -1.0:
        cos_a = -1.0
    angle = np.arccos(cos_a)
    out = np.zeros(3)
    if angle < 1e-10:
        return out
    if np.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        axis = np.zeros(3)
        for j in range(3):
            v = (Rm[j, j] + 1.0) * 0.5
            axis[j] = np.sqrt(v) if v > 0.0 else 0.0
        k = 0
        for j in range(1, 3):
            if axis[j] > axis[k]:
                k = j
        A01 = (Rm[0, 1] + Rm[1, 0]) * 0.25
        A02 = (Rm[0, 2] + Rm[2, 0]) * 0.25
        A12 = (Rm[1, 2] + Rm[2, 1]) * 0.25
        if k == 0:
            if A01 < 0:
                axis[1] = -axis[1]
            if A02 < 0:
                axis[2] = -axis[2]
        elif k == 1:
            if A01 < 0:
                axis[0] = -axis[0]
            if A12 < 0:
                axis[2] = -axis[2]
        else:
            if A02 < 0:
                axis[0] = -axis[0]
            if A12 < 0:
                axis[1] = -axis[1]
        nn = np.sqrt(axis[0] ** 2 + axis[1] ** 2 + axis[2] ** 2)
        if nn > 0:
            return axis * (angle / nn)
        return out
    s = 2.0 * np.sin(angle)
    out[0] = (Rm[2, 1] - Rm[1, 2]) / s * angle
    out[1] = (Rm[0, 2] - Rm[2, 0]) / s * angle
    out[2] = (Rm[1, 0] - Rm[0, 1]) / s * angle
    return out


@njit(cache=True)
def _damped_inv(X, eig_thr, damp_max):
    w, V = np.linalg.eigh(0.5 * (X + X.T))
    k = w.shape[0]
    inv_w = np.zeros(k)
    for i in range(k):
        wi = w[i]
        if wi >= eig_thr:
            inv_w[i] = 1.0 / wi
        elif wi > 0.0:
            lam = damp_max * (1.0 - wi / eig_thr)
            inv_w[i] = wi / (wi * wi + lam * lam)
    return (V * inv_w) @ V.T


@njit(cache=True)
def hosc_torques(q, qd,
                 base_R, base_p, origins, rots, axes, masses, coms, inertias,
                 gravity,
                 task_kind, ee_link, ee_off, target_pos, target_R, kp6, kd6,
                 f_link, f_point, f_normal, f_cur, f_thr, kf,
                 eig_thr, damp_max, null_damp, tau_lim,
                 pos_err_clamp, rot_err_clamp):
    """Full hierarchy controller in one pass; mirrors hosc.compute_torques.

    task_kind: execution order, 0 = pose objective, 1 + part row index in
    the f_* arrays for force objectives.
    """
    n = q.shape[0]
    R, p, z = forward_kinematics(q, base_R, base_p, origins, rots, axes)
    M = mass_matrix(R, p, z, masses, coms, inertias)
    M = 0.5 * (M + M.T)
    minv = np.linalg.inv(M)
    zero = np.zeros(n)
    g = rnea(R, p, z, masses, coms, inertias, zero, zero, gravity)
    cor = rnea(R, p, z, masses, coms, inertias, qd, zero, gravity) - g
    N = np.eye(n)
    tau = g.copy()
    for ti in range(task_kind.shape[0]):
        kind = task_kind[ti]
        if kind == 0:
            pt = p[ee_link] + R[ee_link] @ ee_off
            J6 = frame_jacobian(p, z, ee_link, pt)
            err = np.zeros(6)
            err[0] = target_pos[0] - pt[0]
            err[1] = target_pos[1] - pt[1]
            err[2] = target_pos[2] - pt[2]
            rv = _rotation_vector(target_R @ R[ee_link].T)
            err[3] = rv[0]
            err[4] = rv[1]
            err[5] = rv[2]
            en = np.sqrt(err[0] ** 2 + err[1] ** 2 + err[2] ** 2)
            if en > pos_err_clamp > 0.0:
                sc = pos_err_clamp / en
                err[0] *= sc
                err[1] *= sc
                err[2] *= sc
            rn = np.sqrt(err[3] ** 2 + err[4] ** 2 + err[5] ** 2)
            if rn > rot_err_clamp > 0.0:
                sc = rot_err_clamp / rn
                err[3] *= sc
                err[4] *= sc
                err[5] *= sc
            xdd6 = kp6 * err - kd6 * (J6 @ qd)
            # zero-gain rows exert nothing and must not eat null space
            nact = 0
            for r6 in range(6):
                if kp6[r6] > 0.0 or kd6[r6] > 0.0:
                    nact += 1
            J = np.empty((nact, n))
            xdd = np.empty(nact)
            rr = 0
            for r6 in range(6):
                if kp6[r6] > 0.0 or kd6[r6] > 0.0:
                    J[rr] = J6[r6]
                    xdd[rr] = xdd6[r6]
                    rr += 1
            ff = 0.0
        else:
            row = kind - 1
            Jp = point_jacobian(p, z, f_link[row], f_point[row])
            J = np.empty((1, n))
            for j in range(n):
                J[0, j] = -(f_normal[row, 0] * Jp[0, j] + f_normal[row, 1] * Jp[1, j]
                            + f_normal[row, 2] * Jp[2, j])
            xdd = np.empty(1)
            xdd[0] = -kf * (f_cur[row] - f_thr[row])
            ff = f_cur[row]
        Jbar = J @ N
        JbarMinv = Jbar @ minv
        X = JbarMinv @ Jbar.T
        lam = _damped_inv(X, eig_thr, damp_max)
        F = lam @ (xdd + JbarMinv @ cor)
        if kind != 0:
            F = F + ff
        tau = tau + Jbar.T @ F
        N = N - minv @ Jbar.T @ (lam @ (Jbar @ N))
    tau = tau + N.T @ (-null_damp * qd)
    for j in range(n):
        if tau[j] > tau_lim:
            tau[j] = tau_lim
        elif tau[j] < -tau_lim:
            tau[j] = -tau_lim
    return tau


@njit(cache=True)
def step_block(q, qd, tau,
               base_R, base_p, origins, rots, axes, masses, coms, inertias,
               cap_p0, cap_p1, cap_r,
               part_kind, part_a, part_b, part_r, part_vel,
               gravity, stiffness, damping,
               q_lo, q_hi, qd_max,
               dt, nsub):
    """Advance the arm nsub semi-implicit Euler substeps under constant
    commanded torque, with penalty contacts against the body parts.

    part_a/part_b are advanced in place by part_vel. Returns the final
    state plus the last substep's contact data.
    """
    n = q.shape[0]
    q = q.copy()
    qd = qd.copy()
    count = 0
    link_idx = np.empty(0, dtype=np.int64)
    part_idx = np.empty(0, dtype=np.int64)
    point = np.empty((0, 3))
    normal = np.empty((0, 3))
    depth = np.empty(0)
    force = np.empty((0, 3))
    for _ in range(nsub):
        R, p, z = forward_kinematics(q, base_R, base_p, origins, rots, axes)
        count, link_idx, part_idx, point, normal, depth = detect_contacts(
            R, p, cap_p0, cap_p1, cap_r, part_kind, part_a, part_b, part_r)
        force, tau_ext = contact_forces_and_torque(
            p, z, qd, part_vel, count, link_idx, part_idx, point, normal, depth,
            stiffness, damping)
        M = mass_matrix(R, p, z, masses, coms, inertias)
        bias = rnea(R, p, z, masses, coms, inertias, qd, np.zeros(n), gravity)
        qdd = np.linalg.solve(M, tau + tau_ext - bias)
        for j in range(n):
            qd[j] += qdd[j] * dt
            if qd[j] > qd_max[j]:
                qd[j] = qd_max[j]
            elif qd[j] < -qd_max[j]:
                qd[j] = -qd_max[j]
            q[j] += qd[j] * dt
            if q[j] > q_hi[j]:
                q[j] = q_hi[j]
                if qd[j] > 0.0:
                    qd[j] = 0.0
            elif q[j] < q_lo[j]:
                q[j] = q_lo[j]
                if qd[j] < 0.0:
                    qd[j] = 0.0
        for k in range(part_kind.shape[0]):
            part_a[k] += part_vel[k] * dt
            part_b[k] += part_vel[k] * dt
    return q, qd, count, link_idx, part_idx, point, normal, depth, force
