"""Numeric kernels shared by every backend.

This file is loaded twice by :mod:`msk.engine`: once as a plain module
(interpreted; also accepts object arrays of :class:`msk.dual.Dual`) and once
with the module global ``_MSK_JIT`` injected, which wraps each kernel in
``numba.njit``. Everything below therefore sticks to the common subset both
modes support:

- plain ``for`` loops and scalar arithmetic, no np.linalg / fancy indexing
- numpy ufuncs (np.sin, np.sqrt, ...) on scalars, never ``math.*``
- array allocation via ``np.zeros(shape) + zero`` where ``zero`` is a
  zero-valued scalar derived from the inputs (float in compiled mode, Dual
  with the right tangent width in sensitivity mode)
- branches may compare duals (comparison looks at the primal value only)

Model data arrives as packed plain arrays (see msk.model.PackedModel):
  kin  = parents, offsets, orients, dof_start, dof_num, axes, root_free
  iner = mass, com, inertia
  sph  = sph_seg, sph_pos, sph_rad, sph_kn, sph_cn, sph_mu, sph_eps
Offsets, coms, marker and sphere positions are pre-scaled (J^0 * s baked in).
Generalized layout: [T(3), R(3), joint angles...] when root_free else just
the joint angles. Root rotation R is an exponential-coordinates 3-vector;
its rates enter the dynamics through the SO(3) left Jacobian.
"""

import numpy as np

_JIT = globals().get("_MSK_JIT", False)

if _JIT:
    from numba import njit

    def _jit(fn):
        return njit(cache=True)(fn)
else:
    def _jit(fn):
        return fn


# ---------------------------------------------------------------------------
# small fixed-size helpers

@_jit
def _mm3(A, B, zero):
    C = np.zeros((3, 3)) + zero
    for a in range(3):
        for b in range(3):
            C[a, b] = A[a, 0] * B[0, b] + A[a, 1] * B[1, b] + A[a, 2] * B[2, b]
    return C


@_jit
def _rot_axis_angle(axis, ang, zero):
    # Rodrigues rotation about a constant unit axis.
    R = np.zeros((3, 3)) + zero
    c = np.cos(ang)
    s = np.sin(ang)
    v = 1.0 - c
    x = axis[0]
    y = axis[1]
    z = axis[2]
    R[0, 0] = c + x * x * v
    R[0, 1] = x * y * v - z * s
    R[0, 2] = x * z * v + y * s
    R[1, 0] = y * x * v + z * s
    R[1, 1] = c + y * y * v
    R[1, 2] = y * z * v - x * s
    R[2, 0] = z * x * v - y * s
    R[2, 1] = z * y * v + x * s
    R[2, 2] = c + z * z * v
    return R


@_jit
def _rot_expmap(w, zero):
    # R = I + a*[w]x + b*[w]x^2, a = sin(t)/t, b = (1-cos(t))/t^2, t = |w|.
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    if t2 < 1e-6:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        t = np.sqrt(t2)
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t2
    R = np.zeros((3, 3)) + zero
    d = 1.0 - b * t2
    R[0, 0] = d + b * w[0] * w[0]
    R[0, 1] = b * w[0] * w[1] - a * w[2]
    R[0, 2] = b * w[0] * w[2] + a * w[1]
    R[1, 0] = b * w[1] * w[0] + a * w[2]
    R[1, 1] = d + b * w[1] * w[1]
    R[1, 2] = b * w[1] * w[2] - a * w[0]
    R[2, 0] = b * w[2] * w[0] - a * w[1]
    R[2, 1] = b * w[2] * w[1] + a * w[0]
    R[2, 2] = d + b * w[2] * w[2]
    return R


@_jit
def _jl_mat(w, zero):
    # SO(3) left Jacobian: world angular velocity = Jl(w) * wdot.
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    if t2 < 1e-6:
        B = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        C = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        t = np.sqrt(t2)
        B = (1.0 - np.cos(t)) / t2
        C = (t - np.sin(t)) / (t2 * t)
    J = np.zeros((3, 3)) + zero
    d = 1.0 - C * t2
    J[0, 0] = d + C * w[0] * w[0]
    J[0, 1] = C * w[0] * w[1] - B * w[2]
    J[0, 2] = C * w[0] * w[2] + B * w[1]
    J[1, 0] = C * w[1] * w[0] + B * w[2]
    J[1, 1] = d + C * w[1] * w[1]
    J[1, 2] = C * w[1] * w[2] - B * w[0]
    J[2, 0] = C * w[2] * w[0] - B * w[1]
    J[2, 1] = C * w[2] * w[1] + B * w[0]
    J[2, 2] = d + C * w[2] * w[2]
    return J


@_jit
def _jl_dot_mat(w, wd, zero):
    # Time derivative of the left Jacobian along wdot:
    # dJl/dt = 2u B' [w]x + B [wd]x + 2u C' (w w^T - t2 I)
    #          + C (w wd^T + wd w^T - 2u I),  u = w.wd, t2 = |w|^2.
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    u = w[0] * wd[0] + w[1] * wd[1] + w[2] * wd[2]
    if t2 < 1e-6:
        B = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        C = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        Bp = -1.0 / 24.0 + t2 / 360.0 - t2 * t2 / 13440.0
        Cp = -1.0 / 120.0 + t2 / 2520.0 - t2 * t2 / 120960.0
    else:
        t = np.sqrt(t2)
        ct = np.cos(t)
        st = np.sin(t)
        B = (1.0 - ct) / t2
        C = (t - st) / (t2 * t)
        Bp = (t * st - 2.0 * (1.0 - ct)) / (2.0 * t2 * t2)
        Cp = (t * (1.0 - ct) - 3.0 * (t - st)) / (2.0 * t2 * t2 * t)
    tu = 2.0 * u
    Jd = np.zeros((3, 3)) + zero
    for a in range(3):
        for b in range(3):
            Jd[a, b] = tu * Cp * w[a] * w[b] + C * (w[a] * wd[b] + wd[a] * w[b])
        Jd[a, a] = Jd[a, a] - tu * Cp * t2 - C * tu
    Jd[0, 1] = Jd[0, 1] - tu * Bp * w[2] - B * wd[2]
    Jd[0, 2] = Jd[0, 2] + tu * Bp * w[1] + B * wd[1]
    Jd[1, 0] = Jd[1, 0] + tu * Bp * w[2] + B * wd[2]
    Jd[1, 2] = Jd[1, 2] - tu * Bp * w[0] - B * wd[0]
    Jd[2, 0] = Jd[2, 0] - tu * Bp * w[1] - B * wd[1]
    Jd[2, 1] = Jd[2, 1] + tu * Bp * w[0] + B * wd[0]
    return Jd


# ---------------------------------------------------------------------------
# forward kinematics

@_jit
def fk(parents, offsets, orients, dof_start, dof_num, axes, root_free, q):
    """World rotation (ns,3,3) and origin (ns,3) of every segment."""
    ns = parents.shape[0]
    zero = q[0] * 0.0
    base = 6 if root_free == 1 else 0
    Rw = np.zeros((ns, 3, 3)) + zero
    pw = np.zeros((ns, 3)) + zero
    for i in range(ns):
        if i == 0:
            if root_free == 1:
                R0 = _rot_expmap(q[3:6], zero)
                for a in range(3):
                    pw[0, a] = q[a] + offsets[0, a]
            else:
                R0 = np.zeros((3, 3)) + zero
                for a in range(3):
                    R0[a, a] = 1.0 + zero
                    pw[0, a] = offsets[0, a] + zero
            for a in range(3):
                for b in range(3):
                    Rw[0, a, b] = R0[a, b]
        else:
            p = parents[i]
            for a in range(3):
                pw[i, a] = (pw[p, a]
                            + Rw[p, a, 0] * offsets[i, 0]
                            + Rw[p, a, 1] * offsets[i, 1]
                            + Rw[p, a, 2] * offsets[i, 2])
            Rj = _mm3(Rw[p], _rot_expmap(orients[i], zero), zero)
            for k in range(dof_num[i]):
                ang = q[base + dof_start[i] + k]
                Rj = _mm3(Rj, _rot_axis_angle(axes[i, k], ang, zero), zero)
            for a in range(3):
                for b in range(3):
                    Rw[i, a, b] = Rj[a, b]
    return Rw, pw


@_jit
def fk_vel(parents, offsets, orients, dof_start, dof_num, axes, root_free,
           q, qdot):
    """FK plus world angular velocity and origin velocity per segment."""
    ns = parents.shape[0]
    zero = q[0] * 0.0 + qdot[0] * 0.0
    base = 6 if root_free == 1 else 0
    Rw = np.zeros((ns, 3, 3)) + zero
    pw = np.zeros((ns, 3)) + zero
    om = np.zeros((ns, 3)) + zero
    vo = np.zeros((ns, 3)) + zero
    for i in range(ns):
        if i == 0:
            if root_free == 1:
                R0 = _rot_expmap(q[3:6], zero)
                Jl = _jl_mat(q[3:6], zero)
                for a in range(3):
                    pw[0, a] = q[a] + offsets[0, a]
                    vo[0, a] = qdot[a] + zero
                    om[0, a] = (Jl[a, 0] * qdot[3] + Jl[a, 1] * qdot[4]
                                + Jl[a, 2] * qdot[5])
            else:
                R0 = np.zeros((3, 3)) + zero
                for a in range(3):
                    R0[a, a] = 1.0 + zero
                    pw[0, a] = offsets[0, a] + zero
            for a in range(3):
                for b in range(3):
                    Rw[0, a, b] = R0[a, b]
        else:
            p = parents[i]
            for a in range(3):
                pw[i, a] = (pw[p, a]
                            + Rw[p, a, 0] * offsets[i, 0]
                            + Rw[p, a, 1] * offsets[i, 1]
                            + Rw[p, a, 2] * offsets[i, 2])
            rx = pw[i, 0] - pw[p, 0]
            ry = pw[i, 1] - pw[p, 1]
            rz = pw[i, 2] - pw[p, 2]
            vo[i, 0] = vo[p, 0] + om[p, 1] * rz - om[p, 2] * ry
            vo[i, 1] = vo[p, 1] + om[p, 2] * rx - om[p, 0] * rz
            vo[i, 2] = vo[p, 2] + om[p, 0] * ry - om[p, 1] * rx
            for a in range(3):
                om[i, a] = om[p, a]
            Rrun = _mm3(Rw[p], _rot_expmap(orients[i], zero), zero)
            for k in range(dof_num[i]):
                idx = base + dof_start[i] + k
                ax = axes[i, k]
                wx = Rrun[0, 0] * ax[0] + Rrun[0, 1] * ax[1] + Rrun[0, 2] * ax[2]
                wy = Rrun[1, 0] * ax[0] + Rrun[1, 1] * ax[1] + Rrun[1, 2] * ax[2]
                wz = Rrun[2, 0] * ax[0] + Rrun[2, 1] * ax[1] + Rrun[2, 2] * ax[2]
                om[i, 0] = om[i, 0] + wx * qdot[idx]
                om[i, 1] = om[i, 1] + wy * qdot[idx]
                om[i, 2] = om[i, 2] + wz * qdot[idx]
                Rrun = _mm3(Rrun, _rot_axis_angle(ax, q[idx], zero), zero)
            for a in range(3):
                for b in range(3):
                    Rw[i, a, b] = Rrun[a, b]
    return Rw, pw, om, vo


@_jit
def dof_frames(parents, offsets, orients, dof_start, dof_num, axes, root_free,
               q, Rw, pw):
    """Per-DoF world geometry: owning body, revolute flag, axis, pivot.

    Root translation rows are prismatic unit axes; root rotation rows carry
    the (generally non-unit) columns of the left Jacobian with the root
    origin as pivot, so J * qdot is exact for exponential-coordinate rates.
    """
    ns = parents.shape[0]
    zero = q[0] * 0.0
    base = 6 if root_free == 1 else 0
    n_r = 0
    for i in range(ns):
        n_r += dof_num[i]
    n = base + n_r
    dof_body = np.zeros(n, np.int64)
    dof_rev = np.zeros(n, np.int64)
    dof_axis = np.zeros((n, 3)) + zero
    dof_pivot = np.zeros((n, 3)) + zero
    if root_free == 1:
        for j in range(3):
            dof_axis[j, j] = 1.0 + zero
        Jl = _jl_mat(q[3:6], zero)
        for j in range(3):
            dof_body[3 + j] = 0
            dof_rev[3 + j] = 1
            for a in range(3):
                dof_axis[3 + j, a] = Jl[a, j]
                dof_pivot[3 + j, a] = pw[0, a]
    for i in range(1, ns):
        if dof_num[i] == 0:
            continue
        p = parents[i]
        Rrun = _mm3(Rw[p], _rot_expmap(orients[i], zero), zero)
        for k in range(dof_num[i]):
            idx = base + dof_start[i] + k
            dof_body[idx] = i
            dof_rev[idx] = 1
            ax = axes[i, k]
            for a in range(3):
                dof_axis[idx, a] = (Rrun[a, 0] * ax[0] + Rrun[a, 1] * ax[1]
                                    + Rrun[a, 2] * ax[2])
                dof_pivot[idx, a] = pw[i, a]
            if k + 1 < dof_num[i]:
                Rrun = _mm3(Rrun, _rot_axis_angle(ax, q[idx], zero), zero)
    return dof_body, dof_rev, dof_axis, dof_pivot


@_jit
def body_points(pt_seg, pt_loc, Rw, pw, zero):
    """World positions of body-fixed local points (pre-scaled)."""
    K = pt_seg.shape[0]
    out = np.zeros((K, 3)) + zero
    for k in range(K):
        b = pt_seg[k]
        for a in range(3):
            out[k, a] = (pw[b, a]
                         + Rw[b, a, 0] * pt_loc[k, 0]
                         + Rw[b, a, 1] * pt_loc[k, 1]
                         + Rw[b, a, 2] * pt_loc[k, 2])
    return out


@_jit
def points_jacobian(parents, pt_seg, pts, dof_body, dof_rev, dof_axis,
                    dof_pivot, zero):
    """Stacked geometric Jacobian (3K x n) of world points.

    Row block k maps qdot to the world velocity of point k. Columns for DoFs
    off the root-to-body path are zero.
    """
    K = pt_seg.shape[0]
    n = dof_body.shape[0]
    ns = parents.shape[0]
    J = np.zeros((3 * K, n)) + zero
    onpath = np.zeros(ns, np.int64)
    for k in range(K):
        for i in range(ns):
            onpath[i] = 0
        b = pt_seg[k]
        while b >= 0:
            onpath[b] = 1
            b = parents[b]
        for d in range(n):
            if onpath[dof_body[d]] == 0:
                continue
            if dof_rev[d] == 0:
                for a in range(3):
                    J[3 * k + a, d] = J[3 * k + a, d] + dof_axis[d, a]
            else:
                rx = pts[k, 0] - dof_pivot[d, 0]
                ry = pts[k, 1] - dof_pivot[d, 1]
                rz = pts[k, 2] - dof_pivot[d, 2]
                wx = dof_axis[d, 0]
                wy = dof_axis[d, 1]
                wz = dof_axis[d, 2]
                J[3 * k + 0, d] = wy * rz - wz * ry
                J[3 * k + 1, d] = wz * rx - wx * rz
                J[3 * k + 2, d] = wx * ry - wy * rx
    return J


@_jit
def points_force_tau(parents, pt_seg, pts, F, dof_body, dof_rev, dof_axis,
                     dof_pivot, zero):
    """Generalized force J^T F for forces F (K,3) applied at world points."""
    K = pt_seg.shape[0]
    n = dof_body.shape[0]
    ns = parents.shape[0]
    tau = np.zeros(n) + zero
    onpath = np.zeros(ns, np.int64)
    for k in range(K):
        for i in range(ns):
            onpath[i] = 0
        b = pt_seg[k]
        while b >= 0:
            onpath[b] = 1
            b = parents[b]
        for d in range(n):
            if onpath[dof_body[d]] == 0:
                continue
            if dof_rev[d] == 0:
                tau[d] = tau[d] + (dof_axis[d, 0] * F[k, 0]
                                   + dof_axis[d, 1] * F[k, 1]
                                   + dof_axis[d, 2] * F[k, 2])
            else:
                rx = pts[k, 0] - dof_pivot[d, 0]
                ry = pts[k, 1] - dof_pivot[d, 1]
                rz = pts[k, 2] - dof_pivot[d, 2]
                mx = ry * F[k, 2] - rz * F[k, 1]
                my = rz * F[k, 0] - rx * F[k, 2]
                mz = rx * F[k, 1] - ry * F[k, 0]
                tau[d] = tau[d] + (dof_axis[d, 0] * mx + dof_axis[d, 1] * my
                                   + dof_axis[d, 2] * mz)
    return tau


# ---------------------------------------------------------------------------
# dynamics

@_jit
def rnea(parents, offsets, orients, dof_start, dof_num, axes, root_free,
         mass, com, inertia, gravity, q, qdot, qddot):
    """Inverse dynamics: generalized force for (q, qdot, qddot), gravity in.

    Returns tau with M qddot + C(q,qdot) qdot + g(q); external/contact forces
    are handled by the callers via points_force_tau. World-frame recursion;
    the gravity term enters as a fictitious base acceleration.
    """
    ns = parents.shape[0]
    zero = q[0] * 0.0 + qdot[0] * 0.0 + qddot[0] * 0.0
    base = 6 if root_free == 1 else 0
    n = q.shape[0]
    Rw = np.zeros((ns, 3, 3)) + zero
    pw = np.zeros((ns, 3)) + zero
    om = np.zeros((ns, 3)) + zero
    al = np.zeros((ns, 3)) + zero
    ao = np.zeros((ns, 3)) + zero
    waxes = np.zeros((n, 3)) + zero
    # forward pass
    for i in range(ns):
        if i == 0:
            if root_free == 1:
                R0 = _rot_expmap(q[3:6], zero)
                Jl = _jl_mat(q[3:6], zero)
                Jld = _jl_dot_mat(q[3:6], qdot[3:6], zero)
                for a in range(3):
                    pw[0, a] = q[a] + offsets[0, a]
                    ao[0, a] = qddot[a] - gravity[a]
                    om[0, a] = (Jl[a, 0] * qdot[3] + Jl[a, 1] * qdot[4]
                                + Jl[a, 2] * qdot[5])
                    al[0, a] = (Jl[a, 0] * qddot[3] + Jl[a, 1] * qddot[4]
                                + Jl[a, 2] * qddot[5]
                                + Jld[a, 0] * qdot[3] + Jld[a, 1] * qdot[4]
                                + Jld[a, 2] * qdot[5])
                    waxes[a, a] = 1.0 + zero
                for j in range(3):
                    for a in range(3):
                        waxes[3 + j, a] = Jl[a, j]
            else:
                R0 = np.zeros((3, 3)) + zero
                for a in range(3):
                    R0[a, a] = 1.0 + zero
                    pw[0, a] = offsets[0, a] + zero
                    ao[0, a] = -gravity[a] + zero
            for a in range(3):
                for b in range(3):
                    Rw[0, a, b] = R0[a, b]
        else:
            p = parents[i]
            for a in range(3):
                pw[i, a] = (pw[p, a]
                            + Rw[p, a, 0] * offsets[i, 0]
                            + Rw[p, a, 1] * offsets[i, 1]
                            + Rw[p, a, 2] * offsets[i, 2])
            rx = pw[i, 0] - pw[p, 0]
            ry = pw[i, 1] - pw[p, 1]
            rz = pw[i, 2] - pw[p, 2]
            # linear acceleration of the joint origin (a point of the parent)
            wxr_x = om[p, 1] * rz - om[p, 2] * ry
            wxr_y = om[p, 2] * rx - om[p, 0] * rz
            wxr_z = om[p, 0] * ry - om[p, 1] * rx
            ao[i, 0] = (ao[p, 0] + al[p, 1] * rz - al[p, 2] * ry
                        + om[p, 1] * wxr_z - om[p, 2] * wxr_y)
            ao[i, 1] = (ao[p, 1] + al[p, 2] * rx - al[p, 0] * rz
                        + om[p, 2] * wxr_x - om[p, 0] * wxr_z)
            ao[i, 2] = (ao[p, 2] + al[p, 0] * ry - al[p, 1] * rx
                        + om[p, 0] * wxr_y - om[p, 1] * wxr_x)
            for a in range(3):
                om[i, a] = om[p, a]
                al[i, a] = al[p, a]
            Rrun = _mm3(Rw[p], _rot_expmap(orients[i], zero), zero)
            for k in range(dof_num[i]):
                idx = base + dof_start[i] + k
                ax = axes[i, k]
                wx = Rrun[0, 0] * ax[0] + Rrun[0, 1] * ax[1] + Rrun[0, 2] * ax[2]
                wy = Rrun[1, 0] * ax[0] + Rrun[1, 1] * ax[1] + Rrun[1, 2] * ax[2]
                wz = Rrun[2, 0] * ax[0] + Rrun[2, 1] * ax[1] + Rrun[2, 2] * ax[2]
                waxes[idx, 0] = wx
                waxes[idx, 1] = wy
                waxes[idx, 2] = wz
                # axis is fixed in the carrier frame (parent + prior axes)
                cwx = om[i, 1] * wz - om[i, 2] * wy
                cwy = om[i, 2] * wx - om[i, 0] * wz
                cwz = om[i, 0] * wy - om[i, 1] * wx
                al[i, 0] = al[i, 0] + wx * qddot[idx] + cwx * qdot[idx]
                al[i, 1] = al[i, 1] + wy * qddot[idx] + cwy * qdot[idx]
                al[i, 2] = al[i, 2] + wz * qddot[idx] + cwz * qdot[idx]
                om[i, 0] = om[i, 0] + wx * qdot[idx]
                om[i, 1] = om[i, 1] + wy * qdot[idx]
                om[i, 2] = om[i, 2] + wz * qdot[idx]
                Rrun = _mm3(Rrun, _rot_axis_angle(ax, q[idx], zero), zero)
            for a in range(3):
                for b in range(3):
                    Rw[i, a, b] = Rrun[a, b]
    # backward pass: net wrenches, accumulated toward the root
    F = np.zeros((ns, 3)) + zero
    N = np.zeros((ns, 3)) + zero
    for i in range(ns):
        rcx = Rw[i, 0, 0] * com[i, 0] + Rw[i, 0, 1] * com[i, 1] + Rw[i, 0, 2] * com[i, 2]
        rcy = Rw[i, 1, 0] * com[i, 0] + Rw[i, 1, 1] * com[i, 1] + Rw[i, 1, 2] * com[i, 2]
        rcz = Rw[i, 2, 0] * com[i, 0] + Rw[i, 2, 1] * com[i, 1] + Rw[i, 2, 2] * com[i, 2]
        wxr_x = om[i, 1] * rcz - om[i, 2] * rcy
        wxr_y = om[i, 2] * rcx - om[i, 0] * rcz
        wxr_z = om[i, 0] * rcy - om[i, 1] * rcx
        acx = ao[i, 0] + al[i, 1] * rcz - al[i, 2] * rcy + om[i, 1] * wxr_z - om[i, 2] * wxr_y
        acy = ao[i, 1] + al[i, 2] * rcx - al[i, 0] * rcz + om[i, 2] * wxr_x - om[i, 0] * wxr_z
        acz = ao[i, 2] + al[i, 0] * rcy - al[i, 1] * rcx + om[i, 0] * wxr_y - om[i, 1] * wxr_x
        fx = mass[i] * acx
        fy = mass[i] * acy
        fz = mass[i] * acz
        # world-frame inertia about the COM
        Iw = np.zeros((3, 3)) + zero
        for a in range(3):
            t0 = (Rw[i, a, 0] * inertia[i, 0, 0] + Rw[i, a, 1] * inertia[i, 1, 0]
                  + Rw[i, a, 2] * inertia[i, 2, 0])
            t1 = (Rw[i, a, 0] * inertia[i, 0, 1] + Rw[i, a, 1] * inertia[i, 1, 1]
                  + Rw[i, a, 2] * inertia[i, 2, 1])
            t2 = (Rw[i, a, 0] * inertia[i, 0, 2] + Rw[i, a, 1] * inertia[i, 1, 2]
                  + Rw[i, a, 2] * inertia[i, 2, 2])
            for b in range(3):
                Iw[a, b] = t0 * Rw[i, b, 0] + t1 * Rw[i, b, 1] + t2 * Rw[i, b, 2]
        hx = Iw[0, 0] * om[i, 0] + Iw[0, 1] * om[i, 1] + Iw[0, 2] * om[i, 2]
        hy = Iw[1, 0] * om[i, 0] + Iw[1, 1] * om[i, 1] + Iw[1, 2] * om[i, 2]
        hz = Iw[2, 0] * om[i, 0] + Iw[2, 1] * om[i, 1] + Iw[2, 2] * om[i, 2]
        ncx = (Iw[0, 0] * al[i, 0] + Iw[0, 1] * al[i, 1] + Iw[0, 2] * al[i, 2]
               + om[i, 1] * hz - om[i, 2] * hy)
        ncy = (Iw[1, 0] * al[i, 0] + Iw[1, 1] * al[i, 1] + Iw[1, 2] * al[i, 2]
               + om[i, 2] * hx - om[i, 0] * hz)
        ncz = (Iw[2, 0] * al[i, 0] + Iw[2, 1] * al[i, 1] + Iw[2, 2] * al[i, 2]
               + om[i, 0] * hy - om[i, 1] * hx)
        F[i, 0] = F[i, 0] + fx
        F[i, 1] = F[i, 1] + fy
        F[i, 2] = F[i, 2] + fz
        N[i, 0] = N[i, 0] + ncx + rcy * fz - rcz * fy
        N[i, 1] = N[i, 1] + ncy + rcz * fx - rcx * fz
        N[i, 2] = N[i, 2] + ncz + rcx * fy - rcy * fx
    for i in range(ns - 1, 0, -1):
        p = parents[i]
        rx = pw[i, 0] - pw[p, 0]
        ry = pw[i, 1] - pw[p, 1]
        rz = pw[i, 2] - pw[p, 2]
        N[p, 0] = N[p, 0] + N[i, 0] + ry * F[i, 2] - rz * F[i, 1]
        N[p, 1] = N[p, 1] + N[i, 1] + rz * F[i, 0] - rx * F[i, 2]
        N[p, 2] = N[p, 2] + N[i, 2] + rx * F[i, 1] - ry * F[i, 0]
        F[p, 0] = F[p, 0] + F[i, 0]
        F[p, 1] = F[p, 1] + F[i, 1]
        F[p, 2] = F[p, 2] + F[i, 2]
    tau = np.zeros(n) + zero
    if root_free == 1:
        for a in range(3):
            tau[a] = F[0, a]
        for j in range(3):
            tau[3 + j] = (waxes[3 + j, 0] * N[0, 0] + waxes[3 + j, 1] * N[0, 1]
                          + waxes[3 + j, 2] * N[0, 2])
    for i in range(1, ns):
        for k in range(dof_num[i]):
            idx = base + dof_start[i] + k
            tau[idx] = (waxes[idx, 0] * N[i, 0] + waxes[idx, 1] * N[i, 1]
                        + waxes[idx, 2] * N[i, 2])
    return tau


@_jit
def crba(parents, offsets, orients, dof_start, dof_num, axes, root_free,
         mass, com, inertia, q):
    """Mass matrix by composite-rigid-body accumulation in world frame."""
    ns = parents.shape[0]
    zero = q[0] * 0.0
    base = 6 if root_free == 1 else 0
    n = q.shape[0]
    Rw, pw = fk(parents, offsets, orients, dof_start, dof_num, axes,
                root_free, q)
    dof_body, dof_rev, dof_axis, dof_pivot = dof_frames(
        parents, offsets, orients, dof_start, dof_num, axes, root_free,
        q, Rw, pw)
    # per-body composites: mass, com, inertia about composite com (world)
    cm = np.zeros(ns)
    cc = np.zeros((ns, 3)) + zero
    cI = np.zeros((ns, 3, 3)) + zero
    for i in range(ns):
        cm[i] = mass[i]
        for a in range(3):
            cc[i, a] = (pw[i, a]
                        + Rw[i, a, 0] * com[i, 0]
                        + Rw[i, a, 1] * com[i, 1]
                        + Rw[i, a, 2] * com[i, 2])
        for a in range(3):
            t0 = (Rw[i, a, 0] * inertia[i, 0, 0] + Rw[i, a, 1] * inertia[i, 1, 0]
                  + Rw[i, a, 2] * inertia[i, 2, 0])
            t1 = (Rw[i, a, 0] * inertia[i, 0, 1] + Rw[i, a, 1] * inertia[i, 1, 1]
                  + Rw[i, a, 2] * inertia[i, 2, 1])
            t2 = (Rw[i, a, 0] * inertia[i, 0, 2] + Rw[i, a, 1] * inertia[i, 1, 2]
                  + Rw[i, a, 2] * inertia[i, 2, 2])
            for b in range(3):
                cI[i, a, b] = t0 * Rw[i, b, 0] + t1 * Rw[i, b, 1] + t2 * Rw[i, b, 2]
    M = np.zeros((n, n)) + zero
    for i in range(ns - 1, -1, -1):
        # rows/cols for the DoFs of body i against every ancestor DoF
        if i == 0:
            s_i = 0
            e_i = base
        else:
            s_i = base + dof_start[i]
            e_i = base + dof_start[i] + dof_num[i]
        for k in range(s_i, e_i):
            # unit-rate momentum of the composite subtree at DoF k
            if dof_rev[k] == 0:
                Px = cm[i] * dof_axis[k, 0]
                Py = cm[i] * dof_axis[k, 1]
                Pz = cm[i] * dof_axis[k, 2]
                Lx = zero + 0.0
                Ly = zero + 0.0
                Lz = zero + 0.0
            else:
                rx = cc[i, 0] - dof_pivot[k, 0]
                ry = cc[i, 1] - dof_pivot[k, 1]
                rz = cc[i, 2] - dof_pivot[k, 2]
                Px = cm[i] * (dof_axis[k, 1] * rz - dof_axis[k, 2] * ry)
                Py = cm[i] * (dof_axis[k, 2] * rx - dof_axis[k, 0] * rz)
                Pz = cm[i] * (dof_axis[k, 0] * ry - dof_axis[k, 1] * rx)
                Lx = (cI[i, 0, 0] * dof_axis[k, 0] + cI[i, 0, 1] * dof_axis[k, 1]
                      + cI[i, 0, 2] * dof_axis[k, 2])
                Ly = (cI[i, 1, 0] * dof_axis[k, 0] + cI[i, 1, 1] * dof_axis[k, 1]
                      + cI[i, 1, 2] * dof_axis[k, 2])
                Lz = (cI[i, 2, 0] * dof_axis[k, 0] + cI[i, 2, 1] * dof_axis[k, 1]
                      + cI[i, 2, 2] * dof_axis[k, 2])
            j = i
            while j >= 0:
                if j == 0:
                    s_j = 0
                    e_j = base
                else:
                    s_j = base + dof_start[j]
                    e_j = base + dof_start[j] + dof_num[j]
                for l in range(s_j, e_j):
                    if j == i and l > k:
                        continue
                    if dof_rev[l] == 0:
                        val = (dof_axis[l, 0] * Px + dof_axis[l, 1] * Py
                               + dof_axis[l, 2] * Pz)
                    else:
                        dx = cc[i, 0] - dof_pivot[l, 0]
                        dy = cc[i, 1] - dof_pivot[l, 1]
                        dz = cc[i, 2] - dof_pivot[l, 2]
                        mx = Lx + dy * Pz - dz * Py
                        my = Ly + dz * Px - dx * Pz
                        mz = Lz + dx * Py - dy * Px
                        val = (dof_axis[l, 0] * mx + dof_axis[l, 1] * my
                               + dof_axis[l, 2] * mz)
                    M[k, l] = val
                    M[l, k] = val
                j = parents[j]
        # fold the finished composite into the parent
        p = parents[i]
        if p >= 0:
            msum = cm[p] + cm[i]
            if msum > 0.0:
                ccn = np.zeros(3) + zero
                for a in range(3):
                    ccn[a] = (cm[p] * cc[p, a] + cm[i] * cc[i, a]) / msum
                dpx = cc[p, 0] - ccn[0]
                dpy = cc[p, 1] - ccn[1]
                dpz = cc[p, 2] - ccn[2]
                dix = cc[i, 0] - ccn[0]
                diy = cc[i, 1] - ccn[1]
                diz = cc[i, 2] - ccn[2]
                dp2 = dpx * dpx + dpy * dpy + dpz * dpz
                di2 = dix * dix + diy * diy + diz * diz
                for a in range(3):
                    for b in range(3):
                        cI[p, a, b] = cI[p, a, b] + cI[i, a, b]
                cI[p, 0, 0] = cI[p, 0, 0] + cm[p] * (dp2 - dpx * dpx) + cm[i] * (di2 - dix * dix)
                cI[p, 0, 1] = cI[p, 0, 1] - cm[p] * dpx * dpy - cm[i] * dix * diy
                cI[p, 0, 2] = cI[p, 0, 2] - cm[p] * dpx * dpz - cm[i] * dix * diz
                cI[p, 1, 0] = cI[p, 1, 0] - cm[p] * dpy * dpx - cm[i] * diy * dix
                cI[p, 1, 1] = cI[p, 1, 1] + cm[p] * (dp2 - dpy * dpy) + cm[i] * (di2 - diy * diy)
                cI[p, 1, 2] = cI[p, 1, 2] - cm[p] * dpy * dpz - cm[i] * diy * diz
                cI[p, 2, 0] = cI[p, 2, 0] - cm[p] * dpz * dpx - cm[i] * diz * dix
                cI[p, 2, 1] = cI[p, 2, 1] - cm[p] * dpz * dpy - cm[i] * diz * diy
                cI[p, 2, 2] = cI[p, 2, 2] + cm[p] * (dp2 - dpz * dpz) + cm[i] * (di2 - diz * diz)
                for a in range(3):
                    cc[p, a] = ccn[a]
                cm[p] = msum
            else:
                for a in range(3):
                    for b in range(3):
                        cI[p, a, b] = cI[p, a, b] + cI[i, a, b]
    return M


@_jit
def contact(parents, offsets, orients, dof_start, dof_num, axes, root_free,
            sph_seg, sph_pos, sph_rad, sph_kn, sph_cn, sph_mu, sph_eps,
            q, qdot):
    """Hunt-Crossley sphere/ground forces against the plane y = 0.

    Penetration depth is radius minus center height; its rate is the
    downward center velocity. Normal force k_n d^1.5 (1 + c_n ddot) along
    +y, clamped non-adhesive; tangential force is regularized Coulomb.
    Returns per-sphere (F_n, F_t) and world centers.
    """
    K = sph_seg.shape[0]
    zero = q[0] * 0.0 + qdot[0] * 0.0
    Rw, pw, om, vo = fk_vel(parents, offsets, orients, dof_start, dof_num,
                            axes, root_free, q, qdot)
    Fn = np.zeros((K, 3)) + zero
    Ft = np.zeros((K, 3)) + zero
    cen = np.zeros((K, 3)) + zero
    for k in range(K):
        b = sph_seg[k]
        cx = (pw[b, 0] + Rw[b, 0, 0] * sph_pos[k, 0]
              + Rw[b, 0, 1] * sph_pos[k, 1] + Rw[b, 0, 2] * sph_pos[k, 2])
        cy = (pw[b, 1] + Rw[b, 1, 0] * sph_pos[k, 0]
              + Rw[b, 1, 1] * sph_pos[k, 1] + Rw[b, 1, 2] * sph_pos[k, 2])
        cz = (pw[b, 2] + Rw[b, 2, 0] * sph_pos[k, 0]
              + Rw[b, 2, 1] * sph_pos[k, 1] + Rw[b, 2, 2] * sph_pos[k, 2])
        cen[k, 0] = cx
        cen[k, 1] = cy
        cen[k, 2] = cz
        pen = sph_rad[k] - cy
        if pen > 0.0:
            rx = cx - pw[b, 0]
            ry = cy - pw[b, 1]
            rz = cz - pw[b, 2]
            vx = vo[b, 0] + om[b, 1] * rz - om[b, 2] * ry
            vy = vo[b, 1] + om[b, 2] * rx - om[b, 0] * rz
            vz = vo[b, 2] + om[b, 0] * ry - om[b, 1] * rx
            pen_rate = -vy
            fmag = sph_kn[k] * pen ** 1.5 * (1.0 + sph_cn[k] * pen_rate)
            if fmag < 0.0:
                fmag = zero + 0.0
            Fn[k, 1] = fmag
            v2 = vx * vx + vz * vz
            if v2 > 0.0:
                vt = np.sqrt(v2)
            else:
                # keep the zero-velocity kink finite in dual mode
                vt = zero + 0.0
            scale = -sph_mu[k] * fmag / (vt + sph_eps[k])
            Ft[k, 0] = scale * vx
            Ft[k, 2] = scale * vz
    return Fn, Ft, cen


@_jit
def muscle_tau(msc_r, msc_lopt, msc_fmax, msc_vmax, msc_qref, msc_curve,
               act, q, qdot, root_free):
    """Hill-type muscle generalized torques over the rotational DoFs.

    Fiber length l = l_opt - sum_i r_i (q_i - q_ref_i), velocity
    v = -sum_i r_i qdot_i (constant moment arms). Force is
    a f_max f_l(l) f_v(v) + f_pass(l); torque at DoF i is r_i F.
    Curve rows: [fl_width, fv_k_con, fv_k_ecc, fv_plateau, p_shape, p_norm].
    """
    m = msc_r.shape[0]
    n = q.shape[0]
    base = 6 if root_free == 1 else 0
    nr = n - base
    zero = q[0] * 0.0 + qdot[0] * 0.0
    if m > 0:
        zero = zero + act[0] * 0.0
    tau = np.zeros(n) + zero
    for j in range(m):
        l = msc_lopt[j] + zero
        v = zero + 0.0
        for i in range(nr):
            r = msc_r[j, i]
            if r != 0.0:
                l = l - r * (q[base + i] - msc_qref[j, i])
                v = v - r * qdot[base + i]
        ln = l / msc_lopt[j]
        vn = v / msc_vmax[j]
        flw = msc_curve[j, 0]
        x = (ln - 1.0) / flw
        fl = np.exp(-x * x)
        kc = msc_curve[j, 1]
        ke = msc_curve[j, 2]
        pl = msc_curve[j, 3]
        if vn <= -1.0:
            fv = zero + 0.0
        elif vn < 0.0:
            fv = (1.0 + vn) / (1.0 - vn / kc)
        else:
            fv = (1.0 + pl * vn / ke) / (1.0 + vn / ke)
        pshape = msc_curve[j, 4]
        pnorm = msc_curve[j, 5]
        if ln > 1.0:
            fpass = (np.exp(pshape * (ln - 1.0) / pnorm) - 1.0) / (np.exp(pshape) - 1.0)
        else:
            fpass = zero + 0.0
        force = act[j] * msc_fmax[j] * fl * fv + msc_fmax[j] * fpass
        for i in range(nr):
            r = msc_r[j, i]
            if r != 0.0:
                tau[base + i] = tau[base + i] + r * force
    return tau


@_jit
def chol_solve(A, b, zero):
    """Solve A x = b for symmetric positive definite A. Returns (x, ok)."""
    n = A.shape[0]
    L = np.zeros((n, n)) + zero
    ok = 1
    for j in range(n):
        s = A[j, j] + zero
        for k in range(j):
            s = s - L[j, k] * L[j, k]
        if s <= 0.0:
            ok = 0
            s = 1.0 + zero
        d = np.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            t = A[i, j] + zero
            for k in range(j):
                t = t - L[i, k] * L[j, k]
            L[i, j] = t / d
    y = np.zeros(n) + zero
    for i in range(n):
        t = b[i] + zero
        for k in range(i):
            t = t - L[i, k] * y[k]
        y[i] = t / L[i, i]
    x = np.zeros(n) + zero
    for i in range(n - 1, -1, -1):
        t = y[i] + zero
        for k in range(i + 1, n):
            t = t - L[k, i] * x[k]
        x[i] = t / L[i, i]
    return x, ok


@_jit
def fd_core(parents, offsets, orients, dof_start, dof_num, axes, root_free,
            mass, com, inertia,
            sph_seg, sph_pos, sph_rad, sph_kn, sph_cn, sph_mu, sph_eps,
            gravity, q, qdot, tau_app, contact_mode, lam_ext):
    """Forward dynamics: M qddot = tau_app + J_C^T lambda - C - g.

    contact_mode: 0 none, 1 model contact, 2 prescribed per-sphere forces
    (lam_ext, K x 3, applied at the sphere centers). Returns (qddot, ok).
    """
    n = q.shape[0]
    zero = q[0] * 0.0 + qdot[0] * 0.0 + tau_app[0] * 0.0
    qdd0 = np.zeros(n) + zero
    bias = rnea(parents, offsets, orients, dof_start, dof_num, axes,
                root_free, mass, com, inertia, gravity, q, qdot, qdd0)
    M = crba(parents, offsets, orients, dof_start, dof_num, axes, root_free,
             mass, com, inertia, q)
    rhs = np.zeros(n) + zero
    for a in range(n):
        rhs[a] = tau_app[a] - bias[a]
    if contact_mode == 1:
        Fn, Ft, cen = contact(parents, offsets, orients, dof_start, dof_num,
                              axes, root_free, sph_seg, sph_pos, sph_rad,
                              sph_kn, sph_cn, sph_mu, sph_eps, q, qdot)
        K = sph_seg.shape[0]
        Fs = np.zeros((K, 3)) + zero
        for k in range(K):
            for a in range(3):
                Fs[k, a] = Fn[k, a] + Ft[k, a]
        Rw, pw = fk(parents, offsets, orients, dof_start, dof_num, axes,
                    root_free, q)
        dof_body, dof_rev, dof_axis, dof_pivot = dof_frames(
            parents, offsets, orients, dof_start, dof_num, axes, root_free,
            q, Rw, pw)
        tc = points_force_tau(parents, sph_seg, cen, Fs, dof_body, dof_rev,
                              dof_axis, dof_pivot, zero)
        for a in range(n):
            rhs[a] = rhs[a] + tc[a]
    elif contact_mode == 2:
        Rw, pw = fk(parents, offsets, orients, dof_start, dof_num, axes,
                    root_free, q)
        cen = body_points(sph_seg, sph_pos, Rw, pw, zero)
        dof_body, dof_rev, dof_axis, dof_pivot = dof_frames(
            parents, offsets, orients, dof_start, dof_num, axes, root_free,
            q, Rw, pw)
        tc = points_force_tau(parents, sph_seg, cen, lam_ext, dof_body,
                              dof_rev, dof_axis, dof_pivot, zero)
        for a in range(n):
            rhs[a] = rhs[a] + tc[a]
    qdd, ok = chol_solve(M, rhs, zero)
    return qdd, ok


@_jit
def rk4_step(parents, offsets, orients, dof_start, dof_num, axes, root_free,
             mass, com, inertia,
             sph_seg, sph_pos, sph_rad, sph_kn, sph_cn, sph_mu, sph_eps,
             gravity, q, qdot, tau0, tauh, tau1, contact_mode,
             lam0, lamh, lam1, dt):
    """Classical RK4 step with stage torques/forces at t, t+dt/2, t+dt."""
    k1v, ok1 = fd_core(parents, offsets, orients, dof_start, dof_num, axes,
                       root_free, mass, com, inertia, sph_seg, sph_pos,
                       sph_rad, sph_kn, sph_cn, sph_mu, sph_eps, gravity,
                       q, qdot, tau0, contact_mode, lam0)
    q2 = q + (0.5 * dt) * qdot
    qd2 = qdot + (0.5 * dt) * k1v
    k2v, ok2 = fd_core(parents, offsets, orients, dof_start, dof_num, axes,
                       root_free, mass, com, inertia, sph_seg, sph_pos,
                       sph_rad, sph_kn, sph_cn, sph_mu, sph_eps, gravity,
                       q2, qd2, tauh, contact_mode, lamh)
    q3 = q + (0.5 * dt) * qd2
    qd3 = qdot + (0.5 * dt) * k2v
    k3v, ok3 = fd_core(parents, offsets, orients, dof_start, dof_num, axes,
                       root_free, mass, com, inertia, sph_seg, sph_pos,
                       sph_rad, sph_kn, sph_cn, sph_mu, sph_eps, gravity,
                       q3, qd3, tauh, contact_mode, lamh)
    q4 = q + dt * qd3
    qd4 = qdot + dt * k3v
    k4v, ok4 = fd_core(parents, offsets, orients, dof_start, dof_num, axes,
                       root_free, mass, com, inertia, sph_seg, sph_pos,
                       sph_rad, sph_kn, sph_cn, sph_mu, sph_eps, gravity,
                       q4, qd4, tau1, contact_mode, lam1)
    qn = q + (dt / 6.0) * (qdot + 2.0 * qd2 + 2.0 * qd3 + qd4)
    qdn = qdot + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    ok = ok1 * ok2 * ok3 * ok4
    return qn, qdn, ok


@_jit
def semi_implicit_step(parents, offsets, orients, dof_start, dof_num, axes,
                       root_free, mass, com, inertia,
                       sph_seg, sph_pos, sph_rad, sph_kn, sph_cn, sph_mu,
                       sph_eps, gravity, q, qdot, tau0, contact_mode, lam0,
                       dt):
    """Semi-implicit Euler: velocity first, then position with the new rate."""
    qdd, ok = fd_core(parents, offsets, orients, dof_start, dof_num, axes,
                      root_free, mass, com, inertia, sph_seg, sph_pos,
                      sph_rad, sph_kn, sph_cn, sph_mu, sph_eps, gravity,
                      q, qdot, tau0, contact_mode, lam0)
    qdn = qdot + dt * qdd
    qn = q + dt * qdn
    return qn, qdn, ok
