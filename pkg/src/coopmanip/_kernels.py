"""Hot numerical kernels.

Everything in this module operates on plain float64 ndarrays and is compiled
with numba when the active engine allows it (see :mod:`coopmanip._engine`).
Conventions used throughout:

* quaternions are scalar-first arrays ``[eta, ex, ey, ez]``
* twists are ``[vx, vy, vz, wx, wy, wz]`` (linear first), wrenches
  ``[fx, fy, fz, tx, ty, tz]``
* a kinematic chain has 6 joints described by stacked arrays:
  ``jt`` (6,) int64 joint type (0 revolute, 1 prismatic), ``jax`` (6,3) unit
  axis in the joint pre-frame, ``jR``/``jp`` fixed transform from the parent
  link frame to the joint pre-frame, plus base and tool transforms
* link inertial parameters are rows ``[m, hx, hy, hz, Ixx, Iyy, Izz, Ixy,
  Ixz, Iyz]`` with the first moment ``h = m*com`` and the inertia taken
  about the link frame origin, in link coordinates.  Dynamics are exactly
  linear in these 10 numbers, which is what the regressor construction
  relies on.
"""

from __future__ import annotations

import math

import numpy as np

from ._engine import kernel

# joint types
REVOLUTE = 0
PRISMATIC = 1

# trajectory families
TRAJ_HOLD = 0
TRAJ_SINUSOID = 1
TRAJ_TABLE = 2

# controller modes
MODE_NONADAPTIVE = 0
MODE_ADAPTIVE = 1
MODE_ZERO = 2  # u = 0, plant-only runs

# run status
STATUS_OK = 0
STATUS_DIVERGED = 2
STATUS_SINGULAR = 3


# ---------------------------------------------------------------------------
# small linear algebra
# ---------------------------------------------------------------------------


@kernel
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@kernel
def skew3(a):
    out = np.zeros((3, 3))
    out[0, 1] = -a[2]
    out[0, 2] = a[1]
    out[1, 0] = a[2]
    out[1, 2] = -a[0]
    out[2, 0] = -a[1]
    out[2, 1] = a[0]
    return out


@kernel
def sym3_from6(v):
    """Symmetric 3x3 from [xx, yy, zz, xy, xz, yz]."""
    out = np.empty((3, 3))
    out[0, 0] = v[0]
    out[1, 1] = v[1]
    out[2, 2] = v[2]
    out[0, 1] = v[3]
    out[1, 0] = v[3]
    out[0, 2] = v[4]
    out[2, 0] = v[4]
    out[1, 2] = v[5]
    out[2, 1] = v[5]
    return out


@kernel
def axis_angle_rot(axis, ang):
    """Rodrigues rotation about a unit axis."""
    c = math.cos(ang)
    s = math.sin(ang)
    one_c = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    out = np.empty((3, 3))
    out[0, 0] = c + x * x * one_c
    out[0, 1] = x * y * one_c - z * s
    out[0, 2] = x * z * one_c + y * s
    out[1, 0] = y * x * one_c + z * s
    out[1, 1] = c + y * y * one_c
    out[1, 2] = y * z * one_c - x * s
    out[2, 0] = z * x * one_c - y * s
    out[2, 1] = z * y * one_c + x * s
    out[2, 2] = c + z * z * one_c
    return out


@kernel
def rotate3(R, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = R[i, 0] * v[0] + R[i, 1] * v[1] + R[i, 2] * v[2]
    return out


@kernel
def rotate3_t(R, v):
    """R.T @ v without materializing the transpose."""
    out = np.empty(3)
    for i in range(3):
        out[i] = R[0, i] * v[0] + R[1, i] * v[1] + R[2, i] * v[2]
    return out


@kernel
def mat3_mul(A, B):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return out


@kernel
def rot_sandwich(R, S):
    """R @ S @ R.T for 3x3 blocks (world-frame inertia update)."""
    return mat3_mul(mat3_mul(R, S), R.T.copy())


# ---------------------------------------------------------------------------
# unit quaternions
# ---------------------------------------------------------------------------


@kernel
def quat_mul(q1, q2):
    e1, e2 = q1[0], q2[0]
    out = np.empty(4)
    out[0] = e1 * e2 - (q1[1] * q2[1] + q1[2] * q2[2] + q1[3] * q2[3])
    out[1] = e1 * q2[1] + e2 * q1[1] + q1[2] * q2[3] - q1[3] * q2[2]
    out[2] = e1 * q2[2] + e2 * q1[2] + q1[3] * q2[1] - q1[1] * q2[3]
    out[3] = e1 * q2[3] + e2 * q1[3] + q1[1] * q2[2] - q1[2] * q2[1]
    return out


@kernel
def quat_conj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@kernel
def quat_normalize(q):
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    out = np.empty(4)
    for i in range(4):
        out[i] = q[i] / n
    return out


@kernel
def quat_to_rot(q):
    e, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty((3, 3))
    out[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[0, 1] = 2.0 * (x * y - e * z)
    out[0, 2] = 2.0 * (x * z + e * y)
    out[1, 0] = 2.0 * (x * y + e * z)
    out[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[1, 2] = 2.0 * (y * z - e * x)
    out[2, 0] = 2.0 * (x * z - e * y)
    out[2, 1] = 2.0 * (y * z + e * x)
    out[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


@kernel
def rot_to_quat(R):
    """Shepperd extraction; the scalar part is kept non-negative."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    q = np.empty(4)
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        for i in range(4):
            q[i] = -q[i]
    return quat_normalize(q)


@kernel
def e_matrix(q):
    """4x3 propagation map: qdot = 0.5 * E(q) @ omega."""
    out = np.empty((4, 3))
    out[0, 0] = -q[1]
    out[0, 1] = -q[2]
    out[0, 2] = -q[3]
    out[1, 0] = q[0]
    out[1, 1] = q[3]
    out[1, 2] = -q[2]
    out[2, 0] = -q[3]
    out[2, 1] = q[0]
    out[2, 2] = q[1]
    out[3, 0] = q[2]
    out[3, 1] = -q[1]
    out[3, 2] = q[0]
    return out


@kernel
def quat_rate(q, w):
    out = np.empty(4)
    out[0] = 0.5 * (-q[1] * w[0] - q[2] * w[1] - q[3] * w[2])
    out[1] = 0.5 * (q[0] * w[0] + q[3] * w[1] - q[2] * w[2])
    out[2] = 0.5 * (-q[3] * w[0] + q[0] * w[1] + q[1] * w[2])
    out[3] = 0.5 * (q[2] * w[0] - q[1] * w[1] + q[0] * w[2])
    return out


@kernel
def omega_from_quat_rate(q, qdot):
    """Inverse of quat_rate: omega = 2 E(q).T @ qdot."""
    out = np.empty(3)
    out[0] = 2.0 * (-q[1] * qdot[0] + q[0] * qdot[1] - q[3] * qdot[2] + q[2] * qdot[3])
    out[1] = 2.0 * (-q[2] * qdot[0] + q[3] * qdot[1] + q[0] * qdot[2] - q[1] * qdot[3])
    out[2] = 2.0 * (-q[3] * qdot[0] - q[2] * qdot[1] + q[1] * qdot[2] + q[0] * qdot[3])
    return out


@kernel
def quat_from_axis_angle(axis, ang):
    half = 0.5 * ang
    s = math.sin(half)
    out = np.empty(4)
    out[0] = math.cos(half)
    out[1] = s * axis[0]
    out[2] = s * axis[1]
    out[3] = s * axis[2]
    return out


@kernel
def quat_exp_step(q, w, dt):
    """Exact step for constant world-frame omega: exp(w*dt) applied on the left."""
    wx, wy, wz = w[0] * dt, w[1] * dt, w[2] * dt
    ang = math.sqrt(wx * wx + wy * wy + wz * wz)
    dq = np.empty(4)
    if ang < 1e-14:
        dq[0] = 1.0
        dq[1] = 0.5 * wx
        dq[2] = 0.5 * wy
        dq[3] = 0.5 * wz
    else:
        half = 0.5 * ang
        s = math.sin(half) / ang
        dq[0] = math.cos(half)
        dq[1] = s * wx
        dq[2] = s * wy
        dq[3] = s * wz
    return quat_normalize(quat_mul(dq, q))


@kernel
def euler_zyx_to_quat(e):
    """Euler Z-Y-X (yaw, pitch, roll) to quaternion; R = Rz @ Ry @ Rx."""
    cz = math.cos(0.5 * e[0])
    sz = math.sin(0.5 * e[0])
    cy = math.cos(0.5 * e[1])
    sy = math.sin(0.5 * e[1])
    cx = math.cos(0.5 * e[2])
    sx = math.sin(0.5 * e[2])
    out = np.empty(4)
    out[0] = cz * cy * cx + sz * sy * sx
    out[1] = cz * cy * sx - sz * sy * cx
    out[2] = cz * sy * cx + sz * cy * sx
    out[3] = sz * cy * cx - cz * sy * sx
    return out


@kernel
def quat_to_euler_zyx(q):
    R = quat_to_rot(q)
    out = np.empty(3)
    s = -R[2, 0]
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    out[0] = math.atan2(R[1, 0], R[0, 0])
    out[1] = math.asin(s)
    out[2] = math.atan2(R[2, 1], R[2, 2])
    return out


@kernel
def quat_geodesic(q1, q2):
    """Geodesic angle between two orientations (double-cover aware)."""
    d = abs(q1[0] * q2[0] + q1[1] * q2[1] + q1[2] * q2[2] + q1[3] * q2[3])
    if d > 1.0:
        d = 1.0
    return 2.0 * math.acos(d)


# ---------------------------------------------------------------------------
# chain kinematics
# ---------------------------------------------------------------------------


@kernel
def chain_frames(jt, jax, jR, jp, base_R, base_p, q):
    """Forward pass: world joint axes, joint origins and link frames."""
    n = jt.shape[0]
    z = np.empty((n, 3))
    pj = np.empty((n, 3))
    Rl = np.empty((n, 3, 3))
    ol = np.empty((n, 3))
    R_prev = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            R_prev[a, b] = base_R[a, b]
    p_prev = np.empty(3)
    for a in range(3):
        p_prev[a] = base_p[a]
    R_pre = np.empty((3, 3))
    for j in range(n):
        for a in range(3):
            for b in range(3):
                R_pre[a, b] = (R_prev[a, 0] * jR[j, 0, b]
                               + R_prev[a, 1] * jR[j, 1, b]
                               + R_prev[a, 2] * jR[j, 2, b])
        for a in range(3):
            pj[j, a] = (p_prev[a] + R_prev[a, 0] * jp[j, 0]
                        + R_prev[a, 1] * jp[j, 1] + R_prev[a, 2] * jp[j, 2])
            z[j, a] = (R_pre[a, 0] * jax[j, 0] + R_pre[a, 1] * jax[j, 1]
                       + R_pre[a, 2] * jax[j, 2])
        if jt[j] == REVOLUTE:
            A = axis_angle_rot(jax[j], q[j])
            for a in range(3):
                for b in range(3):
                    Rl[j, a, b] = (R_pre[a, 0] * A[0, b] + R_pre[a, 1] * A[1, b]
                                   + R_pre[a, 2] * A[2, b])
                ol[j, a] = pj[j, a]
        else:
            for a in range(3):
                for b in range(3):
                    Rl[j, a, b] = R_pre[a, b]
                ol[j, a] = pj[j, a] + q[j] * z[j, a]
        for a in range(3):
            for b in range(3):
                R_prev[a, b] = Rl[j, a, b]
            p_prev[a] = ol[j, a]
    return z, pj, Rl, ol


@kernel
def chain_ee(Rl, ol, tool_R, tool_p):
    n = Rl.shape[0]
    Re = mat3_mul(Rl[n - 1], tool_R)
    pe = ol[n - 1] + rotate3(Rl[n - 1], tool_p)
    return Re, pe


@kernel
def chain_jacobian(jt, z, pj, x):
    """Geometric Jacobian of world point x attached to the last link."""
    n = jt.shape[0]
    J = np.zeros((6, 6))
    for j in range(n):
        if jt[j] == REVOLUTE:
            r0 = x[0] - pj[j, 0]
            r1 = x[1] - pj[j, 1]
            r2 = x[2] - pj[j, 2]
            J[0, j] = z[j, 1] * r2 - z[j, 2] * r1
            J[1, j] = z[j, 2] * r0 - z[j, 0] * r2
            J[2, j] = z[j, 0] * r1 - z[j, 1] * r0
            J[3, j] = z[j, 0]
            J[4, j] = z[j, 1]
            J[5, j] = z[j, 2]
        else:
            J[0, j] = z[j, 0]
            J[1, j] = z[j, 1]
            J[2, j] = z[j, 2]
    return J


@kernel
def _dpoint(jt, z, pj, l, x):
    """d(world point x on a link at or after joint l)/d q_l."""
    if jt[l] == REVOLUTE:
        r = np.empty(3)
        r[0] = x[0] - pj[l, 0]
        r[1] = x[1] - pj[l, 1]
        r[2] = x[2] - pj[l, 2]
        return cross3(z[l], r)
    return z[l].copy()


@kernel
def chain_jacobian_dot(jt, z, pj, x, qd):
    """Time derivative of the end-effector geometric Jacobian."""
    n = jt.shape[0]
    Jd = np.zeros((6, 6))
    # xdot enters every revolute column through the moment arm
    xdot = np.zeros(3)
    for l in range(n):
        if jt[l] == REVOLUTE:
            r0 = x[0] - pj[l, 0]
            r1 = x[1] - pj[l, 1]
            r2 = x[2] - pj[l, 2]
            xdot[0] += qd[l] * (z[l, 1] * r2 - z[l, 2] * r1)
            xdot[1] += qd[l] * (z[l, 2] * r0 - z[l, 0] * r2)
            xdot[2] += qd[l] * (z[l, 0] * r1 - z[l, 1] * r0)
        else:
            xdot[0] += qd[l] * z[l, 0]
            xdot[1] += qd[l] * z[l, 1]
            xdot[2] += qd[l] * z[l, 2]
    dzj = np.empty(3)
    dpj = np.empty(3)
    for j in range(n):
        for a in range(3):
            dzj[a] = 0.0
            dpj[a] = 0.0
        for l in range(j):
            if jt[l] == REVOLUTE:
                dzj[0] += qd[l] * (z[l, 1] * z[j, 2] - z[l, 2] * z[j, 1])
                dzj[1] += qd[l] * (z[l, 2] * z[j, 0] - z[l, 0] * z[j, 2])
                dzj[2] += qd[l] * (z[l, 0] * z[j, 1] - z[l, 1] * z[j, 0])
                r0 = pj[j, 0] - pj[l, 0]
                r1 = pj[j, 1] - pj[l, 1]
                r2 = pj[j, 2] - pj[l, 2]
                dpj[0] += qd[l] * (z[l, 1] * r2 - z[l, 2] * r1)
                dpj[1] += qd[l] * (z[l, 2] * r0 - z[l, 0] * r2)
                dpj[2] += qd[l] * (z[l, 0] * r1 - z[l, 1] * r0)
            else:
                dpj[0] += qd[l] * z[l, 0]
                dpj[1] += qd[l] * z[l, 1]
                dpj[2] += qd[l] * z[l, 2]
        if jt[j] == REVOLUTE:
            r0 = x[0] - pj[j, 0]
            r1 = x[1] - pj[j, 1]
            r2 = x[2] - pj[j, 2]
            w0 = xdot[0] - dpj[0]
            w1 = xdot[1] - dpj[1]
            w2 = xdot[2] - dpj[2]
            Jd[0, j] = (dzj[1] * r2 - dzj[2] * r1) + (z[j, 1] * w2 - z[j, 2] * w1)
            Jd[1, j] = (dzj[2] * r0 - dzj[0] * r2) + (z[j, 2] * w0 - z[j, 0] * w2)
            Jd[2, j] = (dzj[0] * r1 - dzj[1] * r0) + (z[j, 0] * w1 - z[j, 1] * w0)
            Jd[3, j] = dzj[0]
            Jd[4, j] = dzj[1]
            Jd[5, j] = dzj[2]
        else:
            Jd[0, j] = dzj[0]
            Jd[1, j] = dzj[1]
            Jd[2, j] = dzj[2]
    return Jd


# ---------------------------------------------------------------------------
# chain dynamics: M, C (Christoffel), g, all exactly linear in the
# 10 inertial parameters of each link
# ---------------------------------------------------------------------------


@kernel
def _link_jacobians(jt, z, pj, ol, k):
    """Point/angular Jacobians of link k's frame origin (columns j <= k)."""
    n = jt.shape[0]
    Jv = np.zeros((3, n))
    Jw = np.zeros((3, n))
    for j in range(k + 1):
        if jt[j] == REVOLUTE:
            r = np.empty(3)
            r[0] = ol[k, 0] - pj[j, 0]
            r[1] = ol[k, 1] - pj[j, 1]
            r[2] = ol[k, 2] - pj[j, 2]
            c = cross3(z[j], r)
            Jv[0, j] = c[0]
            Jv[1, j] = c[1]
            Jv[2, j] = c[2]
            Jw[0, j] = z[j, 0]
            Jw[1, j] = z[j, 1]
            Jw[2, j] = z[j, 2]
        else:
            Jv[0, j] = z[j, 0]
            Jv[1, j] = z[j, 1]
            Jv[2, j] = z[j, 2]
    return Jv, Jw


@kernel
def chain_dynamics(jt, z, pj, Rl, ol, params, grav, qd):
    """Joint-space M, C, g of a 6-joint chain.

    C is built from Christoffel symbols with analytic dM/dq, so
    Mdot - 2C is skew-symmetric to machine precision.  Links whose ten
    parameters are all zero contribute nothing and are skipped, which is
    what makes basis-vector regressor evaluation cheap.

    Per link the contribution is M_k = E.T @ H @ E with E = [Jv; Jw] and
    H = [[m I, -S(h_w)], [S(h_w), I_w]]; its q_l-derivative is
    dE.T @ P + (dE.T @ P).T + (K + K.T) + (L + L.T) with P = H @ E,
    K = Jw.T S(dh_w) Jv and L = Jw.T S(z_l) I_w Jw.
    """
    n = jt.shape[0]
    M = np.zeros((6, 6))
    dM = np.zeros((6, 6, 6))
    g = np.zeros(6)
    E = np.zeros((6, 6))
    dE = np.zeros((6, 6))
    P = np.empty((6, 6))
    W = np.empty((3, 6))
    T = np.empty((3, 6))
    h_w = np.empty(3)
    I_w = np.empty((3, 3))
    B3 = np.empty((3, 3))
    for k in range(n):
        active = False
        for a in range(10):
            if params[k, a] != 0.0:
                active = True
        if not active:
            continue
        m = params[k, 0]
        for a in range(3):
            h_w[a] = (Rl[k, a, 0] * params[k, 1] + Rl[k, a, 1] * params[k, 2]
                      + Rl[k, a, 2] * params[k, 3])
        Ib = sym3_from6(params[k, 4:10])
        for a in range(3):
            for b in range(3):
                B3[a, b] = (Rl[k, a, 0] * Ib[0, b] + Rl[k, a, 1] * Ib[1, b]
                            + Rl[k, a, 2] * Ib[2, b])
        for a in range(3):
            for b in range(3):
                I_w[a, b] = (B3[a, 0] * Rl[k, b, 0] + B3[a, 1] * Rl[k, b, 1]
                             + B3[a, 2] * Rl[k, b, 2])
        # E = [Jv; Jw] of link k's frame origin, columns j <= k
        for j in range(6):
            for a in range(6):
                E[a, j] = 0.0
        for j in range(k + 1):
            if jt[j] == REVOLUTE:
                r0 = ol[k, 0] - pj[j, 0]
                r1 = ol[k, 1] - pj[j, 1]
                r2 = ol[k, 2] - pj[j, 2]
                E[0, j] = z[j, 1] * r2 - z[j, 2] * r1
                E[1, j] = z[j, 2] * r0 - z[j, 0] * r2
                E[2, j] = z[j, 0] * r1 - z[j, 1] * r0
                E[3, j] = z[j, 0]
                E[4, j] = z[j, 1]
                E[5, j] = z[j, 2]
            else:
                E[0, j] = z[j, 0]
                E[1, j] = z[j, 1]
                E[2, j] = z[j, 2]
        # P = H @ E and W = I_w @ Jw
        for j in range(k + 1):
            P[0, j] = m * E[0, j] - (h_w[1] * E[5, j] - h_w[2] * E[4, j])
            P[1, j] = m * E[1, j] - (h_w[2] * E[3, j] - h_w[0] * E[5, j])
            P[2, j] = m * E[2, j] - (h_w[0] * E[4, j] - h_w[1] * E[3, j])
            w0 = I_w[0, 0] * E[3, j] + I_w[0, 1] * E[4, j] + I_w[0, 2] * E[5, j]
            w1 = I_w[1, 0] * E[3, j] + I_w[1, 1] * E[4, j] + I_w[1, 2] * E[5, j]
            w2 = I_w[2, 0] * E[3, j] + I_w[2, 1] * E[4, j] + I_w[2, 2] * E[5, j]
            W[0, j] = w0
            W[1, j] = w1
            W[2, j] = w2
            P[3, j] = (h_w[1] * E[2, j] - h_w[2] * E[1, j]) + w0
            P[4, j] = (h_w[2] * E[0, j] - h_w[0] * E[2, j]) + w1
            P[5, j] = (h_w[0] * E[1, j] - h_w[1] * E[0, j]) + w2
        for i in range(k + 1):
            for j in range(k + 1):
                acc = 0.0
                for r in range(6):
                    acc += E[r, i] * P[r, j]
                M[i, j] += acc
        for l in range(k + 1):
            l_rev = jt[l] == REVOLUTE
            # dE columns
            for j in range(k + 1):
                if l < j and l_rev:
                    dz0 = z[l, 1] * z[j, 2] - z[l, 2] * z[j, 1]
                    dz1 = z[l, 2] * z[j, 0] - z[l, 0] * z[j, 2]
                    dz2 = z[l, 0] * z[j, 1] - z[l, 1] * z[j, 0]
                else:
                    dz0 = 0.0
                    dz1 = 0.0
                    dz2 = 0.0
                if l < j:
                    if l_rev:
                        r0 = pj[j, 0] - pj[l, 0]
                        r1 = pj[j, 1] - pj[l, 1]
                        r2 = pj[j, 2] - pj[l, 2]
                        dp0 = z[l, 1] * r2 - z[l, 2] * r1
                        dp1 = z[l, 2] * r0 - z[l, 0] * r2
                        dp2 = z[l, 0] * r1 - z[l, 1] * r0
                    else:
                        dp0 = z[l, 0]
                        dp1 = z[l, 1]
                        dp2 = z[l, 2]
                else:
                    dp0 = 0.0
                    dp1 = 0.0
                    dp2 = 0.0
                if l_rev:
                    r0 = ol[k, 0] - pj[l, 0]
                    r1 = ol[k, 1] - pj[l, 1]
                    r2 = ol[k, 2] - pj[l, 2]
                    do0 = z[l, 1] * r2 - z[l, 2] * r1
                    do1 = z[l, 2] * r0 - z[l, 0] * r2
                    do2 = z[l, 0] * r1 - z[l, 1] * r0
                else:
                    do0 = z[l, 0]
                    do1 = z[l, 1]
                    do2 = z[l, 2]
                if jt[j] == REVOLUTE:
                    r0 = ol[k, 0] - pj[j, 0]
                    r1 = ol[k, 1] - pj[j, 1]
                    r2 = ol[k, 2] - pj[j, 2]
                    w0 = do0 - dp0
                    w1 = do1 - dp1
                    w2 = do2 - dp2
                    dE[0, j] = (dz1 * r2 - dz2 * r1) + (z[j, 1] * w2 - z[j, 2] * w1)
                    dE[1, j] = (dz2 * r0 - dz0 * r2) + (z[j, 2] * w0 - z[j, 0] * w2)
                    dE[2, j] = (dz0 * r1 - dz1 * r0) + (z[j, 0] * w1 - z[j, 1] * w0)
                    dE[3, j] = dz0
                    dE[4, j] = dz1
                    dE[5, j] = dz2
                else:
                    dE[0, j] = dz0
                    dE[1, j] = dz1
                    dE[2, j] = dz2
                    dE[3, j] = 0.0
                    dE[4, j] = 0.0
                    dE[5, j] = 0.0
            dMl = dM[l]
            for i in range(k + 1):
                for j in range(k + 1):
                    acc = 0.0
                    for r in range(6):
                        acc += dE[r, i] * P[r, j]
                    dMl[i, j] += acc
                    dMl[j, i] += acc
            # d(o_k)/dq_l for the gravity gradient
            if l_rev:
                r0 = ol[k, 0] - pj[l, 0]
                r1 = ol[k, 1] - pj[l, 1]
                r2 = ol[k, 2] - pj[l, 2]
                do0 = z[l, 1] * r2 - z[l, 2] * r1
                do1 = z[l, 2] * r0 - z[l, 0] * r2
                do2 = z[l, 0] * r1 - z[l, 1] * r0
                dh0 = z[l, 1] * h_w[2] - z[l, 2] * h_w[1]
                dh1 = z[l, 2] * h_w[0] - z[l, 0] * h_w[2]
                dh2 = z[l, 0] * h_w[1] - z[l, 1] * h_w[0]
                g[l] -= (grav[0] * (m * do0 + dh0) + grav[1] * (m * do1 + dh1)
                         + grav[2] * (m * do2 + dh2))
                # orientation-dependent terms of dM: first moment and inertia
                for j in range(k + 1):
                    T[0, j] = dh1 * E[2, j] - dh2 * E[1, j]
                    T[1, j] = dh2 * E[0, j] - dh0 * E[2, j]
                    T[2, j] = dh0 * E[1, j] - dh1 * E[0, j]
                for i in range(k + 1):
                    for j in range(k + 1):
                        acc = (E[3, i] * T[0, j] + E[4, i] * T[1, j]
                               + E[5, i] * T[2, j])
                        dMl[i, j] += acc
                        dMl[j, i] += acc
                for j in range(k + 1):
                    T[0, j] = z[l, 1] * W[2, j] - z[l, 2] * W[1, j]
                    T[1, j] = z[l, 2] * W[0, j] - z[l, 0] * W[2, j]
                    T[2, j] = z[l, 0] * W[1, j] - z[l, 1] * W[0, j]
                for i in range(k + 1):
                    for j in range(k + 1):
                        acc = (E[3, i] * T[0, j] + E[4, i] * T[1, j]
                               + E[5, i] * T[2, j])
                        dMl[i, j] += acc
                        dMl[j, i] += acc
            else:
                g[l] -= m * (grav[0] * z[l, 0] + grav[1] * z[l, 1]
                             + grav[2] * z[l, 2])
    # enforce exact symmetry of the accumulated quadratic forms
    for i in range(6):
        for j in range(i):
            s = 0.5 * (M[i, j] + M[j, i])
            M[i, j] = s
            M[j, i] = s
    C = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            acc = 0.0
            for l in range(6):
                acc += (dM[l, i, j] + dM[j, i, l] - dM[i, j, l]) * qd[l]
            C[i, j] = 0.5 * acc
    return M, C, g


@kernel
def chain_energy(jt, z, pj, Rl, ol, params, grav, qd):
    """Kinetic and potential energy of the chain."""
    n = jt.shape[0]
    T = 0.0
    U = 0.0
    for k in range(n):
        m = params[k, 0]
        h = np.empty(3)
        h[0] = params[k, 1]
        h[1] = params[k, 2]
        h[2] = params[k, 3]
        h_w = rotate3(Rl[k], h)
        I_w = rot_sandwich(Rl[k], sym3_from6(params[k, 4:10]))
        Jv, Jw = _link_jacobians(jt, z, pj, ol, k)
        v = np.zeros(3)
        w = np.zeros(3)
        for j in range(n):
            for i in range(3):
                v[i] += Jv[i, j] * qd[j]
                w[i] += Jw[i, j] * qd[j]
        wxh = cross3(w, h_w)
        Iw_w = rotate3(I_w, w)
        T += 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        T += v[0] * wxh[0] + v[1] * wxh[1] + v[2] * wxh[2]
        T += 0.5 * (w[0] * Iw_w[0] + w[1] * Iw_w[1] + w[2] * Iw_w[2])
        U -= (
            grav[0] * (m * ol[k, 0] + h_w[0])
            + grav[1] * (m * ol[k, 1] + h_w[1])
            + grav[2] * (m * ol[k, 2] + h_w[2])
        )
    return T, U


@kernel
def solve6_mat(A, B):
    """Gaussian elimination with partial pivoting for a 6x6 system.

    Beats the LAPACK dispatch overhead at this size; A and B are not
    modified.
    """
    n = 6
    m = B.shape[1]
    LU = A.copy()
    X = B.copy()
    for col in range(n):
        p = col
        best = abs(LU[col, col])
        for r in range(col + 1, n):
            v = abs(LU[r, col])
            if v > best:
                best = v
                p = r
        if p != col:
            for cc in range(n):
                tmp = LU[col, cc]
                LU[col, cc] = LU[p, cc]
                LU[p, cc] = tmp
            for cc in range(m):
                tmp = X[col, cc]
                X[col, cc] = X[p, cc]
                X[p, cc] = tmp
        d = LU[col, col]
        for r in range(col + 1, n):
            f = LU[r, col] / d
            if f != 0.0:
                for cc in range(col + 1, n):
                    LU[r, cc] -= f * LU[col, cc]
                for cc in range(m):
                    X[r, cc] -= f * X[col, cc]
    for col in range(n - 1, -1, -1):
        for cc in range(m):
            acc = X[col, cc]
            for r in range(col + 1, n):
                acc -= LU[col, r] * X[r, cc]
            X[col, cc] = acc / LU[col, col]
    return X


@kernel
def solve6(A, b):
    """solve6_mat for a single right-hand side vector."""
    B = np.empty((6, 1))
    for i in range(6):
        B[i, 0] = b[i]
    X = solve6_mat(A, B)
    out = np.empty(6)
    for i in range(6):
        out[i] = X[i, 0]
    return out


@kernel
def solve6_t(A, b):
    """Solve A.T x = b."""
    return solve6(A.T.copy(), b)


@kernel
def task_dynamics_from_joint(M, C, g, J, Jd):
    """Pull joint-space terms to the end-effector twist coordinates."""
    eye = np.eye(6)
    Ji = solve6_mat(J, eye)
    JiT = Ji.T.copy()
    Mi = JiT @ (M @ Ji)
    Ci = JiT @ ((C - M @ (Ji @ Jd)) @ Ji)
    gi = JiT @ np.ascontiguousarray(g)
    return Mi, Ci, gi


@kernel
def chain_task_dynamics(jt, jax, jR, jp, base_R, base_p, tool_R, tool_p,
                        params, grav, q, qd):
    """End-effector-space M_i, C_i, g_i plus J, Jdot and the EE pose."""
    z, pj, Rl, ol = chain_frames(jt, jax, jR, jp, base_R, base_p, q)
    Re, pe = chain_ee(Rl, ol, tool_R, tool_p)
    J = chain_jacobian(jt, z, pj, pe)
    Jd = chain_jacobian_dot(jt, z, pj, pe, qd)
    M, C, g = chain_dynamics(jt, z, pj, Rl, ol, params, grav, qd)
    Mi, Ci, gi = task_dynamics_from_joint(M, C, g, J, Jd)
    return Mi, Ci, gi, J, Jd, Re, pe


# ---------------------------------------------------------------------------
# object dynamics and regressors
# ---------------------------------------------------------------------------


@kernel
def object_mcg(theta, grav, R, w):
    """Newton-Euler terms of the payload about its center of mass.

    theta = [m, Ixx, Iyy, Izz, Ixy, Ixz, Iyz] in body coordinates.
    """
    m = theta[0]
    I_w = rot_sandwich(R, sym3_from6(theta[1:7]))
    M = np.zeros((6, 6))
    M[0, 0] = m
    M[1, 1] = m
    M[2, 2] = m
    for i in range(3):
        for j in range(3):
            M[3 + i, 3 + j] = I_w[i, j]
    C = np.zeros((6, 6))
    Sw = skew3(w)
    SwI = mat3_mul(Sw, I_w)
    for i in range(3):
        for j in range(3):
            C[3 + i, 3 + j] = SwI[i, j]
    g = np.zeros(6)
    g[0] = -m * grav[0]
    g[1] = -m * grav[1]
    g[2] = -m * grav[2]
    return M, C, g


@kernel
def object_regressor(grav, R, w, v, vd):
    """6x7 regressor: object_mcg terms evaluated at the parameter basis."""
    Y = np.empty((6, 7))
    basis = np.zeros(7)
    for k in range(7):
        basis[k] = 1.0
        M, C, g = object_mcg(basis, grav, R, w)
        col = M @ np.ascontiguousarray(vd) + C @ np.ascontiguousarray(v) + g
        for i in range(6):
            Y[i, k] = col[i]
        basis[k] = 0.0
    return Y


@kernel
def agent_regressor_ws(jt, z, pj, Rl, ol, J, Jd, grav, qd, v, vd,
                       j_oi, j_oi_dot, param_link, param_comp):
    """Regressor from a precomputed kinematic workspace.

    With B = J^-1 J_oi the column for basis parameter b collapses to
    B.T @ (g_b + C_b @ (B v) + M_b @ (B vd + J^-1 Jdot_oi v - J^-1 Jdot B v)),
    so the kinematic solves are shared by all columns.
    """
    nb = param_link.shape[0]
    Y = np.empty((6, nb))
    basis = np.zeros((jt.shape[0], 10))
    B = solve6_mat(J, j_oi)
    bv = B @ np.ascontiguousarray(v)
    ba = B @ np.ascontiguousarray(vd)
    t1 = solve6(J, Jd @ bv)
    t2 = solve6(J, j_oi_dot @ np.ascontiguousarray(v))
    kin = np.empty(6)
    for i in range(6):
        kin[i] = ba[i] + t2[i] - t1[i]
    BT = B.T.copy()
    for b in range(nb):
        basis[param_link[b], param_comp[b]] = 1.0
        M, C, g = chain_dynamics(jt, z, pj, Rl, ol, basis, grav, qd)
        col = BT @ (g + C @ bv + M @ kin)
        for i in range(6):
            Y[i, b] = col[i]
        basis[param_link[b], param_comp[b]] = 0.0
    return Y


@kernel
def agent_regressor(jt, jax, jR, jp, base_R, base_p, tool_R, tool_p,
                    grav, q, qd, v, vd, j_oi, j_oi_dot,
                    param_link, param_comp):
    """6 x l regressor of the object-mapped agent dynamics.

    Built column-by-column by evaluating the dynamics with unit basis
    parameter vectors; exact because the dynamics are linear in the
    link inertial parameters.
    """
    z, pj, Rl, ol = chain_frames(jt, jax, jR, jp, base_R, base_p, q)
    Re, pe = chain_ee(Rl, ol, tool_R, tool_p)
    J = chain_jacobian(jt, z, pj, pe)
    Jd = chain_jacobian_dot(jt, z, pj, pe, qd)
    return agent_regressor_ws(jt, z, pj, Rl, ol, J, Jd, grav, qd, v, vd,
                              j_oi, j_oi_dot, param_link, param_comp)


# ---------------------------------------------------------------------------
# grasp algebra
# ---------------------------------------------------------------------------


@kernel
def object_agent_jacobian(p_oe):
    """Rigid velocity transport [[I, S(p_OE)], [0, I]] (always invertible)."""
    J = np.zeros((6, 6))
    for i in range(6):
        J[i, i] = 1.0
    J[0, 4] = -p_oe[2]
    J[0, 5] = p_oe[1]
    J[1, 3] = p_oe[2]
    J[1, 5] = -p_oe[0]
    J[2, 3] = -p_oe[1]
    J[2, 4] = p_oe[0]
    return J


@kernel
def object_agent_jacobian_inv(p_oe):
    """Closed-form inverse: negate the skew block."""
    J = np.zeros((6, 6))
    for i in range(6):
        J[i, i] = 1.0
    J[0, 4] = p_oe[2]
    J[0, 5] = -p_oe[1]
    J[1, 3] = -p_oe[2]
    J[1, 5] = p_oe[0]
    J[2, 3] = p_oe[1]
    J[2, 4] = -p_oe[0]
    return J


@kernel
def object_agent_jacobian_dot(p_oe_dot):
    Jd = np.zeros((6, 6))
    Jd[0, 4] = -p_oe_dot[2]
    Jd[0, 5] = p_oe_dot[1]
    Jd[1, 3] = p_oe_dot[2]
    Jd[1, 5] = -p_oe_dot[0]
    Jd[2, 3] = -p_oe_dot[1]
    Jd[2, 4] = p_oe_dot[0]
    return Jd


@kernel
def grasp_g(p_oes):
    """Stacked 6N x 6 grasp matrix."""
    N = p_oes.shape[0]
    G = np.zeros((6 * N, 6))
    for a in range(N):
        Ja = object_agent_jacobian(p_oes[a])
        for i in range(6):
            for j in range(6):
                G[6 * a + i, j] = Ja[i, j]
    return G


@kernel
def grasp_gtilde(p_oes):
    """Block-diagonal of the transport inverses, 6N x 6N."""
    N = p_oes.shape[0]
    Gt = np.zeros((6 * N, 6 * N))
    for a in range(N):
        Ji = object_agent_jacobian_inv(p_oes[a])
        for i in range(6):
            for j in range(6):
                Gt[6 * a + i, 6 * a + j] = Ji[i, j]
    return Gt


@kernel
def grasp_gstar(p_oes):
    """Load-averaging right inverse of G.T: G.T @ G* = I."""
    N = p_oes.shape[0]
    Gs = np.zeros((6 * N, 6))
    for a in range(N):
        Ji = object_agent_jacobian_inv(p_oes[a])
        for i in range(6):
            for j in range(6):
                Gs[6 * a + i, j] = Ji[j, i] / N
    return Gs


@kernel
def internal_force_projector(p_oes):
    """Projector onto the nullspace of G.T: P = I - G* G.T."""
    N = p_oes.shape[0]
    G = grasp_g(p_oes)
    Gs = grasp_gstar(p_oes)
    P = -(Gs @ G.T.copy())
    for i in range(6 * N):
        P[i, i] += 1.0
    return P


# ---------------------------------------------------------------------------
# tracking errors and velocity references
# ---------------------------------------------------------------------------


@kernel
def tracking_errors(p_o, xi_o, v_o, p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                    k_p, k_eps):
    """Pose/velocity errors and the reference twist pair.

    Returns (e, e_v, v_r, a_r, e_eta, e_eps, e_p, e_w).
    """
    e_p = np.empty(3)
    for i in range(3):
        e_p[i] = p_o[i] - p_d[i]
    e_xi = quat_mul(xi_d, quat_conj(xi_o))
    e_eta = e_xi[0]
    e_eps = np.empty(3)
    e_eps[0] = e_xi[1]
    e_eps[1] = e_xi[2]
    e_eps[2] = e_xi[3]
    e_w = np.empty(3)
    for i in range(3):
        e_w[i] = v_o[3 + i] - w_d[i]
    e = np.empty(6)
    for i in range(3):
        e[i] = e_p[i]
        e[3 + i] = -e_eta * e_eps[i]
    # error rates
    ep_dot = np.empty(3)
    for i in range(3):
        ep_dot[i] = v_o[i] - pd_d[i]
    eta_dot = 0.5 * (e_eps[0] * e_w[0] + e_eps[1] * e_w[1] + e_eps[2] * e_w[2])
    eps_dot = -0.5 * (e_eta * e_w + cross3(e_eps, e_w)) - cross3(e_eps, w_d)
    e_dot = np.empty(6)
    for i in range(3):
        e_dot[i] = ep_dot[i]
        e_dot[3 + i] = -(eta_dot * e_eps[i] + e_eta * eps_dot[i])
    v_r = np.empty(6)
    a_r = np.empty(6)
    for i in range(3):
        v_r[i] = pd_d[i] - k_p * e[i]
        v_r[3 + i] = w_d[i] - k_eps * e[3 + i]
        a_r[i] = pdd_d[i] - k_p * e_dot[i]
        a_r[3 + i] = wd_d[i] - k_eps * e_dot[3 + i]
    e_v = np.empty(6)
    for i in range(6):
        e_v[i] = v_o[i] - v_r[i]
    return e, e_v, v_r, a_r, e_eta, e_eps, e_p, e_w


@kernel
def error_rates(e_eta, e_eps, e_w, w_d):
    """(eta_dot, eps_dot) of the orientation error quaternion."""
    eta_dot = 0.5 * (e_eps[0] * e_w[0] + e_eps[1] * e_w[1] + e_eps[2] * e_w[2])
    eps_dot = -0.5 * (e_eta * e_w + cross3(e_eps, e_w)) - cross3(e_eps, w_d)
    return eta_dot, eps_dot


# ---------------------------------------------------------------------------
# trajectory evaluation
# ---------------------------------------------------------------------------


@kernel
def _spline_eval(breaks, coef, t):
    """Piecewise cubic (scipy layout): value, first and second derivative."""
    nseg = coef.shape[2]
    lo = 0
    hi = nseg - 1
    if t <= breaks[0]:
        seg = 0
    elif t >= breaks[nseg]:
        seg = nseg - 1
    else:
        while hi - lo > 0:
            mid = (lo + hi + 1) // 2
            if breaks[mid] <= t:
                lo = mid
            else:
                hi = mid - 1
        seg = lo
    s = t - breaks[seg]
    val = np.empty(3)
    d1 = np.empty(3)
    d2 = np.empty(3)
    for d in range(3):
        c0 = coef[d, 0, seg]
        c1 = coef[d, 1, seg]
        c2 = coef[d, 2, seg]
        c3 = coef[d, 3, seg]
        val[d] = ((c0 * s + c1) * s + c2) * s + c3
        d1[d] = (3.0 * c0 * s + 2.0 * c1) * s + c2
        d2[d] = 6.0 * c0 * s + 2.0 * c1
    return val, d1, d2


@kernel
def _rotvec_to_quat(phi):
    ang = math.sqrt(phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2])
    q = np.empty(4)
    if ang < 1e-12:
        q[0] = 1.0
        q[1] = 0.5 * phi[0]
        q[2] = 0.5 * phi[1]
        q[3] = 0.5 * phi[2]
        return quat_normalize(q)
    s = math.sin(0.5 * ang) / ang
    q[0] = math.cos(0.5 * ang)
    q[1] = s * phi[0]
    q[2] = s * phi[1]
    q[3] = s * phi[2]
    return q


@kernel
def _rotvec_rate_map(phi):
    """Map rotation-vector rate to world angular velocity (SO(3) left Jacobian)."""
    th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    th = math.sqrt(th2)
    S = skew3(phi)
    S2 = mat3_mul(S, S)
    out = np.zeros((3, 3))
    if th < 1e-8:
        a = 0.5 - th2 / 24.0
        b = 1.0 / 6.0 - th2 / 120.0
    else:
        a = (1.0 - math.cos(th)) / th2
        b = (th - math.sin(th)) / (th2 * th)
    for i in range(3):
        out[i, i] = 1.0
        for j in range(3):
            out[i, j] += a * S[i, j] + b * S2[i, j]
    return out


@kernel
def _table_omega(breaks, coef_r, t):
    phi, phid, _ = _spline_eval(breaks, coef_r, t)
    W = _rotvec_rate_map(phi)
    return rotate3(W, phid)


@kernel
def traj_eval(kind, par, breaks, coef_p, coef_r, t):
    """Desired pose, twist and acceleration at time t.

    Analytic families (hold, per-axis position sinusoid + fixed-axis
    orientation sinusoid) carry exact derivatives; sampled tables use
    natural cubic splines on position and rotation-vector samples, with
    the angular acceleration's curvature term by central differencing of
    the exact rate map (step 1e-6 s).
    """
    p_d = np.zeros(3)
    pd_d = np.zeros(3)
    pdd_d = np.zeros(3)
    xi_d = np.empty(4)
    w_d = np.zeros(3)
    wd_d = np.zeros(3)
    if kind == TRAJ_HOLD:
        for i in range(3):
            p_d[i] = par[i]
        for i in range(4):
            xi_d[i] = par[3 + i]
    elif kind == TRAJ_SINUSOID:
        # layout: p_center(3) p_amp(3) p_period(3) p_phase(3)
        #         axis(3) a_center a_amp a_period a_phase base_quat(4)
        for i in range(3):
            c = par[i]
            A = par[3 + i]
            T = par[6 + i]
            ph = par[9 + i]
            if T > 0.0:
                om = 2.0 * math.pi / T
            else:
                om = 0.0
            arg = om * t + ph
            p_d[i] = c + A * math.sin(arg)
            pd_d[i] = A * om * math.cos(arg)
            pdd_d[i] = -A * om * om * math.sin(arg)
        axis = par[12:15]
        a_c = par[15]
        a_A = par[16]
        a_T = par[17]
        a_ph = par[18]
        if a_T > 0.0:
            om = 2.0 * math.pi / a_T
        else:
            om = 0.0
        arg = om * t + a_ph
        ang = a_c + a_A * math.sin(arg)
        angd = a_A * om * math.cos(arg)
        angdd = -a_A * om * om * math.sin(arg)
        base = par[19:23]
        xi_d = quat_mul(quat_from_axis_angle(axis, ang), np.ascontiguousarray(base))
        for i in range(3):
            w_d[i] = axis[i] * angd
            wd_d[i] = axis[i] * angdd
    else:
        p, p1, p2 = _spline_eval(breaks, coef_p, t)
        for i in range(3):
            p_d[i] = p[i]
            pd_d[i] = p1[i]
            pdd_d[i] = p2[i]
        phi, phid, _ = _spline_eval(breaks, coef_r, t)
        xi_d = _rotvec_to_quat(phi)
        W = _rotvec_rate_map(phi)
        w_d = rotate3(W, phid)
        h = 1e-6
        wp = _table_omega(breaks, coef_r, t + h)
        wm = _table_omega(breaks, coef_r, t - h)
        for i in range(3):
            wd_d[i] = (wp[i] - wm[i]) / (2.0 * h)
    return p_d, pd_d, pdd_d, xi_d, w_d, wd_d


# ---------------------------------------------------------------------------
# decentralized controllers
# ---------------------------------------------------------------------------


@kernel
def object_agent_jacobian_inv_t(p_oe):
    """Transpose of the closed-form transport inverse: [[I, 0], [S(p), I]]."""
    J = np.zeros((6, 6))
    for i in range(6):
        J[i, i] = 1.0
    J[3, 1] = -p_oe[2]
    J[3, 2] = p_oe[1]
    J[4, 0] = p_oe[2]
    J[4, 2] = -p_oe[0]
    J[5, 0] = -p_oe[1]
    J[5, 1] = p_oe[0]
    return J


@kernel
def agent_reconstruct(jt, jax, jR, jp, base_R, base_p, tool_R, tool_p,
                      q, qd, off_p, off_q):
    """Object pose/twist recovered from one agent's own kinematics.

    off_p is the grasp-point offset in object coordinates, off_q the
    constant end-effector orientation offset.  Returns
    (p_o, xi_o, R_o, v_o, p_oe, J, pe, Re).
    """
    z, pj, Rl, ol = chain_frames(jt, jax, jR, jp, base_R, base_p, q)
    Re, pe = chain_ee(Rl, ol, tool_R, tool_p)
    J = chain_jacobian(jt, z, pj, pe)
    v_i = J @ np.ascontiguousarray(qd)
    xi_e = rot_to_quat(Re)
    xi_o = quat_mul(xi_e, quat_conj(off_q))
    R_o = quat_to_rot(xi_o)
    p_o = pe - rotate3(R_o, off_p)
    p_oe = p_o - pe
    v_o = object_agent_jacobian_inv(p_oe) @ v_i
    return p_o, xi_o, R_o, v_o, p_oe, J, pe, Re


@kernel
def internal_force_block(R_o, offs_p, fint_hat, i):
    """Agent i's slice of the nullspace-projected internal force command."""
    N = offs_p.shape[0]
    p_oes = np.empty((N, 3))
    for a in range(N):
        p_oes[a] = -rotate3(R_o, offs_p[a])
    P = internal_force_projector(p_oes)
    f = P @ np.ascontiguousarray(fint_hat)
    out = np.empty(6)
    for k in range(6):
        out[k] = f[6 * i + k]
    return out


@kernel
def control_core_nonadaptive(jt, z, pj, Rl, ol, J, Jd, pe, Re,
                             agent_params, qd, theta_o, grav,
                             offs_p, offs_q, i, k_p, k_eps, k_v, c,
                             p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                             fint_hat, fint_on):
    """Known-model wrench of agent i from a precomputed arm evaluation.

    Everything downstream of the arm kinematics uses only agent-local
    information: the object pose/twist is reconstructed from the agent's
    own end-effector pose and joint rates through the constant offsets.
    """
    v_i = J @ np.ascontiguousarray(qd)
    xi_e = rot_to_quat(Re)
    xi_o = quat_mul(xi_e, quat_conj(offs_q[i]))
    R_o = quat_to_rot(xi_o)
    p_o = pe - rotate3(R_o, offs_p[i])
    p_oe = p_o - pe
    v_o = object_agent_jacobian_inv(p_oe) @ v_i
    e, e_v, v_r, a_r, e_eta, e_eps, e_p, e_w = tracking_errors(
        p_o, xi_o, v_o, p_d, pd_d, pdd_d, xi_d, w_d, wd_d, k_p, k_eps)
    w_o = np.ascontiguousarray(v_o[3:6])
    j_oi = object_agent_jacobian(p_oe)
    j_oi_d = object_agent_jacobian_dot(cross3(w_o, p_oe))
    Mq, Cq, gq = chain_dynamics(jt, z, pj, Rl, ol, agent_params, grav, qd)
    # model-based feedforward expressed through joint-space terms:
    # u_ff = J^-T (g_q + C_q B v_r + M_q (B a_r + J^-1 Jdot_oi v_r
    #                                      - J^-1 Jdot B v_r))
    B = solve6_mat(J, j_oi)
    bv = B @ v_r
    ba = B @ a_r
    t1 = solve6(J, Jd @ bv)
    t2 = solve6(J, j_oi_d @ v_r)
    w_vec = gq + Cq @ bv + Mq @ (ba + t2 - t1)
    u = solve6_t(J, w_vec)
    M_o, C_o, g_o = object_mcg(theta_o, grav, R_o, w_o)
    jinv_t = object_agent_jacobian_inv_t(p_oe)
    u += jinv_t @ (c * (M_o @ a_r + C_o @ v_r + g_o) - (k_v * e_v + c * e))
    if fint_on != 0:
        u += internal_force_block(R_o, offs_p, fint_hat, i)
    return u


@kernel
def control_nonadaptive(jt, jax, jR, jp, base_R, base_p, tool_R, tool_p,
                        agent_params, q, qd, theta_o, grav,
                        offs_p, offs_q, i, k_p, k_eps, k_v, c,
                        p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                        fint_hat, fint_on):
    """Known-model wrench of agent i from its own measurements only."""
    z, pj, Rl, ol = chain_frames(jt, jax, jR, jp, base_R, base_p, q)
    Re, pe = chain_ee(Rl, ol, tool_R, tool_p)
    J = chain_jacobian(jt, z, pj, pe)
    Jd = chain_jacobian_dot(jt, z, pj, pe, qd)
    return control_core_nonadaptive(
        jt, z, pj, Rl, ol, J, Jd, pe, Re, agent_params, qd, theta_o, grav,
        offs_p, offs_q, i, k_p, k_eps, k_v, c,
        p_d, pd_d, pdd_d, xi_d, w_d, wd_d, fint_hat, fint_on)


@kernel
def control_core_adaptive(jt, z, pj, Rl, ol, J, Jd, pe, Re,
                          qd, grav, offs_p, offs_q, i,
                          k_p, k_eps, k_v, c, gamma_i,
                          p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                          th_hat, thO_hat, plink, pcomp,
                          fint_hat, fint_on):
    """Certainty-equivalence wrench plus estimate rates for agent i.

    Regressors are evaluated at the reference twist pair, never at
    measured accelerations.  Returns (u, dth_hat, dthO_hat).
    """
    v_i = J @ np.ascontiguousarray(qd)
    xi_e = rot_to_quat(Re)
    xi_o = quat_mul(xi_e, quat_conj(offs_q[i]))
    R_o = quat_to_rot(xi_o)
    p_o = pe - rotate3(R_o, offs_p[i])
    p_oe = p_o - pe
    v_o = object_agent_jacobian_inv(p_oe) @ v_i
    e, e_v, v_r, a_r, e_eta, e_eps, e_p, e_w = tracking_errors(
        p_o, xi_o, v_o, p_d, pd_d, pdd_d, xi_d, w_d, wd_d, k_p, k_eps)
    w_o = np.ascontiguousarray(v_o[3:6])
    j_oi = object_agent_jacobian(p_oe)
    j_oi_d = object_agent_jacobian_dot(cross3(w_o, p_oe))
    Y = agent_regressor_ws(jt, z, pj, Rl, ol, J, Jd, grav, qd, v_r, a_r,
                           j_oi, j_oi_d, plink, pcomp)
    Y_o = object_regressor(grav, R_o, w_o, v_r, a_r)
    jinv_t = object_agent_jacobian_inv_t(p_oe)
    u = jinv_t @ (Y @ np.ascontiguousarray(th_hat)
                  + c * (Y_o @ np.ascontiguousarray(thO_hat))
                  - c * e - k_v * e_v)
    if fint_on != 0:
        u += internal_force_block(R_o, offs_p, fint_hat, i)
    dth = -gamma_i * (Y.T.copy() @ e_v)
    dthO = -c * (Y_o.T.copy() @ e_v)
    return u, dth, dthO


@kernel
def control_adaptive(jt, jax, jR, jp, base_R, base_p, tool_R, tool_p,
                     q, qd, grav, offs_p, offs_q, i,
                     k_p, k_eps, k_v, c, gamma_i,
                     p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                     th_hat, thO_hat, plink, pcomp,
                     fint_hat, fint_on):
    """Adaptive wrench and estimate rates from the agent's own state."""
    z, pj, Rl, ol = chain_frames(jt, jax, jR, jp, base_R, base_p, q)
    Re, pe = chain_ee(Rl, ol, tool_R, tool_p)
    J = chain_jacobian(jt, z, pj, pe)
    Jd = chain_jacobian_dot(jt, z, pj, pe, qd)
    return control_core_adaptive(
        jt, z, pj, Rl, ol, J, Jd, pe, Re, qd, grav, offs_p, offs_q, i,
        k_p, k_eps, k_v, c, gamma_i, p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
        th_hat, thO_hat, plink, pcomp, fint_hat, fint_on)


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------


@kernel
def closed_loop_rate(t, y,
                     A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep,
                     A_toolR, A_toolp, A_params,
                     theta_off, plink, pcomp,
                     offs_p, offs_q, theta_o, theta_o_ctrl, grav,
                     k_p, k_eps, kv, c, gamma,
                     traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
                     mode, fint_hat, fint_on,
                     u_hold, dth_hold, dthO_hold, use_hold):
    """State derivative of the coupled object-agents loop.

    State layout: [p_O(3), xi_O(4), v_O(6), q(6N), th_hat(L), thO_hat(7N)];
    the estimate tail is present only in adaptive mode.  Returns
    (ydot, u (N,6), dth (L,), dthO (7N,)).
    """
    N = A_jt.shape[0]
    Lt = plink.shape[0]
    p_o = y[0:3]
    xi = y[3:7]
    v_o = np.ascontiguousarray(y[7:13])
    R_o = quat_to_rot(xi)
    w_o = np.ascontiguousarray(v_o[3:6])

    p_d, pd_d, pdd_d, xi_d, w_d, wd_d = traj_eval(
        traj_kind, traj_par, traj_breaks, traj_cp, traj_cr, t)

    ydot = np.zeros_like(y)
    u = np.empty((N, 6))
    dth = np.zeros(Lt)
    dthO = np.zeros(7 * N)

    M_t = np.zeros((6, 6))
    M_o, C_o, g_o = object_mcg(theta_o, grav, R_o, w_o)
    M_t += M_o
    # rhs accumulates G.T u - C_t v_o - g_t
    rhs = -(C_o @ v_o) - g_o

    for i in range(N):
        q_i = np.ascontiguousarray(y[13 + 6 * i:13 + 6 * i + 6])
        p_oe = -rotate3(R_o, offs_p[i])
        j_oi = object_agent_jacobian(p_oe)
        j_oi_d = object_agent_jacobian_dot(cross3(w_o, p_oe))
        z, pj, Rl, ol = chain_frames(A_jt[i], A_jax[i], A_jR[i], A_jp[i],
                                     A_baseR[i], A_basep[i], q_i)
        Re, pe = chain_ee(Rl, ol, A_toolR[i], A_toolp[i])
        J_i = chain_jacobian(A_jt[i], z, pj, pe)
        qd_i = solve6(J_i, j_oi @ v_o)
        Jd_i = chain_jacobian_dot(A_jt[i], z, pj, pe, qd_i)
        # control
        if use_hold != 0:
            u_i = u_hold[i].copy()
        elif mode == MODE_NONADAPTIVE:
            u_i = control_core_nonadaptive(
                A_jt[i], z, pj, Rl, ol, J_i, Jd_i, pe, Re,
                A_params[i], qd_i, theta_o_ctrl, grav, offs_p, offs_q, i,
                k_p, k_eps, kv[i], c[i],
                p_d, pd_d, pdd_d, xi_d, w_d, wd_d, fint_hat, fint_on)
        elif mode == MODE_ADAPTIVE:
            lo = theta_off[i]
            hi = theta_off[i + 1]
            th_i = np.ascontiguousarray(y[13 + 6 * N + lo:13 + 6 * N + hi])
            thO_i = np.ascontiguousarray(
                y[13 + 6 * N + Lt + 7 * i:13 + 6 * N + Lt + 7 * i + 7])
            u_i, dth_i, dthO_i = control_core_adaptive(
                A_jt[i], z, pj, Rl, ol, J_i, Jd_i, pe, Re,
                qd_i, grav, offs_p, offs_q, i,
                k_p, k_eps, kv[i], c[i], gamma[i],
                p_d, pd_d, pdd_d, xi_d, w_d, wd_d,
                th_i, thO_i, plink[lo:hi], pcomp[lo:hi], fint_hat, fint_on)
            for b in range(hi - lo):
                dth[lo + b] = dth_i[b]
            for b in range(7):
                dthO[7 * i + b] = dthO_i[b]
        else:
            u_i = np.zeros(6)
        u[i] = u_i
        # plant side, in joint-space form with B = J^-1 J_oi (true params):
        #   M_t += B.T M_q B
        #   (C_t v_o)_i = B.T (C_q B v_o + M_q (J^-1 Jdot_oi v_o
        #                                        - J^-1 Jdot B v_o))
        Mq, Cq, gq = chain_dynamics(A_jt[i], z, pj, Rl, ol, A_params[i],
                                    grav, qd_i)
        B = solve6_mat(J_i, j_oi)
        BT = B.T.copy()
        M_t += BT @ (Mq @ B)
        bv = B @ v_o
        t1 = solve6(J_i, Jd_i @ bv)
        t2 = solve6(J_i, j_oi_d @ v_o)
        cw = Cq @ bv + Mq @ (t2 - t1)
        rhs -= BT @ (cw + gq)
        rhs += j_oi.T.copy() @ u_i
        for k in range(6):
            ydot[13 + 6 * i + k] = qd_i[k]

    if use_hold != 0 and mode == MODE_ADAPTIVE:
        for b in range(Lt):
            dth[b] = dth_hold[b]
        for b in range(7 * N):
            dthO[b] = dthO_hold[b]

    vdot = solve6(M_t, rhs)
    qrate = quat_rate(xi, w_o)
    for k in range(3):
        ydot[k] = v_o[k]
    for k in range(4):
        ydot[3 + k] = qrate[k]
    for k in range(6):
        ydot[7 + k] = vdot[k]
    if mode == MODE_ADAPTIVE:
        for b in range(Lt):
            ydot[13 + 6 * N + b] = dth[b]
        for b in range(7 * N):
            ydot[13 + 6 * N + Lt + b] = dthO[b]
    return ydot, u, dth, dthO


@kernel
def loop_diagnostics(t, y,
                     A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep,
                     A_toolR, A_toolp, A_params,
                     theta_off, plink, pcomp, theta_true,
                     offs_p, offs_q, theta_o, theta_o_ctrl, grav,
                     k_p, k_eps, kv, c, gamma,
                     traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
                     mode, fint_hat, fint_on):
    """Everything one logged trace row needs, evaluated at (t, y)."""
    N = A_jt.shape[0]
    Lt = plink.shape[0]
    dummy_u = np.zeros((N, 6))
    dummy_dth = np.zeros(Lt)
    dummy_dthO = np.zeros(7 * N)
    ydot, u, dth, dthO = closed_loop_rate(
        t, y, A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep, A_toolR, A_toolp,
        A_params, theta_off, plink, pcomp, offs_p, offs_q, theta_o,
        theta_o_ctrl, grav, k_p, k_eps, kv, c, gamma,
        traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
        mode, fint_hat, fint_on, dummy_u, dummy_dth, dummy_dthO, 0)
    p_o = y[0:3]
    xi = np.ascontiguousarray(y[3:7])
    v_o = np.ascontiguousarray(y[7:13])
    vdot_o = np.ascontiguousarray(ydot[7:13])
    R_o = quat_to_rot(xi)
    w_o = np.ascontiguousarray(v_o[3:6])

    p_d, pd_d, pdd_d, xi_d, w_d, wd_d = traj_eval(
        traj_kind, traj_par, traj_breaks, traj_cp, traj_cr, t)
    e, e_v, v_r, a_r, e_eta, e_eps, e_p, e_w = tracking_errors(
        p_o, xi, v_o, p_d, pd_d, pdd_d, xi_d, w_d, wd_d, k_p, k_eps)

    M_t = np.zeros((6, 6))
    M_o, C_o, g_o = object_mcg(theta_o, grav, R_o, w_o)
    M_t += M_o
    tau = np.empty((N, 6))
    f = np.empty((N, 6))
    f_flat = np.empty(6 * N)
    p_oes = np.empty((N, 3))
    drift_p = 0.0
    drift_r = 0.0
    cond_max = 0.0
    for i in range(N):
        q_i = np.ascontiguousarray(y[13 + 6 * i:13 + 6 * i + 6])
        p_oe = -rotate3(R_o, offs_p[i])
        p_oes[i] = p_oe
        j_oi = object_agent_jacobian(p_oe)
        j_oi_d = object_agent_jacobian_dot(cross3(w_o, p_oe))
        z, pj, Rl, ol = chain_frames(A_jt[i], A_jax[i], A_jR[i], A_jp[i],
                                     A_baseR[i], A_basep[i], q_i)
        Re, pe = chain_ee(Rl, ol, A_toolR[i], A_toolp[i])
        J_i = chain_jacobian(A_jt[i], z, pj, pe)
        s = np.linalg.svd(J_i)[1]
        cond_i = s[0] / s[5] if s[5] > 0.0 else 1e300
        if cond_i > cond_max:
            cond_max = cond_i
        qd_i = solve6(J_i, j_oi @ v_o)
        Jd_i = chain_jacobian_dot(A_jt[i], z, pj, pe, qd_i)
        M, C, g = chain_dynamics(A_jt[i], z, pj, Rl, ol, A_params[i], grav, qd_i)
        Mi, Ci, gi = task_dynamics_from_joint(M, C, g, J_i, Jd_i)
        jT = j_oi.T.copy()
        M_t += jT @ (Mi @ j_oi)
        tau[i] = J_i.T.copy() @ u[i]
        v_i = j_oi @ v_o
        vdot_i = j_oi_d @ v_o + j_oi @ vdot_o
        f[i] = u[i] - Mi @ vdot_i - Ci @ v_i - gi
        for k in range(6):
            f_flat[6 * i + k] = f[i, k]
        # rigidity drift: object pose implied by this agent's kinematics
        xi_e = rot_to_quat(Re)
        xi_oi = quat_mul(xi_e, quat_conj(offs_q[i]))
        p_oi = pe - rotate3(quat_to_rot(xi_oi), offs_p[i])
        dp = math.sqrt((p_oi[0] - p_o[0]) ** 2 + (p_oi[1] - p_o[1]) ** 2
                       + (p_oi[2] - p_o[2]) ** 2)
        dr = quat_geodesic(xi_oi, xi)
        if dp > drift_p:
            drift_p = dp
        if dr > drift_r:
            drift_r = dr

    V = 0.0
    for k in range(3):
        V += 0.5 * e_p[k] * e_p[k]
    V += 1.0 - e_eta * e_eta
    MV = M_t @ e_v
    for k in range(6):
        V += 0.5 * e_v[k] * MV[k]
    V_ad = V
    if mode == MODE_ADAPTIVE:
        for i in range(N):
            lo = theta_off[i]
            hi = theta_off[i + 1]
            for b in range(lo, hi):
                err_b = theta_true[b] - y[13 + 6 * N + b]
                V_ad += 0.5 * err_b * err_b / gamma[i]
            for b in range(7):
                err_b = theta_o[b] - y[13 + 6 * N + Lt + 7 * i + b]
                V_ad += 0.5 * err_b * err_b

    P = internal_force_projector(p_oes)
    pf = P @ f_flat
    pf_norm = math.sqrt(np.sum(pf * pf))
    fint = P @ np.ascontiguousarray(fint_hat)
    fint_norm = math.sqrt(np.sum(fint * fint))
    G = grasp_g(p_oes)
    gtf = G.T.copy() @ fint
    gtf_norm = math.sqrt(np.sum(gtf * gtf))

    return (u, tau, f, e_p, e_eta, e_eps, e_v, V, V_ad,
            pf_norm, fint_norm, gtf_norm, drift_p, drift_r, cond_max)


@kernel
def rk4_closed_loop_step(t, y, dt,
                         A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep,
                         A_toolR, A_toolp, A_params,
                         theta_off, plink, pcomp,
                         offs_p, offs_q, theta_o, theta_o_ctrl, grav,
                         k_p, k_eps, kv, c, gamma,
                         traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
                         mode, fint_hat, fint_on, zoh):
    """One classical RK4 step; the attitude quaternion is renormalized."""
    N = A_jt.shape[0]
    Lt = plink.shape[0]
    no_u = np.zeros((N, 6))
    no_dth = np.zeros(Lt)
    no_dthO = np.zeros(7 * N)
    k1, u1, dth1, dthO1 = closed_loop_rate(
        t, y, A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep, A_toolR, A_toolp,
        A_params, theta_off, plink, pcomp, offs_p, offs_q, theta_o,
        theta_o_ctrl, grav, k_p, k_eps, kv, c, gamma,
        traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
        mode, fint_hat, fint_on, no_u, no_dth, no_dthO, 0)
    hold = 1 if zoh != 0 else 0
    k2, u2, a2, b2 = closed_loop_rate(
        t + 0.5 * dt, y + 0.5 * dt * k1, A_jt, A_jax, A_jR, A_jp, A_baseR,
        A_basep, A_toolR, A_toolp, A_params, theta_off, plink, pcomp,
        offs_p, offs_q, theta_o, theta_o_ctrl, grav, k_p, k_eps, kv, c,
        gamma, traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
        mode, fint_hat, fint_on, u1, dth1, dthO1, hold)
    k3, u3, a3, b3 = closed_loop_rate(
        t + 0.5 * dt, y + 0.5 * dt * k2, A_jt, A_jax, A_jR, A_jp, A_baseR,
        A_basep, A_toolR, A_toolp, A_params, theta_off, plink, pcomp,
        offs_p, offs_q, theta_o, theta_o_ctrl, grav, k_p, k_eps, kv, c,
        gamma, traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
        mode, fint_hat, fint_on, u1, dth1, dthO1, hold)
    k4, u4, a4, b4 = closed_loop_rate(
        t + dt, y + dt * k3, A_jt, A_jax, A_jR, A_jp, A_baseR,
        A_basep, A_toolR, A_toolp, A_params, theta_off, plink, pcomp,
        offs_p, offs_q, theta_o, theta_o_ctrl, grav, k_p, k_eps, kv, c,
        gamma, traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
        mode, fint_hat, fint_on, u1, dth1, dthO1, hold)
    y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    xi = quat_normalize(np.ascontiguousarray(y_new[3:7]))
    for k in range(4):
        y_new[3 + k] = xi[k]
    return y_new


@kernel
def simulate(A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep,
             A_toolR, A_toolp, A_params,
             theta_off, plink, pcomp, theta_true,
             offs_p, offs_q, theta_o, theta_o_ctrl, grav,
             k_p, k_eps, kv, c, gamma,
             traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
             mode, fint_hat, fint_on, zoh,
             y0, dt, n_steps, log_every, v_max, cond_limit):
    """Fixed-step closed-loop run with in-loop trace logging.

    Returns (status, n_logged, t, p, quat, v, e_p, e_eta, e_eps, e_v,
    u, tau, f, V, V_ad, pf_norm, fint_cmd_norm, gtf_norm, drift_p,
    drift_r, th_hat, thO_hat).
    """
    N = A_jt.shape[0]
    Lt = plink.shape[0]
    n_logs = n_steps // log_every + 1
    tr_t = np.zeros(n_logs)
    tr_p = np.zeros((n_logs, 3))
    tr_q = np.zeros((n_logs, 4))
    tr_v = np.zeros((n_logs, 6))
    tr_ep = np.zeros((n_logs, 3))
    tr_eeta = np.zeros(n_logs)
    tr_eeps = np.zeros((n_logs, 3))
    tr_ev = np.zeros((n_logs, 6))
    tr_u = np.zeros((n_logs, N, 6))
    tr_tau = np.zeros((n_logs, N, 6))
    tr_f = np.zeros((n_logs, N, 6))
    tr_V = np.zeros(n_logs)
    tr_Vad = np.zeros(n_logs)
    tr_pf = np.zeros(n_logs)
    tr_fc = np.zeros(n_logs)
    tr_gtf = np.zeros(n_logs)
    tr_dp = np.zeros(n_logs)
    tr_dr = np.zeros(n_logs)
    tr_th = np.zeros((n_logs, max(Lt, 1)))
    tr_thO = np.zeros((n_logs, 7 * N))

    y = y0.copy()
    t = 0.0
    status = STATUS_OK
    row = 0
    for step in range(n_steps + 1):
        if step % log_every == 0:
            (u, tau, f, e_p, e_eta, e_eps, e_v, V, V_ad, pf_norm,
             fint_norm, gtf_norm, drift_p, drift_r, cond_max) = loop_diagnostics(
                t, y, A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep, A_toolR,
                A_toolp, A_params, theta_off, plink, pcomp, theta_true,
                offs_p, offs_q, theta_o, theta_o_ctrl, grav, k_p, k_eps,
                kv, c, gamma, traj_kind, traj_par, traj_breaks, traj_cp,
                traj_cr, mode, fint_hat, fint_on)
            tr_t[row] = t
            tr_p[row] = y[0:3]
            tr_q[row] = y[3:7]
            tr_v[row] = y[7:13]
            tr_ep[row] = e_p
            tr_eeta[row] = e_eta
            tr_eeps[row] = e_eps
            tr_ev[row] = e_v
            tr_u[row] = u
            tr_tau[row] = tau
            tr_f[row] = f
            tr_V[row] = V
            tr_Vad[row] = V_ad
            tr_pf[row] = pf_norm
            tr_fc[row] = fint_norm
            tr_gtf[row] = gtf_norm
            tr_dp[row] = drift_p
            tr_dr[row] = drift_r
            if mode == MODE_ADAPTIVE:
                for b in range(Lt):
                    tr_th[row, b] = y[13 + 6 * N + b]
                for b in range(7 * N):
                    tr_thO[row, b] = y[13 + 6 * N + Lt + b]
            row += 1
            if cond_max > cond_limit:
                status = STATUS_SINGULAR
                break
        if step == n_steps:
            break
        y = rk4_closed_loop_step(
            t, y, dt, A_jt, A_jax, A_jR, A_jp, A_baseR, A_basep, A_toolR,
            A_toolp, A_params, theta_off, plink, pcomp, offs_p, offs_q,
            theta_o, theta_o_ctrl, grav, k_p, k_eps, kv, c, gamma,
            traj_kind, traj_par, traj_breaks, traj_cp, traj_cr,
            mode, fint_hat, fint_on, zoh)
        t = (step + 1) * dt
        ok = True
        vn = 0.0
        for k in range(y.shape[0]):
            if not np.isfinite(y[k]):
                ok = False
        for k in range(6):
            vn += y[7 + k] * y[7 + k]
        if (not ok) or math.sqrt(vn) > v_max:
            status = STATUS_DIVERGED
            break
    return (status, row, tr_t, tr_p, tr_q, tr_v, tr_ep, tr_eeta, tr_eeps,
            tr_ev, tr_u, tr_tau, tr_f, tr_V, tr_Vad, tr_pf, tr_fc, tr_gtf,
            tr_dp, tr_dr, tr_th, tr_thO)
