"""Compiled numerical kernels shared by the geodesy, mechanization and filter modules.

Everything here operates on plain float64 arrays so it can be compiled with
numba. The public, typed entry points live in :mod:`wheelgins.geo`,
:mod:`wheelgins.mech` and :mod:`wheelgins.eskf`.

The earth model is passed around as a 6-vector
``E = (a, f, omega_e, gamma_equator, gamma_pole, m)`` where ``m`` is the
ratio omega_e**2 a**2 b / GM used by the free-air correction.
"""

import numpy as np
from numba import njit

jit = njit(cache=True)

# Error-state layout (kept in sync with wheelgins.state).
I_P, I_V, I_PHI, I_BG, I_BA, I_SG, I_SA, I_LW, I_PHIM, I_SR = 0, 3, 6, 9, 12, 15, 18, 21, 23, 25
NDIM = 26


@jit
def skew(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@jit
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jit
def exp_so3(v):
    th2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    K = skew(v)
    if th2 < 1e-16:
        # series to third order; exact to machine precision here
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        th = np.sqrt(th2)
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    return np.eye(3) + a * K + b * (K @ K)


@jit
def log_so3(R):
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    c = min(1.0, max(-1.0, c))
    th = np.arccos(c)
    w = np.empty(3)
    w[0] = R[2, 1] - R[1, 2]
    w[1] = R[0, 2] - R[2, 0]
    w[2] = R[1, 0] - R[0, 1]
    if th < 1e-7:
        return 0.5 * w
    if np.pi - th < 1e-6:
        # near pi: axis from the symmetric part
        B = 0.5 * (R + R.T) - c * np.eye(3)
        k = 0
        for i in range(3):
            if B[i, i] > B[k, k]:
                k = i
        axis = B[:, k] / np.sqrt(B[k, k])
        if axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2] < 0.0:
            axis = -axis
        return th * axis
    return th / (2.0 * np.sin(th)) * w


@jit
def orthonormalize(R):
    # one Newton step of the polar decomposition: R (R^T R)^(-1/2)
    return 0.5 * R @ (3.0 * np.eye(3) - R.T @ R)


@jit
def radii(lat, E):
    a = E[0]
    f = E[1]
    e2 = f * (2.0 - f)
    s = np.sin(lat)
    w = 1.0 - e2 * s * s
    rn = a / np.sqrt(w)
    rm = a * (1.0 - e2) / (w * np.sqrt(w))
    return rm, rn


@jit
def gravity(lat, h, E):
    """Normal gravity and its partials (d/dlat, d/dh)."""
    a = E[0]
    f = E[1]
    ge = E[3]
    gp = E[4]
    m = E[5]
    e2 = f * (2.0 - f)
    b = a * (1.0 - f)
    k = b * gp / (a * ge) - 1.0
    s2 = np.sin(lat) ** 2
    ds2 = np.sin(2.0 * lat)
    w = 1.0 - e2 * s2
    g0 = ge * (1.0 + k * s2) / np.sqrt(w)
    dg0 = ge * (k * ds2 / np.sqrt(w) + (1.0 + k * s2) * 0.5 * e2 * ds2 / (w * np.sqrt(w)))
    c = 2.0 / a * (1.0 + f + m - 2.0 * f * s2)
    fa = 1.0 - c * h
    g = g0 * fa
    dg_dlat = dg0 * fa + g0 * (4.0 * f / a * ds2) * h
    dg_dh = -g0 * c
    return g, dg_dlat, dg_dh


@jit
def earth_rates(pos, vel, E):
    lat = pos[0]
    h = pos[2]
    rm, rn = radii(lat, E)
    we = E[2]
    wie = np.empty(3)
    wie[0] = we * np.cos(lat)
    wie[1] = 0.0
    wie[2] = -we * np.sin(lat)
    wen = np.empty(3)
    wen[0] = vel[1] / (rn + h)
    wen[1] = -vel[0] / (rm + h)
    wen[2] = -vel[1] * np.tan(lat) / (rn + h)
    return wie, wen, rm, rn


@jit
def nav_derivative(pos, vel, R, w, f, E):
    """Continuous-time strapdown equations in NED with geodetic position."""
    wie, wen, rm, rn = earth_rates(pos, vel, E)
    g, _, _ = gravity(pos[0], pos[2], E)
    h = pos[2]
    dpos = np.empty(3)
    dpos[0] = vel[0] / (rm + h)
    dpos[1] = vel[1] / ((rn + h) * np.cos(pos[0]))
    dpos[2] = -vel[2]
    dvel = R @ f - cross(2.0 * wie + wen, vel)
    dvel[2] += g
    dR = R @ skew(w) - skew(wie + wen) @ R
    return dpos, dvel, dR


@jit
def rotation_increment(W, m, dt):
    """Body rotation vector over the last interval of an evenly spaced rate history.

    ``W`` holds up to four rate samples, oldest first, and the last ``m``
    (2 to 4) of them are used. The rate is modelled by the interpolating
    polynomial through those samples and the rotation vector follows from
    the first two terms of the Bortz equation integrated exactly. ``m = 2``
    is the classic two-sample coning form; ``m = 4`` (cubic) keeps the
    rectified drift of a spinning, turning wheel at the 1e-9 rad/s level.
    """
    n = W.shape[0]
    V = np.empty((m, m))
    Y = np.empty((m, 3))
    for r in range(m):
        tau = (r - (m - 2)) * dt
        p = 1.0
        for c in range(m):
            V[r, c] = p
            p *= tau
        Y[r] = W[n - m + r]
    C = np.linalg.solve(V, Y)
    T = dt
    alpha = np.zeros(3)
    con = np.zeros(3)
    for i in range(m):
        alpha += C[i] * (T ** (i + 1) / (i + 1))
        for j in range(m):
            if i != j:
                con += cross(C[i], C[j]) * (T ** (i + j + 2) / ((i + 1) * (i + j + 2)))
    return alpha + 0.5 * con


@jit
def mech_step(pos, vel, R, W, m, f1, f2, dt, E):
    """One strapdown step over the last interval of the rate history ``W``.

    ``f1``/``f2`` are the specific forces at the interval ends; all samples
    are compensated.
    """
    dth = rotation_increment(W, m, dt)

    # mid-interval earth quantities from a first predictor pass
    wie, wen, rm, rn = earth_rates(pos, vel, E)
    g, _, _ = gravity(pos[0], pos[2], E)
    a1 = R @ f1
    zeta = (wie + wen) * dt
    R2 = exp_so3(-zeta) @ R @ exp_so3(dth)
    a2 = R2 @ f2
    dv_sf = 0.5 * (a1 + a2) * dt
    grav = np.zeros(3)
    grav[2] = g
    v_pred = vel + dv_sf + (grav - cross(2.0 * wie + wen, vel)) * dt
    h = pos[2]
    p_pred = np.empty(3)
    vm = 0.5 * (vel + v_pred)
    p_pred[0] = pos[0] + vm[0] / (rm + h) * dt
    p_pred[1] = pos[1] + vm[1] / ((rn + h) * np.cos(pos[0])) * dt
    p_pred[2] = pos[2] - vm[2] * dt

    pmid = 0.5 * (pos + p_pred)
    wie_m, wen_m, rm_m, rn_m = earth_rates(pmid, vm, E)
    g_m, _, _ = gravity(pmid[0], pmid[2], E)

    zeta = (wie_m + wen_m) * dt
    R2 = orthonormalize(exp_so3(-zeta) @ R @ exp_so3(dth))
    a2 = R2 @ f2
    dv_sf = 0.5 * (a1 + a2) * dt
    grav[2] = g_m
    v2 = vel + dv_sf + (grav - cross(2.0 * wie_m + wen_m, vm)) * dt

    vm = 0.5 * (vel + v2)
    hm = pmid[2]
    p2 = np.empty(3)
    p2[0] = pos[0] + vm[0] / (rm_m + hm) * dt
    p2[1] = pos[1] + vm[1] / ((rn_m + hm) * np.cos(pmid[0])) * dt
    p2[2] = pos[2] - vm[2] * dt
    return p2, v2, R2


@jit
def history_order(t, k, start):
    """Number of evenly spaced samples (2..4) ending at index ``k``, not before ``start``."""
    dt = t[k] - t[k - 1]
    tol = 1e-9 * max(1.0, dt)
    m = 2
    while m < 4 and k - m >= start and abs((t[k - m + 1] - t[k - m]) - dt) <= tol:
        m += 1
    return m


@jit
def run_ins(t, gyro, accel, pos0, vel0, R0, E, start, stop):
    n = stop - start
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    att = np.empty((n, 3, 3))
    pos[0] = pos0
    vel[0] = vel0
    att[0] = R0
    p = pos0.copy()
    v = vel0.copy()
    R = R0.copy()
    W = np.zeros((4, 3))
    for k in range(start + 1, stop):
        dt = t[k] - t[k - 1]
        m = history_order(t, k, start)
        for r in range(m):
            W[4 - m + r] = gyro[k - m + 1 + r]
        p, v, R = mech_step(p, v, R, W, m, accel[k - 1], accel[k], dt, E)
        pos[k - start] = p
        vel[k - start] = v
        att[k - start] = R
    return pos, vel, att


@jit
def build_F(pos, vel, R, w, f, sg, sa, taus, E):
    """Continuous-time error dynamics matrix of the 26-state filter.

    ``w`` and ``f`` are compensated body rate and specific force, ``sg``/``sa``
    the current scale-factor estimates, ``taus`` the four Gauss-Markov
    correlation times (b_g, b_a, s_g, s_a).
    """
    F = np.zeros((NDIM, NDIM))
    lat = pos[0]
    h = pos[2]
    vn = vel[0]
    ve = vel[1]
    vd = vel[2]
    rm, rn = radii(lat, E)
    g, dg_dlat, dg_dh = gravity(lat, h, E)
    we = E[2]
    rmh = rm + h
    rnh = rn + h
    sl = np.sin(lat)
    cl = np.cos(lat)
    tl = sl / cl
    wie, wen, _, _ = earth_rates(pos, vel, E)
    win = wie + wen

    # position rows
    F[0, 0] = -vd / rmh
    F[0, 2] = vn / rmh
    F[1, 0] = ve * tl / rnh
    F[1, 1] = -(vd + vn * tl) / rnh
    F[1, 2] = ve / rnh
    F[0, 3] = 1.0
    F[1, 4] = 1.0
    F[2, 5] = 1.0

    # velocity rows
    F[3, 0] = -2.0 * ve * we * cl / rmh - ve * ve / (rmh * rnh * cl * cl)
    F[3, 2] = vn * vd / (rmh * rmh) - ve * ve * tl / (rnh * rnh)
    F[4, 0] = 2.0 * we * (vn * cl - vd * sl) / rmh + vn * ve / (rmh * rnh * cl * cl)
    F[4, 2] = (ve * vd + vn * ve * tl) / (rnh * rnh)
    F[5, 0] = 2.0 * we * ve * sl / rmh + dg_dlat / rmh
    F[5, 2] = -ve * ve / (rnh * rnh) - vn * vn / (rmh * rmh) - dg_dh
    F[3, 3] = vd / rmh
    F[3, 4] = -2.0 * (we * sl + ve * tl / rnh)
    F[3, 5] = vn / rmh
    F[4, 3] = 2.0 * we * sl + ve * tl / rnh
    F[4, 4] = (vd + vn * tl) / rnh
    F[4, 5] = 2.0 * we * cl + ve / rnh
    F[5, 3] = -2.0 * vn / rmh
    F[5, 4] = -2.0 * (we * cl + ve / rnh)
    F[3:6, 6:9] = skew(R @ f)
    da = 1.0 / (1.0 + sa)
    dg = 1.0 / (1.0 + sg)
    for j in range(3):
        F[3:6, I_BA + j] = R[:, j] * da[j]
        F[3:6, I_SA + j] = R[:, j] * da[j] * f[j]

    # attitude rows
    F[6, 0] = -we * sl / rmh
    F[6, 2] = ve / (rnh * rnh)
    F[7, 2] = -vn / (rmh * rmh)
    F[8, 0] = -we * cl / rmh - ve / (rmh * rnh * cl * cl)
    F[8, 2] = -ve * tl / (rnh * rnh)
    F[6, 4] = 1.0 / rnh
    F[7, 3] = -1.0 / rmh
    F[8, 4] = -tl / rnh
    F[6:9, 6:9] = -skew(win)
    for j in range(3):
        F[6:9, I_BG + j] = -R[:, j] * dg[j]
        F[6:9, I_SG + j] = -R[:, j] * dg[j] * w[j]

    # Gauss-Markov sensor errors
    for j in range(3):
        F[I_BG + j, I_BG + j] = -1.0 / taus[0]
        F[I_BA + j, I_BA + j] = -1.0 / taus[1]
        F[I_SG + j, I_SG + j] = -1.0 / taus[2]
        F[I_SA + j, I_SA + j] = -1.0 / taus[3]
    return F


@jit
def cov_step(P, F, qc, dt):
    """P <- Phi P Phi^T + Qd with Phi = I + F dt and trapezoidal Qd.

    ``qc`` is the diagonal of the continuous driving-noise covariance G Q G^T.
    """
    Phi = np.eye(NDIM) + F * dt
    PhiQ = Phi * qc  # scales columns
    Qd = 0.5 * (PhiQ @ Phi.T) * dt
    for i in range(NDIM):
        Qd[i, i] += 0.5 * qc[i] * dt
    Pn = Phi @ P @ Phi.T + Qd
    return 0.5 * (Pn + Pn.T)


@jit
def propagate_span(t, gyro, accel, k0, k1, hist0, pos, vel, R, P, bg, ba, sg, sa, taus, qc, E, check_psd):
    """Run mechanization and covariance propagation from IMU index ``k0`` to ``k1``.

    Raw samples are compensated with the (constant over the span) error
    estimates. ``hist0`` is the first index usable as attitude history. With
    ``check_psd`` the smallest eigenvalue of P relative to its trace is
    tracked and returned (otherwise, or for an empty span, the return is inf).
    """
    dg = 1.0 / (1.0 + sg)
    da = 1.0 / (1.0 + sa)
    W = np.zeros((4, 3))
    worst = np.inf
    for k in range(k0 + 1, k1 + 1):
        dt = t[k] - t[k - 1]
        m = history_order(t, k, hist0)
        for r in range(m):
            W[4 - m + r] = (gyro[k - m + 1 + r] - bg) * dg
        f1 = (accel[k - 1] - ba) * da
        f2 = (accel[k] - ba) * da
        pos, vel, R = mech_step(pos, vel, R, W, m, f1, f2, dt, E)
        F = build_F(pos, vel, R, W[3], f2, sg, sa, taus, E)
        P = cov_step(P, F, qc, dt)
        if check_psd:
            ev = np.linalg.eigvalsh(P)
            tr = 0.0
            for i in range(NDIM):
                tr += P[i, i]
            r = ev[0] / tr
            if r < worst:
                worst = r
    return pos, vel, R, P, worst


@jit
def specific_force_and_rate(att, pos, vel, acc, w_nb, E):
    """Ideal IMU outputs from IMU-point kinematics (NED acceleration ``acc``)."""
    n = att.shape[0]
    gyro = np.empty((n, 3))
    accel = np.empty((n, 3))
    for k in range(n):
        wie, wen, _, _ = earth_rates(pos[k], vel[k], E)
        g, _, _ = gravity(pos[k, 0], pos[k, 2], E)
        fn = acc[k] + cross(2.0 * wie + wen, vel[k])
        fn[2] -= g
        Rnb = att[k].T
        gyro[k] = w_nb[k] + Rnb @ (wie + wen)
        accel[k] = Rnb @ fn
    return gyro, accel
