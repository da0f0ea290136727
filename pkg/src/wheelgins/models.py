"""Wheel-IMU/GNSS measurement models, the straight-line gate and the mounting-angle fixer.

Every block returns the innovation ``z = predicted - observed`` together with
the exact Jacobian ``H = dz/dx`` under the error-injection convention of
:mod:`wheelgins.state`, so that ``z ~ H x + noise``. The Jacobians reduce to the
published small-angle blocks when the vehicle is level and the mounting
angles are small; tests compare them against finite differences.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GeometryError
from .geo import WGS84, EarthParams, geodetic_to_ecef, n_to_e_rotation, rot_z, skew
from .mech import ImuErrors, NavState
from .state import BG, LW, NDIM, PHI, PHIM, SG, SR, V, P, InstallationParams

E3 = np.array([0.0, 0.0, 1.0])
E1 = np.array([1.0, 0.0, 0.0])
MIN_HORIZONTAL = 1e-6


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class GnssFix:
    t: float
    pos: np.ndarray  # lat, lon rad; h m
    std: np.ndarray  # NED m


@dataclass
class GnssData:
    """Column-oriented GNSS stream: ``t`` (N,), geodetic ``pos`` (N,3), NED ``std`` (N,3)."""

    t: np.ndarray
    pos: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.t = np.ascontiguousarray(self.t, dtype=float).reshape(-1)
        self.pos = np.ascontiguousarray(self.pos, dtype=float).reshape(-1, 3)
        self.std = np.ascontiguousarray(self.std, dtype=float).reshape(-1, 3)
        if not (len(self.t) == len(self.pos) == len(self.std)):
            raise ValueError("GNSS columns differ in length")
        if np.any(self.std <= 0):
            raise ValueError("GNSS std must be positive")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> GnssFix:
        return GnssFix(float(self.t[i]), self.pos[i].copy(), self.std[i].copy())

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def without(self, windows) -> "GnssData":
        """Copy with fixes inside any ``[a, b)`` window removed."""
        keep = np.ones(len(self.t), dtype=bool)
        for a, b in windows:
            keep &= ~((self.t >= a) & (self.t < b))
        return GnssData(self.t[keep], self.pos[keep], self.std[keep])


KIND_DIM = {"velocity": 3, "gnss": 3, "wheel_rate": 2}


@dataclass
class MeasurementBlock:
    H: np.ndarray
    z: np.ndarray
    R: np.ndarray
    kind: str

    def __post_init__(self):
        k = KIND_DIM.get(self.kind)
        if k is None:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.H.shape != (k, NDIM) or self.z.shape != (k,) or self.R.shape != (k, k):
            raise ValueError(f"{self.kind} block has inconsistent shapes")


# ---------------------------------------------------------------- geometry


def r_body_to_wheel(phi_m) -> np.ndarray:
    """R_b^w for (theta_m, psi_m); equals Rz(psi_m) Ry(theta_m)."""
    th, ps = float(phi_m[0]), float(phi_m[1])
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ps), np.sin(ps)
    return np.array([
        [ct * cp, -sp, st * cp],
        [ct * sp, cp, st * sp],
        [-st, 0.0, ct],
    ])


def _row1_jacobian(phi_m) -> np.ndarray:
    """d(row 1 of R_b^w)^T / d(theta, psi): 3x2."""
    th, ps = float(phi_m[0]), float(phi_m[1])
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ps), np.sin(ps)
    return np.array([
        [-st * cp, -ct * sp],
        [0.0, -cp],
        [ct * cp, -st * sp],
    ])


def _rbw_partials(phi_m):
    """(dR/dtheta, dR/dpsi) of R_b^w."""
    th, ps = float(phi_m[0]), float(phi_m[1])
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ps), np.sin(ps)
    d_th = np.array([[-st * cp, 0.0, ct * cp], [-st * sp, 0.0, ct * sp], [-ct, 0.0, -st]])
    d_ps = np.array([[-ct * sp, -cp, -st * sp], [ct * cp, -sp, st * cp], [0.0, 0.0, 0.0]])
    return d_th, d_ps


def mounting_jacobian_A(omega, r: float, phi_m) -> np.ndarray:
    """1x2 sensitivity of the wheel forward speed to the mounting angles."""
    w = np.asarray(omega, dtype=float)
    return (w @ _row1_jacobian(phi_m) * r).reshape(1, 2)


def wheel_forward_velocity(omega, install: InstallationParams) -> float:
    """Forward wheel speed from the compensated gyro; uses the scale-corrected radius."""
    row1 = r_body_to_wheel(install.phi_m)[0]
    return float(row1 @ np.asarray(omega, dtype=float) * install.r_corrected)


@dataclass(frozen=True)
class VehicleFrame:
    R_nv: np.ndarray  # n -> vehicle
    psi_v: float
    axle_n: np.ndarray  # wheel x-axis in n
    grad_psi: np.ndarray  # d psi_v / d axle_n


def derive_vehicle_frame(att: np.ndarray, phi_m) -> VehicleFrame:
    u = att @ r_body_to_wheel(phi_m)[0]
    rho2 = u[0] ** 2 + u[1] ** 2
    if rho2 < MIN_HORIZONTAL**2:
        raise GeometryError("wheel axis is vertical; vehicle heading undefined")
    psi_v = float(np.arctan2(u[1], u[0]) - np.pi / 2)
    psi_v = float((psi_v + np.pi) % (2 * np.pi) - np.pi)
    return VehicleFrame(rot_z(psi_v).T, psi_v, u, np.array([-u[1], u[0], 0.0]) / rho2)


def derive_vehicle_rotation(att: np.ndarray, phi_m) -> np.ndarray:
    """R_n^v with zero roll and pitch and heading from the wheel axle, offset by -pi/2."""
    return derive_vehicle_frame(att, phi_m).R_nv


def gnss_leverarm_body(install: InstallationParams, R_vb: np.ndarray) -> np.ndarray:
    """IMU-to-antenna vector in the body frame."""
    return install.l_w3 + np.asarray(R_vb) @ install.l_gnss_v


# ---------------------------------------------------------------- blocks


def _gyro_partials(raw_gyro, imu_err: ImuErrors):
    """Compensated rate and its derivatives w.r.t. the bias and scale error states."""
    d = 1.0 / (1.0 + imu_err.gyro_scale)
    w = (np.asarray(raw_gyro, dtype=float) - imu_err.gyro_bias) * d
    return w, np.diag(d), np.diag(w * d)


@dataclass
class VelocityNoise:
    fwd: float = 0.05
    lat: float = 0.05
    vert: float = 0.05


def velocity_innovation(nav: NavState, raw_gyro, imu_err: ImuErrors, install: InstallationParams) -> np.ndarray:
    """Predicted wheel-centre velocity in the vehicle frame minus (forward speed, 0, 0)."""
    w, _, _ = _gyro_partials(raw_gyro, imu_err)
    vf = derive_vehicle_frame(nav.att, install.phi_m)
    wn = nav.vel + nav.att @ np.cross(w, install.l_w3)
    z = vf.R_nv @ wn
    z[0] -= wheel_forward_velocity(w, install)
    return z


def build_velocity_block(
    nav: NavState,
    raw_gyro,
    imu_err: ImuErrors,
    install: InstallationParams,
    noise: VelocityNoise = VelocityNoise(),
    gyro_std: float = 0.0,
) -> MeasurementBlock:
    """Wheel speed plus non-holonomic constraint, 3 rows.

    ``raw_gyro`` is the uncompensated sample at the update epoch. ``gyro_std``
    is its per-axis white noise; it enters R through the same Jacobian that
    maps gyro errors into the innovation.
    """
    w, D, Ds = _gyro_partials(raw_gyro, imu_err)
    vf = derive_vehicle_frame(nav.att, install.phi_m)
    R = nav.att
    Rnv = vf.R_nv
    l3 = install.l_w3
    rc = install.r_corrected
    row1 = r_body_to_wheel(install.phi_m)[0]
    rot_term = R @ np.cross(w, l3)
    wn = nav.vel + rot_term
    pred = Rnv @ wn
    z = pred.copy()
    z[0] -= row1 @ w * rc

    dz_dpsi = -np.cross(E3, pred)  # derivative of R_nv wn w.r.t. vehicle heading
    H = np.zeros((3, NDIM))
    H[:, V] = Rnv
    H[:, PHI] = np.outer(dz_dpsi, vf.grad_psi @ skew(vf.axle_n)) + Rnv @ skew(rot_term)
    J = -Rnv @ R @ skew(l3)
    J[0] -= row1 * rc
    H[:, BG] = J @ D
    H[:, SG] = J @ Ds
    H[:, LW] = (Rnv @ R @ skew(w))[:, 1:3]
    A = mounting_jacobian_A(w, rc, install.phi_m)
    H[:, PHIM] = np.outer(dz_dpsi, vf.grad_psi @ R @ _row1_jacobian(install.phi_m))
    H[0, PHIM] -= A[0]
    H[0, SR] = -(row1 @ w) * rc / (1.0 + install.s_r)
    Rm = np.diag([noise.fwd**2, noise.lat**2, noise.vert**2])
    if gyro_std > 0:
        Rm = Rm + gyro_std**2 * (J @ D) @ (J @ D).T
    return MeasurementBlock(H, z, Rm, "velocity")


def antenna_ecef(nav: NavState, install: InstallationParams, earth: EarthParams = WGS84) -> np.ndarray:
    Rnv = derive_vehicle_rotation(nav.att, install.phi_m)
    lever_n = nav.att @ gnss_leverarm_body(install, nav.att.T @ Rnv.T)
    return geodetic_to_ecef(nav.pos, earth) + n_to_e_rotation(nav.pos) @ lever_n


def gnss_innovation(nav: NavState, install: InstallationParams, fix: GnssFix, earth: EarthParams = WGS84) -> np.ndarray:
    d = antenna_ecef(nav, install, earth) - geodetic_to_ecef(fix.pos, earth)
    return n_to_e_rotation(nav.pos).T @ d


def build_gnss_block(
    nav: NavState, install: InstallationParams, fix: GnssFix, earth: EarthParams = WGS84
) -> MeasurementBlock:
    """Antenna position observation in NED metres, 3 rows."""
    vf = derive_vehicle_frame(nav.att, install.phi_m)
    R = nav.att
    lg_n = vf.R_nv.T @ install.l_gnss_v
    z = gnss_innovation(nav, install, fix, earth)
    dpsi = np.cross(E3, lg_n)
    H = np.zeros((3, NDIM))
    H[:, P] = np.eye(3)
    H[:, PHI] = skew(R @ install.l_w3) + np.outer(dpsi, vf.grad_psi @ skew(vf.axle_n))
    H[:, LW] = R[:, 1:3]
    H[:, PHIM] = np.outer(dpsi, vf.grad_psi @ R @ _row1_jacobian(install.phi_m))
    return MeasurementBlock(H, z, np.diag(np.asarray(fix.std, dtype=float) ** 2), "gnss")


def wheel_rate_innovation(raw_gyro, imu_err: ImuErrors, install: InstallationParams) -> np.ndarray:
    w, _, _ = _gyro_partials(raw_gyro, imu_err)
    return (r_body_to_wheel(install.phi_m) @ w)[1:3]


def build_wheel_rate_block(raw_gyro, imu_err: ImuErrors, install: InstallationParams, sigma: float) -> MeasurementBlock:
    """Zero lateral wheel-frame rate while driving straight, 2 rows.

    ``raw_gyro`` is typically an average over the update interval and
    ``sigma`` the matching noise std.
    """
    if not sigma > 0:
        raise ValueError("wheel-rate sigma must be positive")
    w, D, Ds = _gyro_partials(raw_gyro, imu_err)
    Rbw = r_body_to_wheel(install.phi_m)
    d_th, d_ps = _rbw_partials(install.phi_m)
    H = np.zeros((2, NDIM))
    H[:, BG] = (Rbw @ D)[1:3]
    H[:, SG] = (Rbw @ Ds)[1:3]
    H[:, PHIM] = np.stack([d_th @ w, d_ps @ w], axis=1)[1:3]
    return MeasurementBlock(H, (Rbw @ w)[1:3], sigma**2 * np.eye(2), "wheel_rate")


# ---------------------------------------------------------------- gate and fixer


@dataclass
class StraightLineGate:
    """Opens when the lateral wheel-frame rate stays quiet for a full window.

    The y/z wheel-frame rates are first stripped of an affine fit in the spin
    rate, which absorbs the leakage caused by a not-yet-estimated mounting
    angle or scale error. What remains during a turn is the heading rate
    rotating at the spin frequency, so its smoothed magnitude tracks the turn
    rate directly.
    """

    threshold: float = np.deg2rad(0.5)  # rad/s
    window: float = 1.0  # s
    smooth: float = 0.2  # s, moving-average length
    _buf: deque = field(default_factory=deque, repr=False)

    def reset(self) -> None:
        self._buf.clear()

    def push(self, t: float, omega_w) -> None:
        self._buf.append((float(t), np.asarray(omega_w, dtype=float).copy()))
        while self._buf and self._buf[0][0] < t - self.window - 1e-9:
            self._buf.popleft()

    def span(self) -> float:
        return self._buf[-1][0] - self._buf[0][0] if len(self._buf) > 1 else 0.0

    def is_open(self) -> bool:
        if self.span() < self.window - 1e-6:
            return False
        t = np.array([b[0] for b in self._buf])
        w = np.array([b[1] for b in self._buf])
        return straight_line_gate(t, w, self.threshold, self.window, self.smooth)


def straight_line_gate(t, omega_w, threshold: float = np.deg2rad(0.5), window: float = 1.0, smooth: float = 0.2) -> bool:
    """True (open) iff the window of wheel-frame rates shows no turning."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(omega_w, dtype=float).reshape(-1, 3)
    if len(t) < 3 or t[-1] - t[0] < window - 1e-6:
        raise ValueError("gate needs at least one full window of samples")
    X = np.stack([np.ones(len(t)), w[:, 0]], axis=1)
    coef, *_ = np.linalg.lstsq(X, w[:, 1:3], rcond=1e-9)
    res = w[:, 1:3] - X @ coef
    # the turn rate rotates at the spin frequency in the wheel frame, so smooth its magnitude
    mag = np.hypot(res[:, 0], res[:, 1])
    dt = (t[-1] - t[0]) / (len(t) - 1)
    m = max(1, int(round(smooth / dt)))
    if m > 1:
        mag = np.convolve(mag, np.ones(m) / m, mode="valid")
    return bool(np.max(mag) <= threshold)


@dataclass
class ConvergenceFixer:
    """Fixes the mounting angle once both stds have stayed below ``sigma_fix`` for ``hold`` s."""

    sigma_fix: float = np.deg2rad(0.05)
    hold: float = 10.0
    since: Optional[float] = None
    fixed_at: Optional[float] = None

    @property
    def fixed(self) -> bool:
        return self.fixed_at is not None

    def update(self, t: float, stds) -> bool:
        if self.fixed:
            return True
        if np.all(np.asarray(stds) < self.sigma_fix):
            if self.since is None:
                self.since = float(t)
            if t - self.since >= self.hold - 1e-9:
                self.fixed_at = float(t)
        else:
            self.since = None
        return self.fixed
