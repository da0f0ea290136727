"""Ground-truth trajectories and Wheel-IMU / GNSS measurement synthesis.

The world is flat at the origin height. Paths are laid out in a local plane
(north x, east y) and mapped to latitude/longitude with the radii of the
origin, so closed plane paths close exactly on the ellipsoid. Velocities,
heading rate and wheel spin rate are analytic; only the angular
accelerations used for the lever-arm term are differentiated numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import _kern
from .geo import WGS84, EarthParams, GeodeticPosition, rot_x, rot_z, wrap_pi
from .mech import DEG, ICM20602, ImuData, ImuErrors, NavState, run_ins
from .models import GnssData, r_body_to_wheel

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class Straight:
    length: float
    speed: float


@dataclass(frozen=True)
class Arc:
    """Circular arc; positive ``sweep`` turns right (heading increases)."""

    radius: float
    sweep: float
    speed: float


@dataclass(frozen=True)
class Dwell:
    duration: float


Segment = Union[Straight, Arc, Dwell]


@dataclass
class TrajectorySpec:
    origin: GeodeticPosition
    heading: float  # initial vehicle heading, rad
    segments: Sequence[Segment]
    accel_limit: float = 0.5  # peak longitudinal acceleration, m/s^2
    blend_length: float = 4.0  # curvature transition length, m
    wheel_radius: float = 0.3  # only used for validation of arc radii

    def validate(self) -> None:
        if not self.segments:
            raise ValueError("trajectory has no segments")
        if self.accel_limit <= 0 or self.blend_length < 0:
            raise ValueError("accel_limit must be > 0 and blend_length >= 0")
        for s in self.segments:
            if isinstance(s, Straight):
                if s.length <= 0 or s.speed <= 0:
                    raise ValueError(f"invalid straight segment {s}")
            elif isinstance(s, Arc):
                if s.radius <= self.wheel_radius or s.speed <= 0 or s.sweep == 0:
                    raise ValueError(f"invalid arc segment {s}")
            elif isinstance(s, Dwell):
                if s.duration <= 0:
                    raise ValueError(f"invalid dwell segment {s}")
            else:
                raise TypeError(f"unknown segment {s!r}")


def _smooth_int(u):
    # integral of S(u) = u - sin(2 pi u)/(2 pi) from 0 to u
    return 0.5 * u * u + (np.cos(2.0 * np.pi * u) - 1.0) / (4.0 * np.pi**2)


def _smooth(u):
    return u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)


class _Path:
    """Heading and curvature as functions of arc length."""

    def __init__(self, spec: TrajectorySpec):
        segs = [s for s in spec.segments if not isinstance(s, Dwell)]
        bounds = [0.0]
        kap = []
        for s in segs:
            if isinstance(s, Straight):
                bounds.append(bounds[-1] + s.length)
                kap.append(0.0)
            else:
                bounds.append(bounds[-1] + s.radius * abs(s.sweep))
                kap.append(np.sign(s.sweep) / s.radius)
        self.bounds = np.array(bounds)
        self.length = bounds[-1]
        lens = np.diff(self.bounds)
        # breakpoints: list of (s_start, s_end, k0, k1) blends; between them curvature is constant
        pieces = []  # (s0, s1, kind, k0, k1)
        s_cur = 0.0
        for i in range(len(segs)):
            k = kap[i]
            end = self.bounds[i + 1]
            if i + 1 < len(segs) and kap[i + 1] != k and spec.blend_length > 0:
                L = min(spec.blend_length, 0.5 * lens[i], 0.5 * lens[i + 1])
                pieces.append((s_cur, end - L / 2, 0, k, k))
                pieces.append((end - L / 2, end + L / 2, 1, k, kap[i + 1]))
                s_cur = end + L / 2
            else:
                pieces.append((s_cur, end, 0, k, k))
                s_cur = end
        if not pieces:  # dwell-only trajectory
            pieces.append((0.0, 0.0, 0, 0.0, 0.0))
        self.p_s0 = np.array([p[0] for p in pieces])
        self.p_s1 = np.array([p[1] for p in pieces])
        self.p_kind = np.array([p[2] for p in pieces])
        self.p_k0 = np.array([p[3] for p in pieces])
        self.p_k1 = np.array([p[4] for p in pieces])
        psi0 = np.empty(len(pieces))
        acc = spec.heading
        for j in range(len(pieces)):
            psi0[j] = acc
            L = self.p_s1[j] - self.p_s0[j]
            if self.p_kind[j] == 0:
                acc += self.p_k0[j] * L
            else:
                acc += self.p_k0[j] * L + (self.p_k1[j] - self.p_k0[j]) * L * _smooth_int(1.0)
        self.p_psi0 = psi0
        self.psi_end = acc

    def eval(self, s):
        """Return (psi, kappa, dkappa/ds) at arc lengths ``s``."""
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(self.p_s0, s, side="right") - 1, 0, len(self.p_s0) - 1)
        s0, s1, kind, k0, k1, p0 = (
            self.p_s0[j],
            self.p_s1[j],
            self.p_kind[j],
            self.p_k0[j],
            self.p_k1[j],
            self.p_psi0[j],
        )
        L = np.maximum(s1 - s0, 1e-300)
        d = s - s0
        u = np.clip(d / L, 0.0, 1.0)
        blend = kind == 1
        psi = p0 + k0 * d + np.where(blend, (k1 - k0) * L * _smooth_int(u), 0.0)
        kappa = k0 + np.where(blend, (k1 - k0) * _smooth(u), 0.0)
        dk = np.where(blend, (k1 - k0) * (1.0 - np.cos(2.0 * np.pi * u)) / L, 0.0)
        # past the end of the path the heading stays constant
        past = s > self.length
        psi = np.where(past, self.psi_end, psi)
        kappa = np.where(past, 0.0, kappa)
        return psi, kappa, dk


class _Profile:
    """Arc length versus time built from cosine speed ramps, cruises and dwells."""

    def __init__(self, spec: TrajectorySpec):
        a = spec.accel_limit
        pieces = []  # (t0, T, s0, u0, u1)  ramp if u0 != u1 else cruise/dwell
        t = 0.0
        s = 0.0
        u = 0.0
        segs = list(spec.segments)

        def ramp(u0, u1):
            T = np.pi * abs(u1 - u0) / (2.0 * a)
            return T, 0.5 * (u0 + u1) * T

        for i, seg in enumerate(segs):
            if isinstance(seg, Dwell):
                if u != 0.0:
                    raise ValueError("internal: dwell while moving")
                pieces.append((t, seg.duration, s, 0.0, 0.0))
                t += seg.duration
                continue
            length = seg.length if isinstance(seg, Straight) else seg.radius * abs(seg.sweep)
            nxt = segs[i + 1] if i + 1 < len(segs) else None
            stop_after = nxt is None or isinstance(nxt, Dwell)
            T0, d0 = ramp(u, seg.speed) if u != seg.speed else (0.0, 0.0)
            T1, d1 = ramp(seg.speed, 0.0) if stop_after else (0.0, 0.0)
            cruise = length - d0 - d1
            if cruise < -1e-9:
                raise ValueError(f"segment {seg} too short for its speed transitions")
            cruise = max(cruise, 0.0)
            if T0 > 0:
                pieces.append((t, T0, s, u, seg.speed))
                t += T0
                s += d0
            if cruise > 0:
                Tc = cruise / seg.speed
                pieces.append((t, Tc, s, seg.speed, seg.speed))
                t += Tc
                s += cruise
            u = seg.speed
            if T1 > 0:
                pieces.append((t, T1, s, u, 0.0))
                t += T1
                s += d1
                u = 0.0
        self.t0 = np.array([p[0] for p in pieces])
        self.T = np.array([p[1] for p in pieces])
        self.s0 = np.array([p[2] for p in pieces])
        self.u0 = np.array([p[3] for p in pieces])
        self.u1 = np.array([p[4] for p in pieces])
        self.duration = t
        self.length = s

    def eval(self, t):
        """Return (s, u, du/dt) at times ``t``; constant after the end."""
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.t0, t, side="right") - 1, 0, len(self.t0) - 1)
        t0, T, s0, u0, u1 = self.t0[j], self.T[j], self.s0[j], self.u0[j], self.u1[j]
        tau = np.clip(t - t0, 0.0, T)
        w = np.pi / np.where(T > 0, T, 1.0)
        du = u1 - u0
        s = s0 + u0 * tau + 0.5 * du * (tau - np.sin(w * tau) / w)
        u = u0 + 0.5 * du * (1.0 - np.cos(w * tau))
        acc = 0.5 * du * w * np.sin(w * tau)
        over = t > t0 + T
        s = np.where(over, s + u * (t - t0 - T), s)
        acc = np.where(over, 0.0, acc)
        return s, u, acc


@dataclass
class InstallTruth:
    l_y: float = 0.02
    l_z: float = 0.03
    theta_m: float = -1.22 * DEG
    psi_m: float = 1.60 * DEG
    s_r: float = 0.0

    @property
    def l_w3(self) -> np.ndarray:
        return np.array([0.0, self.l_y, self.l_z])

    @property
    def phi_m(self) -> np.ndarray:
        return np.array([self.theta_m, self.psi_m])


@dataclass
class ImuErrorStd:
    gyro_bias: float = ICM20602["gyro_bias"]
    accel_bias: float = ICM20602["accel_bias"]
    gyro_scale: float = ICM20602["gyro_scale"]
    accel_scale: float = ICM20602["accel_scale"]


@dataclass
class SimConfig:
    wheel_radius: float = 0.3
    install: InstallTruth = field(default_factory=InstallTruth)
    imu_errors: Optional[ImuErrors] = None  # None: drawn from imu_error_std with the seed
    imu_error_std: ImuErrorStd = field(default_factory=ImuErrorStd)
    arw: float = ICM20602["arw"]
    vrw: float = ICM20602["vrw"]
    imu_rate: float = 200.0
    gnss_rate: float = 1.0
    gnss_std: float = 0.02
    outages: Sequence[tuple[float, float]] = ()
    l_gnss_v: np.ndarray = field(default_factory=lambda: np.array([0.0, -0.5, -1.5]))
    earth_rotation: bool = True
    seed: int = 0
    internal_rate: float = 1000.0

    def validate(self, duration: Optional[float] = None) -> None:
        if self.wheel_radius <= 0:
            raise ValueError("wheel radius must be positive")
        if min(self.imu_rate, self.gnss_rate, self.internal_rate) <= 0:
            raise ValueError("rates must be positive")
        if self.gnss_std < 0 or self.arw < 0 or self.vrw < 0:
            raise ValueError("noise levels must be non-negative")
        if abs(self.install.s_r) >= 0.1:
            raise ValueError("|s_r| must be below 0.1")
        for a, b in self.outages:
            if not (0 <= a < b) or (duration is not None and b > duration + 1e-9):
                raise ValueError(f"outage window ({a}, {b}) outside the run")

    def earth(self) -> EarthParams:
        return WGS84 if self.earth_rotation else WGS84.without_rotation()

    def noise_free(self) -> "SimConfig":
        return replace(self, imu_errors=ImuErrors(), arw=0.0, vrw=0.0, gnss_std=0.0)


@dataclass
class Truth:
    """Truth sampled on a uniform grid.

    Wheel-centre position/velocity, vehicle heading ``psi_v``, wheel roll angle
    ``alpha``, body attitude R_b^n, plus the IMU point position and velocity.
    """

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    psi_v: np.ndarray
    alpha: np.ndarray
    att: np.ndarray
    pos_imu: np.ndarray
    vel_imu: np.ndarray
    distance: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    def nav(self, i: int) -> NavState:
        """True IMU navigation state at grid index ``i``."""
        return NavState(float(self.t[i]), self.pos_imu[i], self.vel_imu[i], self.att[i])

    def subsample(self, step: int) -> "Truth":
        sl = slice(None, None, step)
        return Truth(
            self.t[sl], self.pos[sl], self.vel[sl], self.psi_v[sl], self.alpha[sl], self.att[sl],
            self.pos_imu[sl], self.vel_imu[sl], self.distance,
        )


class _Kinematics:
    def __init__(self, spec: TrajectorySpec, radius: float, earth: EarthParams):
        spec.validate()
        self.spec = spec
        self.path = _Path(spec)
        self.prof = _Profile(spec)
        self.r = radius
        self.E = earth.vector
        lat0, _, h0 = spec.origin
        self.h0 = float(h0)
        self.lat0 = float(lat0)
        rm0, rn0 = _kern.radii(self.lat0, self.E)
        self.sx = rm0 + self.h0
        self.sy = (rn0 + self.h0) * np.cos(self.lat0)

    def k_factors(self, lat):
        """NED metres per plane metre (north, east) and their latitude derivatives."""
        a, f = self.E[0], self.E[1]
        e2 = f * (2 - f)
        s, c = np.sin(lat), np.cos(lat)
        w = 1 - e2 * s * s
        rn = a / np.sqrt(w)
        rm = a * (1 - e2) / w**1.5
        drn = a * e2 * s * c / w**1.5
        drm = 3 * a * (1 - e2) * e2 * s * c / w**2.5
        kn = (rm + self.h0) / self.sx
        ke = (rn + self.h0) * c / self.sy
        dkn = drm / self.sx
        dke = (drn * c - (rn + self.h0) * s) / self.sy
        return kn, ke, dkn, dke

    def planar(self, t, lat):
        """Analytic wheel-centre quantities at times ``t`` given latitudes ``lat``."""
        s, u, ud = self.prof.eval(t)
        psi, kap, _ = self.path.eval(s)
        kn, ke, dkn, dke = self.k_factors(lat)
        cp, sp = np.cos(psi), np.sin(psi)
        A, B = kn * cp, ke * sp
        psid = kap * u
        latd = u * cp / self.sx
        Ad = dkn * latd * cp - kn * sp * psid
        Bd = dke * latd * sp + ke * cp * psid
        n2 = A * A + B * B
        heading = np.arctan2(B, A)
        heading_rate = (A * Bd - B * Ad) / n2
        speed = u * np.sqrt(n2)
        speed_dot = ud * np.sqrt(n2) + u * (A * Ad + B * Bd) / np.sqrt(n2)
        vel = np.stack([u * A, u * B, np.zeros_like(u)], axis=-1)
        acc = np.stack([ud * A + u * Ad, ud * B + u * Bd, np.zeros_like(u)], axis=-1)
        return dict(s=s, u=u, psi=psi, heading=heading, heading_rate=heading_rate, speed=speed,
                    speed_dot=speed_dot, vel=vel, acc=acc, latd=latd)


def _rx_stack(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 0, 0] = 1
    R[..., 1, 1] = c
    R[..., 1, 2] = -s
    R[..., 2, 1] = s
    R[..., 2, 2] = c
    return R


def _rz_stack(a):
    c, s = np.cos(a), np.sin(a)
    R = np.zeros(a.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1
    return R


def _cumquad(fun, t):
    """Cumulative Gauss-Legendre integral of a vectorised ``fun`` over grid ``t``."""
    a, b = t[:-1], t[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fun(nodes.ravel(), np.repeat(np.arange(len(a)), len(_GL_X))).reshape(nodes.shape + (-1,))
    inc = (vals * _GL_W[None, :, None]).sum(axis=1) * half[:, None]
    out = np.zeros((len(t), inc.shape[1]))
    out[1:] = np.cumsum(inc, axis=0)
    return out


def generate_truth(
    spec: TrajectorySpec,
    dt_internal: float = 1e-3,
    wheel_radius: float = 0.3,
    install: Optional[InstallTruth] = None,
    earth: EarthParams = WGS84,
    duration: Optional[float] = None,
) -> Truth:
    """Sample the scripted motion on a uniform grid of spacing ``dt_internal``."""
    if dt_internal > 1e-3 + 1e-15:
        raise ValueError("dt_internal must be <= 1e-3 s")
    install = install or InstallTruth()
    kin = _Kinematics(spec, wheel_radius, earth)
    T = kin.prof.duration if duration is None else duration
    if T <= 0:
        raise ValueError("trajectory has zero duration")
    n = int(round(T / dt_internal)) + 1
    t = np.arange(n) * dt_internal
    lat0, lon0, h0 = spec.origin

    # plane position by quadrature (independent of latitude), then the wheel
    # angle, whose rate depends on latitude through the k-factors
    def plane_rate(tt, idx):
        s, u, _ = kin.prof.eval(tt)
        psi, _, _ = kin.path.eval(s)
        return np.stack([u * np.cos(psi), u * np.sin(psi)], axis=-1)

    xy = _cumquad(plane_rate, t)
    lat = lat0 + xy[:, 0] / kin.sx
    lon = lon0 + xy[:, 1] / kin.sy

    def spin_rate(tt, idx):
        w = (tt - t[idx]) / dt_internal
        la = lat[idx] * (1 - w) + lat[idx + 1] * w
        return (kin.planar(tt, la)["speed"] / wheel_radius)[:, None]

    alpha = _cumquad(spin_rate, t)[:, 0]
    pos = np.stack([lat, lon, np.full(n, h0)], axis=-1)

    q = kin.planar(t, lat)
    psi_v = q["heading"]
    att, pos_imu, vel_imu, _, _ = _body_and_imu(kin, t, lat, pos, q, alpha, install, need_acc=False)
    return Truth(t, pos, q["vel"], wrap_pi(psi_v), alpha, att, pos_imu, vel_imu, float(alpha[-1] * wheel_radius))


def _body_and_imu(kin: _Kinematics, t, lat, pos, q, alpha, install: InstallTruth, h: float = 2e-4, need_acc: bool = True):
    """Body attitude, IMU point position/velocity/acceleration and body rate.

    With ``need_acc`` false the acceleration is returned as None, which skips
    the numerical differentiation of the rates.
    """
    Rbw = r_body_to_wheel(install.phi_m)
    c = Rbw @ install.l_w3  # leverarm in the wheel frame
    psi_w = q["heading"] + np.pi / 2
    Rwn = _rz_stack(psi_w) @ _rx_stack(alpha)
    att = Rwn @ Rbw
    alpha_d = q["speed"] / kin.r
    rxT_e3 = np.stack([np.zeros_like(alpha), np.sin(alpha), np.cos(alpha)], axis=-1)  # Rx(alpha)^T e3
    Om = rxT_e3 * q["heading_rate"][:, None]
    Om[:, 0] += alpha_d

    Oc = np.cross(Om, c[None, :])
    lev = -np.einsum("nij,j->ni", Rwn, c)
    vel_imu = q["vel"] - np.einsum("nij,nj->ni", Rwn, Oc)
    rm, rn = _kern.radii(float(pos[0, 0]), kin.E)
    scale = np.stack([rm + pos[:, 2], (rn + pos[:, 2]) * np.cos(pos[:, 0]), -np.ones(len(t))], axis=-1)
    pos_imu = pos + lev / scale
    w_nb = Om @ Rbw  # R_w^b Om  (row-vector form of Rbw^T Om)
    if not need_acc:
        return att, pos_imu, vel_imu, None, w_nb

    # fourth-order central differences of the scalar rates
    def rates(dt):
        tt = t + dt
        qq = kin.planar(tt, lat + q["latd"] * dt)
        return qq["heading_rate"], qq["speed"] / kin.r

    p1, a1 = rates(h)
    m1, b1 = rates(-h)
    p2, a2 = rates(2 * h)
    m2, b2 = rates(-2 * h)
    psi_dd = (8 * (p1 - m1) - (p2 - m2)) / (12 * h)
    alpha_dd = (8 * (a1 - b1) - (a2 - b2)) / (12 * h)
    e1 = np.array([1.0, 0.0, 0.0])
    Om_d = np.cross(-alpha_d[:, None] * e1[None, :], rxT_e3) * q["heading_rate"][:, None]
    Om_d += rxT_e3 * psi_dd[:, None]
    Om_d[:, 0] += alpha_dd

    acc_imu = q["acc"] - np.einsum("nij,nj->ni", Rwn, np.cross(Om, Oc) + np.cross(Om_d, c[None, :]))
    return att, pos_imu, vel_imu, acc_imu, w_nb


def _imu_from_truth(kin, t, lat, pos, q, alpha, install, earth):
    att, pos_imu, vel_imu, acc_imu, w_nb = _body_and_imu(kin, t, lat, pos, q, alpha, install)
    return _kern.specific_force_and_rate(att, pos_imu, vel_imu, acc_imu, np.ascontiguousarray(w_nb), earth.vector)


@dataclass
class SimResult:
    truth: Truth  # internal grid
    imu: ImuData  # corrupted measurements
    imu_clean: ImuData  # error-free measurements
    gnss: GnssData
    imu_errors: ImuErrors
    config: SimConfig
    spec: TrajectorySpec

    @property
    def imu_truth(self) -> Truth:
        """Truth at the IMU epochs."""
        step = int(round(self.config.internal_rate / self.config.imu_rate))
        return self.truth.subsample(step)

    @property
    def r_meas(self) -> float:
        return (1.0 + self.config.install.s_r) * self.config.wheel_radius

    def initial_nav(self) -> NavState:
        return self.truth.nav(0)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    a, b, c = ss.spawn(3)
    return np.random.default_rng(a), np.random.default_rng(b), np.random.default_rng(c)


def draw_imu_errors(rng: np.random.Generator, std: ImuErrorStd) -> ImuErrors:
    return ImuErrors(
        rng.normal(0.0, std.gyro_bias, 3),
        rng.normal(0.0, std.accel_bias, 3),
        rng.normal(0.0, std.gyro_scale, 3),
        rng.normal(0.0, std.accel_scale, 3),
    )


def clean_imu(spec: TrajectorySpec, cfg: SimConfig, truth: Truth) -> ImuData:
    """Error-free IMU outputs at ``cfg.imu_rate`` along ``truth``."""
    step = cfg.internal_rate / cfg.imu_rate
    if abs(step - round(step)) > 1e-9 or step < 1:
        raise ValueError("internal rate must be an integer multiple of the IMU rate")
    step = int(round(step))
    earth = cfg.earth()
    kin = _Kinematics(spec, cfg.wheel_radius, earth)
    idx = np.arange(0, len(truth), step)
    t = truth.t[idx]
    pos = truth.pos[idx]
    lat = pos[:, 0]
    q = kin.planar(t, lat)
    gyro, accel = _imu_from_truth(kin, t, lat, pos, q, truth.alpha[idx], cfg.install, earth)
    return ImuData(t, gyro, accel)


def corrupt_imu(clean: ImuData, cfg: SimConfig) -> tuple[ImuData, ImuErrors]:
    """Apply scale factors, biases and white noise drawn from the config seed."""
    rng_err, rng_imu, _ = _streams(cfg.seed)
    errs = cfg.imu_errors if cfg.imu_errors is not None else draw_imu_errors(rng_err, cfg.imu_error_std)
    n = len(clean)
    wn = rng_imu.standard_normal((n, 3)) * (cfg.arw * np.sqrt(cfg.imu_rate))
    an = rng_imu.standard_normal((n, 3)) * (cfg.vrw * np.sqrt(cfg.imu_rate))
    g_meas = clean.gyro * (1.0 + errs.gyro_scale) + errs.gyro_bias + wn
    a_meas = clean.accel * (1.0 + errs.accel_scale) + errs.accel_bias + an
    return ImuData(clean.t, g_meas, a_meas), errs


def synthesize_imu(spec: TrajectorySpec, cfg: SimConfig, truth: Optional[Truth] = None):
    """Return (clean, corrupted, errors) IMU streams at ``cfg.imu_rate``."""
    if truth is None:
        truth = generate_truth(spec, 1.0 / cfg.internal_rate, cfg.wheel_radius, cfg.install, cfg.earth())
    clean = clean_imu(spec, cfg, truth)
    imu, errs = corrupt_imu(clean, cfg)
    return clean, imu, errs


def antenna_positions(truth: Truth, l_gnss_v, earth: EarthParams = WGS84) -> np.ndarray:
    """Antenna geodetic positions: wheel centre plus R_v^n l_gnss_v."""
    l = np.asarray(l_gnss_v, dtype=float)
    c, s = np.cos(truth.psi_v), np.sin(truth.psi_v)
    dn = c * l[0] - s * l[1]
    de = s * l[0] + c * l[1]
    dd = np.full_like(dn, l[2])
    rm, rn = _kern.radii(float(truth.pos[0, 0]), earth.vector)
    h = truth.pos[:, 2]
    return truth.pos + np.stack([dn / (rm + h), de / ((rn + h) * np.cos(truth.pos[:, 0])), -dd], axis=-1)


def synthesize_gnss(truth: Truth, cfg: SimConfig) -> GnssData:
    """Antenna fixes at ``cfg.gnss_rate`` with white NED noise; outage windows withheld."""
    earth = cfg.earth()
    step = cfg.internal_rate / cfg.gnss_rate
    if abs(step - round(step)) > 1e-9:
        raise ValueError("internal rate must be an integer multiple of the GNSS rate")
    idx = np.arange(0, len(truth), int(round(step)))
    sub = truth.subsample(1)
    ant = antenna_positions(sub, cfg.l_gnss_v, earth)[idx]
    t = truth.t[idx]
    _, _, rng = _streams(cfg.seed)
    noise = rng.standard_normal((len(t), 3)) * cfg.gnss_std
    rm, rn = _kern.radii(float(truth.pos[0, 0]), earth.vector)
    h = ant[:, 2]
    ant = ant + np.stack([noise[:, 0] / (rm + h), noise[:, 1] / ((rn + h) * np.cos(ant[:, 0])), -noise[:, 2]], axis=-1)
    std = np.full((len(t), 3), max(cfg.gnss_std, 1e-3))
    keep = np.ones(len(t), dtype=bool)
    for a, b in cfg.outages:
        keep &= ~((t >= a) & (t < b))
    return GnssData(t[keep], ant[keep], std[keep])


def simulate(
    spec: TrajectorySpec,
    cfg: SimConfig,
    duration: Optional[float] = None,
    base: Optional["SimResult"] = None,
) -> SimResult:
    """Truth plus corrupted IMU and GNSS streams.

    ``base`` reuses the truth and clean IMU of an earlier run with the same
    trajectory and installation, so Monte Carlo seeds only redraw errors and
    noise.
    """
    if base is None:
        spec.validate()
        earth = cfg.earth()
        truth = generate_truth(spec, 1.0 / cfg.internal_rate, cfg.wheel_radius, cfg.install, earth, duration)
        cfg.validate(float(truth.t[-1]))
        clean = clean_imu(spec, cfg, truth)
    else:
        truth, clean = base.truth, base.imu_clean
        cfg.validate(float(truth.t[-1]))
    imu, errs = corrupt_imu(clean, cfg)
    gnss = synthesize_gnss(truth, cfg)
    return SimResult(truth, imu, clean, gnss, errs, cfg, spec)


def roundtrip_check(spec: TrajectorySpec, cfg: SimConfig, duration: Optional[float] = None) -> float:
    """Max horizontal+vertical deviation (m) of free INS on clean IMU data from truth."""
    cfg = cfg.noise_free()
    earth = cfg.earth()
    truth = generate_truth(spec, 1.0 / cfg.internal_rate, cfg.wheel_radius, cfg.install, earth, duration)
    clean, _, _ = synthesize_imu(spec, cfg, truth)
    step = int(round(cfg.internal_rate / cfg.imu_rate))
    tr = truth.subsample(step)
    _, pos, _, _ = run_ins(tr.nav(0), clean, earth)
    rm, rn = _kern.radii(float(tr.pos_imu[0, 0]), earth.vector)
    d = pos - tr.pos_imu
    dn = d[:, 0] * (rm + tr.pos_imu[:, 2])
    de = d[:, 1] * (rn + tr.pos_imu[:, 2]) * np.cos(tr.pos_imu[:, 0])
    return float(np.sqrt(dn**2 + de**2 + d[:, 2] ** 2).max())
