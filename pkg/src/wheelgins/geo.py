"""Earth model, coordinate frames and rotation utilities (WGS84, NED, ZYX Euler)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kern
from .errors import GeometryError

GIMBAL_TOL = 1e-8
POLE_TOL = 1e-9


@dataclass(frozen=True)
class EarthParams:
    """Ellipsoid and gravity constants (WGS84 by default).

    ``omega_e`` can be set to zero to run mechanization and simulation without
    earth rotation.
    """

    a: float = 6378137.0
    f: float = 1.0 / 298.257223563
    omega_e: float = 7.292115e-5
    gamma_equator: float = 9.7803253359
    gamma_pole: float = 9.8321849378
    gm: float = 3.986004418e14

    @property
    def b(self) -> float:
        return self.a * (1.0 - self.f)

    @property
    def e2(self) -> float:
        return self.f * (2.0 - self.f)

    @property
    def m(self) -> float:
        # always the physical WGS84 value so gravity does not change with omega_e
        return 7.292115e-5**2 * self.a**2 * self.b / self.gm

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a, self.f, self.omega_e, self.gamma_equator, self.gamma_pole, self.m])

    def without_rotation(self) -> "EarthParams":
        return EarthParams(self.a, self.f, 0.0, self.gamma_equator, self.gamma_pole, self.gm)


WGS84 = EarthParams()


class GeodeticPosition(NamedTuple):
    lat: float  # rad
    lon: float  # rad
    height: float  # m


class EulerZYX(NamedTuple):
    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = False


def wrap_pi(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix with ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def vee(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def exp_so3(v) -> np.ndarray:
    return _kern.exp_so3(np.asarray(v, dtype=float))


def log_so3(R) -> np.ndarray:
    return _kern.log_so3(np.ascontiguousarray(R, dtype=float))


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def euler_to_rotation(e) -> np.ndarray:
    """Rotation for intrinsic z-y-x angles: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

    Accepts an :class:`EulerZYX` or any ``(roll, pitch, yaw)`` sequence.
    """
    roll, pitch, yaw = float(e[0]), float(e[1]), float(e[2])
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotation_to_euler(R) -> EulerZYX:
    R = np.asarray(R, dtype=float)
    s = -R[2, 0]
    pitch = float(np.arcsin(np.clip(s, -1.0, 1.0)))
    if abs(abs(pitch) - np.pi / 2) < GIMBAL_TOL:
        # yaw and roll share one axis; put everything in yaw
        yaw = float(np.arctan2(-R[0, 1], R[1, 1]))
        return EulerZYX(0.0, float(np.copysign(np.pi / 2, s)), wrap_pi(yaw), True)
    roll = float(np.arctan2(R[2, 1], R[2, 2]))
    yaw = float(np.arctan2(R[1, 0], R[0, 0]))
    return EulerZYX(wrap_pi(roll), pitch, wrap_pi(yaw), False)


def radii(lat: float, earth: EarthParams = WGS84) -> tuple[float, float]:
    """Meridian and prime-vertical radii (R_M, R_N)."""
    return _kern.radii(float(lat), earth.vector)


def normal_gravity(pos, earth: EarthParams = WGS84) -> float:
    """Somigliana normal gravity with first-order free-air correction (m/s^2)."""
    return _kern.gravity(float(pos[0]), float(pos[2]), earth.vector)[0]


def gravity_partials(pos, earth: EarthParams = WGS84) -> tuple[float, float, float]:
    """(g, dg/dlat, dg/dh)."""
    return _kern.gravity(float(pos[0]), float(pos[2]), earth.vector)


def _check_lat(lat: float) -> None:
    if abs(abs(lat) - np.pi / 2) < POLE_TOL:
        raise GeometryError(f"latitude {lat!r} is at a pole; transport rate is singular")


def earth_rates(pos, vel, earth: EarthParams = WGS84):
    """Return (omega_ie^n, omega_en^n, R_M, R_N) for a geodetic position and NED velocity."""
    _check_lat(float(pos[0]))
    return _kern.earth_rates(np.asarray(pos, dtype=float), np.asarray(vel, dtype=float), earth.vector)


def geodetic_to_ecef(pos, earth: EarthParams = WGS84) -> np.ndarray:
    lat, lon, h = float(pos[0]), float(pos[1]), float(pos[2])
    _, rn = radii(lat, earth)
    cl = np.cos(lat)
    return np.array(
        [(rn + h) * cl * np.cos(lon), (rn + h) * cl * np.sin(lon), (rn * (1.0 - earth.e2) + h) * np.sin(lat)]
    )


def ecef_to_geodetic(x, earth: EarthParams = WGS84, max_iter: int = 20) -> GeodeticPosition:
    """Inverse of :func:`geodetic_to_ecef` by fixed-point iteration on latitude."""
    x = np.asarray(x, dtype=float)
    p = float(np.hypot(x[0], x[1]))
    r = float(np.linalg.norm(x))
    if r < 1.0:
        raise GeometryError("point is at the earth's centre")
    lon = float(np.arctan2(x[1], x[0]))
    e2 = earth.e2
    lat = float(np.arctan2(x[2], p * (1.0 - e2)))
    h = 0.0
    for _ in range(max_iter):
        _, rn = radii(lat, earth)
        if p > 1e-3:
            h_new = p / np.cos(lat) - rn
        else:
            h_new = abs(x[2]) - rn * (1.0 - e2)
        lat_new = float(np.arctan2(x[2], p * (1.0 - e2 * rn / (rn + h_new))))
        done = abs(lat_new - lat) < 1e-15 and abs(h_new - h) < 1e-9
        lat, h = lat_new, float(h_new)
        if done:
            return GeodeticPosition(lat, lon, h)
    if abs(lat_new - lat) < 1e-12:
        return GeodeticPosition(lat, lon, h)
    raise GeometryError("ecef_to_geodetic did not converge")


def n_to_e_rotation(pos) -> np.ndarray:
    """R_n^e: NED axes expressed in ECEF."""
    lat, lon = float(pos[0]), float(pos[1])
    sl, cl, so, co = np.sin(lat), np.cos(lat), np.sin(lon), np.cos(lon)
    return np.array([[-sl * co, -so, -cl * co], [-sl * so, co, -cl * so], [cl, 0.0, -sl]])


def ned_scale(pos, earth: EarthParams = WGS84) -> np.ndarray:
    """Diagonal of D_R, mapping (dlat, dlon, dh) to NED metres (with dD = -dh)."""
    rm, rn = radii(float(pos[0]), earth)
    h = float(pos[2])
    return np.array([rm + h, (rn + h) * np.cos(pos[0]), -1.0])


def offset_position(pos, dned, earth: EarthParams = WGS84) -> np.ndarray:
    """Geodetic position displaced by a small NED vector (first order in the radii)."""
    pos = np.asarray(pos, dtype=float)
    return pos + np.asarray(dned, dtype=float) / ned_scale(pos, earth)


def position_difference(p_a, p_b, earth: EarthParams = WGS84) -> np.ndarray:
    """NED metres of p_a relative to p_b, linearised at p_b."""
    d = np.asarray(p_a, dtype=float) - np.asarray(p_b, dtype=float)
    d[1] = wrap_pi(d[1])
    return d * ned_scale(p_b, earth)
