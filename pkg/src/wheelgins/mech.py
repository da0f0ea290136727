"""Strapdown inertial mechanization in the local-level NED frame."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kern
from .geo import WGS84, EarthParams, is_rotation

MAX_DT = 0.02
DEG = np.pi / 180.0

# ICM20602-class MEMS IMU error budget
ICM20602 = dict(
    gyro_bias=200.0 * DEG / 3600.0,  # rad/s
    arw=0.24 * DEG / 60.0,  # rad/sqrt(s)
    accel_bias=0.01,  # m/s^2
    vrw=3.0 / 60.0,  # m/s/sqrt(s)
    gyro_scale=0.03,
    accel_scale=0.03,
)


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray  # rad/s, body
    accel: np.ndarray  # m/s^2 specific force, body


@dataclass
class ImuData:
    """Column-oriented IMU stream; iterating yields :class:`ImuSample`."""

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        self.t = np.ascontiguousarray(self.t, dtype=float)
        self.gyro = np.ascontiguousarray(self.gyro, dtype=float).reshape(-1, 3)
        self.accel = np.ascontiguousarray(self.accel, dtype=float).reshape(-1, 3)
        if not (len(self.t) == len(self.gyro) == len(self.accel)):
            raise ValueError("IMU columns differ in length")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.gyro[i].copy(), self.accel[i].copy())

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self)):
            yield self[i]


@dataclass
class NavState:
    """Navigation solution: geodetic ``pos`` (lat, lon rad; h m), NED ``vel``, ``att`` = R_b^n."""

    t: float
    pos: np.ndarray
    vel: np.ndarray
    att: np.ndarray

    def __post_init__(self):
        self.pos = np.array(self.pos, dtype=float)
        self.vel = np.array(self.vel, dtype=float)
        self.att = np.array(self.att, dtype=float)

    def copy(self) -> "NavState":
        return NavState(self.t, self.pos.copy(), self.vel.copy(), self.att.copy())

    def validate(self, tol: float = 1e-9) -> None:
        if not is_rotation(self.att, tol):
            raise ValueError("attitude is not a rotation matrix")
        if np.linalg.norm(self.vel) >= 100.0:
            raise ValueError("velocity beyond the ground-vehicle sanity bound")


@dataclass
class ImuErrors:
    """Gyro/accel biases (rad/s, m/s^2) and scale factors (unitless)."""

    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_scale: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("gyro_bias", "accel_bias", "gyro_scale", "accel_scale"):
            setattr(self, name, np.array(getattr(self, name), dtype=float).reshape(3))

    def copy(self) -> "ImuErrors":
        return ImuErrors(self.gyro_bias.copy(), self.accel_bias.copy(), self.gyro_scale.copy(), self.accel_scale.copy())


def compensate_arrays(gyro, accel, e: ImuErrors) -> tuple[np.ndarray, np.ndarray]:
    if np.any(e.gyro_scale <= -1.0) or np.any(e.accel_scale <= -1.0):
        raise ValueError("scale factor <= -1 is not invertible")
    return (gyro - e.gyro_bias) / (1.0 + e.gyro_scale), (accel - e.accel_bias) / (1.0 + e.accel_scale)


def compensate(raw: ImuSample, e: ImuErrors) -> ImuSample:
    """Invert ``meas = (I + diag(s)) true + b`` for both sensors."""
    g, a = compensate_arrays(np.asarray(raw.gyro, float), np.asarray(raw.accel, float), e)
    return ImuSample(raw.t, g, a)


def _check_dt(t0: float, t1: float) -> float:
    dt = t1 - t0
    if not dt > 0.0:
        raise ValueError(f"non-monotonic IMU time: {t0!r} -> {t1!r}")
    if dt > MAX_DT + 1e-12:
        raise ValueError(f"IMU interval {dt:.4f} s exceeds {MAX_DT} s")
    return dt


def propagate(
    s: NavState,
    prev: ImuSample,
    cur: ImuSample,
    history: Sequence[ImuSample] = (),
    earth: EarthParams = WGS84,
) -> NavState:
    """Advance ``s`` (valid at ``prev.t``) to ``cur.t`` using compensated samples.

    Attitude uses a rotation-vector update. With only ``prev`` and ``cur`` the
    rate is modelled as linear over the interval (two-sample coning term).
    Passing up to two earlier samples in ``history`` (oldest first) raises the
    order of the rate model, which removes the drift that a spinning, turning
    wheel otherwise accumulates. Samples that are not evenly spaced with the
    current interval are ignored.
    """
    dt = _check_dt(prev.t, cur.t)
    samples = list(history)[-2:] + [prev, cur]
    t = np.array([x.t for x in samples])
    for a, b in zip(t[:-1], t[1:]):
        _check_dt(a, b)
    k = len(samples) - 1
    m = _kern.history_order(t, k, 0)
    W = np.zeros((4, 3))
    for r in range(m):
        W[4 - m + r] = samples[k - m + 1 + r].gyro
    p, v, R = _kern.mech_step(
        s.pos, s.vel, s.att, W, m,
        np.asarray(prev.accel, dtype=float), np.asarray(cur.accel, dtype=float), dt, earth.vector,
    )
    return NavState(cur.t, p, v, R)


def run_ins(nav0: NavState, imu: ImuData, earth: EarthParams = WGS84, start: int = 0, stop: Optional[int] = None):
    """Free-inertial propagation over ``imu[start:stop]``; ``nav0`` is valid at ``imu.t[start]``.

    Returns arrays (t, pos, vel, att) including the initial epoch.
    """
    stop = len(imu) if stop is None else stop
    t = imu.t
    d = np.diff(t[start:stop])
    if np.any(d <= 0):
        raise ValueError("non-monotonic IMU time")
    if np.any(d > MAX_DT + 1e-12):
        raise ValueError(f"IMU interval exceeds {MAX_DT} s")
    pos, vel, att = _kern.run_ins(
        t, imu.gyro, imu.accel, np.asarray(nav0.pos, float), np.asarray(nav0.vel, float),
        np.asarray(nav0.att, float), earth.vector, start, stop,
    )
    return t[start:stop].copy(), pos, vel, att
