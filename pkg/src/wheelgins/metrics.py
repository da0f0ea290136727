"""Trajectory evaluation against truth and parameter-convergence summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .geo import GIMBAL_TOL, WGS84, EarthParams, wrap_pi
from .mech import DEG


def euler_from_attitudes(att) -> np.ndarray:
    """Vectorised :func:`rotation_to_euler` for a stack of R_b^n (N, 3, 3)."""
    R = np.asarray(att, dtype=float).reshape(-1, 3, 3)
    pitch = np.arcsin(np.clip(-R[:, 2, 0], -1.0, 1.0))
    roll = np.arctan2(R[:, 2, 1], R[:, 2, 2])
    yaw = np.arctan2(R[:, 1, 0], R[:, 0, 0])
    lock = np.abs(np.abs(pitch) - np.pi / 2) < GIMBAL_TOL
    if np.any(lock):
        pitch[lock] = np.copysign(np.pi / 2, -R[lock, 2, 0])
        roll[lock] = 0.0
        yaw[lock] = np.arctan2(-R[lock, 0, 1], R[lock, 1, 1])
    return np.stack([wrap_pi(roll), pitch, wrap_pi(yaw)], axis=1)


@dataclass
class Trajectory:
    """Time series of geodetic ``pos`` (rad, rad, m), NED ``vel`` and ZYX ``euler`` (rad)."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    euler: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        n = len(self.t)
        self.pos = np.asarray(self.pos, dtype=float).reshape(n, 3)
        self.vel = np.asarray(self.vel, dtype=float).reshape(n, 3)
        self.euler = np.asarray(self.euler, dtype=float).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_attitudes(cls, t, pos, vel, att) -> "Trajectory":
        return cls(t, pos, vel, euler_from_attitudes(att))

    def interpolate(self, t: np.ndarray) -> "Trajectory":
        """Linear interpolation; angles are unwrapped first and re-wrapped after."""
        cols = lambda a: np.stack([np.interp(t, self.t, a[:, i]) for i in range(3)], axis=1)  # noqa: E731
        eul = wrap_pi(cols(np.unwrap(self.euler, axis=0)))
        return Trajectory(t, cols(self.pos), cols(self.vel), eul)


@dataclass
class WindowStats:
    start: float
    end: float
    epochs: int
    rmse: Optional[float]
    max: Optional[float]


@dataclass
class MetricsReport:
    """Horizontal/height/heading RMSE, per-window drift and convergence times (s)."""

    epochs: int
    horizontal_rmse: float
    height_rmse: float
    heading_rmse_deg: float
    windows: list = field(default_factory=list)
    convergence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ErrorSeries:
    t: np.ndarray
    ned: np.ndarray  # (N, 3) position error, m
    horizontal: np.ndarray
    heading_deg: np.ndarray


def error_series(est: Trajectory, truth: Trajectory, earth: EarthParams = WGS84) -> ErrorSeries:
    """Errors of ``est`` at its own epochs, truth interpolated; epochs outside truth are dropped."""
    if len(truth) < 2:
        raise DataError("truth needs at least two records")
    m = (est.t >= truth.t[0] - 1e-9) & (est.t <= truth.t[-1] + 1e-9)
    if not np.any(m):
        raise DataError("estimate and truth time ranges are disjoint")
    t = est.t[m]
    tr = truth.interpolate(np.clip(t, truth.t[0], truth.t[-1]))
    lat = tr.pos[:, 0]
    a, e2 = earth.a, earth.e2
    s2 = np.sin(lat) ** 2
    rn = a / np.sqrt(1 - e2 * s2)
    rm = rn * (1 - e2) / (1 - e2 * s2)
    d = est.pos[m] - tr.pos
    d[:, 1] = wrap_pi(d[:, 1])
    ned = np.stack([d[:, 0] * (rm + tr.pos[:, 2]), d[:, 1] * (rn + tr.pos[:, 2]) * np.cos(lat), -d[:, 2]], axis=1)
    head = np.rad2deg(wrap_pi(est.euler[m, 2] - tr.euler[:, 2]))
    return ErrorSeries(t, ned, np.hypot(ned[:, 0], ned[:, 1]), head)


def _rms(x) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if len(x) else 0.0


def evaluate(
    est: Trajectory,
    truth: Trajectory,
    windows: Sequence[tuple] = (),
    earth: EarthParams = WGS84,
) -> MetricsReport:
    """Position and heading accuracy; window statistics use epochs with ``a <= t < b``."""
    es = error_series(est, truth, earth)
    stats = []
    for a, b in windows:
        w = (es.t >= a) & (es.t < b)
        h = es.horizontal[w]
        stats.append(WindowStats(float(a), float(b), int(w.sum()), _rms(h) if len(h) else None,
                                 float(h.max()) if len(h) else None))
    return MetricsReport(len(es.t), _rms(es.horizontal), _rms(es.ned[:, 2]), _rms(es.heading_deg), stats)


# ------------------------------------------------------------- convergence


@dataclass
class ParamBands:
    """Convergence bands around truth and the hold time."""

    lever: float = 0.005  # m
    mount: float = 0.1 * DEG  # rad
    radius_scale: float = 0.001
    hold: float = 10.0  # s


def convergence_time(t, est, truth, band: float, hold: float = 10.0) -> Optional[float]:
    """Start of the first interval in which every component stays within ``band`` of truth
    for at least ``hold`` seconds of logged data. ``None`` if that never happens."""
    t = np.asarray(t, dtype=float)
    err = np.abs(np.asarray(est, dtype=float).reshape(len(t), -1) - np.asarray(truth, dtype=float).reshape(1, -1))
    inside = np.all(err <= band, axis=1)
    start = None
    for ti, ok in zip(t, inside):
        if not ok:
            start = None
            continue
        if start is None:
            start = ti
        if ti - start >= hold - 1e-9:
            return float(start)
    return None


@dataclass
class ParamSummary:
    name: str
    convergence_time: Optional[float]
    final_error: list
    final_std: list
    band: float

    @property
    def converged(self) -> bool:
        return self.convergence_time is not None


PARAM_COLUMNS = {"lever": (slice(1, 3), slice(6, 8)), "mount": (slice(3, 5), slice(8, 10)), "radius_scale": (slice(5, 6), slice(10, 11))}


def report_params(records: np.ndarray, truth: dict, bands: ParamBands = ParamBands(), names=None) -> list[ParamSummary]:
    """Summaries for a param log (columns as in :meth:`FusionResult.param_records`, SI units).

    ``truth`` maps ``lever``/``mount``/``radius_scale`` to true values; ``names``
    restricts the report to the estimated parameters.
    """
    rec = np.asarray(records, dtype=float).reshape(-1, 11)
    if len(rec) == 0:
        raise DataError("parameter log is empty")
    names = list(names) if names is not None else list(PARAM_COLUMNS)
    out = []
    for name in names:
        vs, ss = PARAM_COLUMNS[name]
        band = getattr(bands, name)
        tv = np.atleast_1d(np.asarray(truth[name], dtype=float))
        ct = convergence_time(rec[:, 0], rec[:, vs], tv, band, bands.hold)
        out.append(ParamSummary(name, ct, (rec[-1, vs] - tv).tolist(), rec[-1, ss].tolist(), band))
    return out
