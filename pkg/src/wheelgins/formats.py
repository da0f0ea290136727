"""Plain-text data files: IMU, GNSS, trajectory, parameter log, innovation log and metrics JSON.

Every file is whitespace-separated columns with ``#`` comment lines. The
column contracts are documented in FORMATS.md. Parsers read line by line,
reject lines longer than :data:`MAX_LINE` characters, report the offending
line number and require strictly increasing time.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import DataError
from .mech import ImuData, ImuSample
from .metrics import Trajectory
from .models import GnssData, GnssFix

MAX_LINE = 4096


@dataclass(frozen=True)
class Column:
    name: str
    unit: str
    fmt: str
    scale: float = 1.0  # file value = internal value * scale
    nan_ok: bool = False


RAD2DEG = 180.0 / math.pi

IMU_COLUMNS = (
    Column("t", "s", "%.17g"),
    *(Column(f"g{a}", "rad/s", "%.17g") for a in "xyz"),
    *(Column(f"a{a}", "m/s^2", "%.17g") for a in "xyz"),
)
GNSS_COLUMNS = (
    Column("t", "s", "%.17g"),
    Column("lat", "deg", "%.12f", RAD2DEG),
    Column("lon", "deg", "%.12f", RAD2DEG),
    Column("h", "m", "%.6f"),
    Column("sigma_n", "m", "%.6f"),
    Column("sigma_e", "m", "%.6f"),
    Column("sigma_d", "m", "%.6f"),
)
TRAJ_COLUMNS = (
    Column("t", "s", "%.6f"),
    Column("lat", "deg", "%.9f", RAD2DEG),
    Column("lon", "deg", "%.9f", RAD2DEG),
    Column("h", "m", "%.4f"),
    Column("vn", "m/s", "%.4f"),
    Column("ve", "m/s", "%.4f"),
    Column("vd", "m/s", "%.4f"),
    Column("roll", "deg", "%.9f", RAD2DEG),
    Column("pitch", "deg", "%.9f", RAD2DEG),
    Column("yaw", "deg", "%.9f", RAD2DEG),
)
PARAM_COLUMNS = (
    Column("t", "s", "%.6f"),
    Column("l_y", "m", "%.4f"),
    Column("l_z", "m", "%.4f"),
    Column("theta_m", "deg", "%.9f", RAD2DEG),
    Column("psi_m", "deg", "%.9f", RAD2DEG),
    Column("s_r", "-", "%.9f"),
    Column("std_l_y", "m", "%.4f"),
    Column("std_l_z", "m", "%.4f"),
    Column("std_theta_m", "deg", "%.9f", RAD2DEG),
    Column("std_psi_m", "deg", "%.9f", RAD2DEG),
    Column("std_s_r", "-", "%.9f"),
)
INNOV_COLUMNS = (
    Column("t", "s", "%.6f"),
    Column("kind", "0=gnss,1=velocity,2=wheel_rate", "%d"),
    Column("accepted", "0/1", "%d"),
    Column("nis", "-", "%.6f"),
    Column("z1", "m|m/s|rad/s", "%.9g"),
    Column("z2", "m|m/s|rad/s", "%.9g"),
    Column("z3", "m|m/s|nan", "%.9g", nan_ok=True),
)


# ------------------------------------------------------------------ reading


def _lines(path, max_line: int = MAX_LINE) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as f:
        n = 0
        while True:
            line = f.readline(max_line + 1)
            if not line:
                return
            n += 1
            if len(line) > max_line and not line.endswith("\n"):
                raise DataError(f"{path}:{n}: line exceeds {max_line} characters")
            yield n, line


def iter_rows(path, columns: Sequence[Column], max_line: int = MAX_LINE) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(line number, values in internal units)`` with strictly increasing time."""
    ncol = len(columns)
    scale = np.array([c.scale for c in columns])
    nan_ok = np.array([c.nan_ok for c in columns])
    last = -math.inf
    for n, line in _lines(path, max_line):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != ncol:
            raise DataError(f"{path}:{n}: expected {ncol} columns, found {len(parts)}")
        try:
            vals = np.array([float(p) for p in parts])
        except ValueError as exc:
            raise DataError(f"{path}:{n}: malformed number ({exc})") from None
        if np.any(~np.isfinite(vals) & ~(nan_ok & np.isnan(vals))):
            raise DataError(f"{path}:{n}: non-finite value")
        if not vals[0] > last:
            raise DataError(f"{path}:{n}: time {vals[0]!r} does not increase (previous {last!r})")
        last = vals[0]
        yield n, vals / scale


def _read(path, columns) -> np.ndarray:
    rows = [v for _, v in iter_rows(path, columns)]
    return np.array(rows, dtype=float).reshape(-1, len(columns))


def iter_imu(path) -> Iterator[ImuSample]:
    for _, v in iter_rows(path, IMU_COLUMNS):
        yield ImuSample(float(v[0]), v[1:4], v[4:7])


def parse_imu(path) -> ImuData:
    a = _read(path, IMU_COLUMNS)
    return ImuData(a[:, 0], a[:, 1:4], a[:, 4:7])


def iter_gnss(path) -> Iterator[GnssFix]:
    for n, v in iter_rows(path, GNSS_COLUMNS):
        if np.any(v[4:7] <= 0):
            raise DataError(f"{path}:{n}: GNSS std must be positive")
        yield GnssFix(float(v[0]), v[1:4], v[4:7])


def parse_gnss(path) -> GnssData:
    fixes = list(iter_gnss(path))
    if not fixes:
        return GnssData(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
    return GnssData(np.array([f.t for f in fixes]), np.array([f.pos for f in fixes]), np.array([f.std for f in fixes]))


def parse_trajectory(path) -> Trajectory:
    a = _read(path, TRAJ_COLUMNS)
    return Trajectory(a[:, 0], a[:, 1:4], a[:, 4:7], a[:, 7:10])


parse_truth = parse_trajectory
parse_nav = parse_trajectory


def parse_param_log(path) -> np.ndarray:
    """Rows in SI units (angles rad), column order as :data:`PARAM_COLUMNS`."""
    a = _read(path, PARAM_COLUMNS)
    if np.any(a[:, 6:] < 0):
        raise DataError(f"{path}: negative standard deviation")
    return a


def parse_innovations(path) -> np.ndarray:
    return _read(path, INNOV_COLUMNS)


# ------------------------------------------------------------------ writing


def _header(columns: Sequence[Column], title: str) -> str:
    names = " ".join(c.name for c in columns)
    units = " ".join(f"{c.name}[{c.unit}]" for c in columns)
    return f"# {title}\n# {units}\n# {names}\n"


def write_rows(path, columns: Sequence[Column], rows: Iterable[Sequence[float]], title: str) -> int:
    """Write rows given in internal units; returns the number of data lines."""
    fmt = " ".join(c.fmt for c in columns) + "\n"
    scale = np.array([c.scale for c in columns])
    ints = [i for i, c in enumerate(columns) if c.fmt == "%d"]
    n = 0
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(_header(columns, title))
        for r in rows:
            v = np.asarray(r, dtype=float) * scale
            vals = [int(x) if i in ints else float(x) for i, x in enumerate(v)]
            f.write(fmt % tuple(vals))
            n += 1
    return n


def write_imu(path, imu: ImuData) -> int:
    rows = np.column_stack([imu.t, imu.gyro, imu.accel]) if len(imu) else []
    return write_rows(path, IMU_COLUMNS, rows, "wheelgins IMU: body-frame angular rate and specific force")


def write_gnss(path, gnss: GnssData) -> int:
    rows = np.column_stack([gnss.t, gnss.pos, gnss.std]) if len(gnss) else []
    return write_rows(path, GNSS_COLUMNS, rows, "wheelgins GNSS: antenna positions with NED 1-sigma")


def write_trajectory(path, traj: Trajectory, title: str = "wheelgins trajectory") -> int:
    rows = np.column_stack([traj.t, traj.pos, traj.vel, traj.euler]) if len(traj) else []
    return write_rows(path, TRAJ_COLUMNS, rows, title)


def write_nav(path, traj: Trajectory) -> int:
    return write_trajectory(path, traj, "wheelgins navigation estimate (IMU point, body ZYX Euler)")


def write_param_log(path, records: np.ndarray) -> int:
    rec = np.asarray(records, dtype=float).reshape(-1, len(PARAM_COLUMNS))
    if np.any(rec[:, 6:] < 0):
        raise ValueError("standard deviations must be non-negative")
    return write_rows(path, PARAM_COLUMNS, rec, "wheelgins installation-parameter log")


def write_innovations(path, t, kind, accepted, nis, z) -> int:
    rows = np.column_stack([t, kind, accepted, nis, z]) if len(t) else []
    return write_rows(path, INNOV_COLUMNS, rows, "wheelgins per-update innovations (predicted minus observed)")


def _clean_json(x):
    if isinstance(x, dict):
        return {str(k): _clean_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean_json(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _clean_json(x.tolist())
    return x


def write_metrics(path, report, extra: Optional[dict] = None) -> None:
    """JSON dump of a report (``to_dict()`` or a plain dict); non-finite numbers become null."""
    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if extra:
        d.update(extra)
    dn = os.path.dirname(os.fspath(path))
    if dn:
        os.makedirs(dn, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean_json(d), f, indent=2, sort_keys=True)
        f.write("\n")


def read_metrics(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_error_csv(path, series) -> int:
    """Per-epoch errors for plotting: t, dN, dE, dD (m), horizontal (m), heading (deg)."""
    rows = np.column_stack([series.t, series.ned, series.horizontal, series.heading_deg])
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,dn,de,dd,horizontal,heading_deg\n")
        for r in rows:
            f.write("%.6f,%.4f,%.4f,%.4f,%.4f,%.9f\n" % tuple(r))
    return len(rows)


PARSERS: dict[str, Callable] = {
    "imu": parse_imu,
    "gnss": parse_gnss,
    "trajectory": parse_trajectory,
    "params": parse_param_log,
    "innovations": parse_innovations,
}
