"""Bundled trajectories used by the CLI, the acceptance suite and the scripts."""

from __future__ import annotations

import numpy as np

from .geo import GeodeticPosition
from .sim import Arc, Dwell, Straight, TrajectorySpec

ORIGIN = GeodeticPosition(np.deg2rad(30.5), np.deg2rad(114.3), 20.0)


def loop_600m(speed: float = 2.0, radius: float = 30.0, origin=ORIGIN) -> TrajectorySpec:
    """600 m racetrack starting and ending mid-straight, so it closes exactly."""
    L = (600.0 - 2 * np.pi * radius) / 2
    return TrajectorySpec(origin, 0.3, [
        Straight(L / 2, speed), Arc(radius, np.pi, speed), Straight(L, speed), Arc(radius, np.pi, speed), Straight(L / 2, speed),
    ])


def nominal(speed: float = 2.0, origin=ORIGIN) -> TrajectorySpec:
    """10 s standstill, a 150 m straight start, then a rounded-square loop (about 380 s)."""
    segs = [Dwell(10.0), Straight(150.0, speed)]
    for _ in range(4):
        segs += [Arc(30.0, np.pi / 2, speed), Straight(100.0, speed)]
    return TrajectorySpec(origin, 0.3, segs)


def outage_2km(speed: float = 6.0, origin=ORIGIN) -> TrajectorySpec:
    """2 km at 6 m/s: a Z-shaped route whose 900 m middle straight hosts the outages.

    Motion starts at 10 s; the middle straight (curvature blends excluded) runs
    from about 111 s to 260 s, so windows of up to 120 s starting at
    ``OUTAGE_START`` stay on it.
    """
    R = 40.0
    segs = [Dwell(10.0), Straight(485.0, speed), Arc(R, np.pi / 2, speed), Straight(900.0, speed),
            Arc(R, -np.pi / 2, speed), Straight(485.0, speed)]
    return TrajectorySpec(origin, 0.0, segs)


OUTAGE_START = 120.0


SCENARIOS = {"loop_600m": loop_600m, "nominal": nominal, "outage_2km": outage_2km}


def get(name: str) -> TrajectorySpec:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
