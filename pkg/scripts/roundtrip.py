#!/usr/bin/env python3
"""Free-inertial replay of clean simulated IMU data against its own truth.

Shows the mechanization error on each bundled scenario and how it shrinks with
the IMU rate.

    python scripts/roundtrip.py --rates 125 250 500
"""

import argparse

from wheelgins import scenarios
from wheelgins.sim import SimConfig, roundtrip_check


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rates", type=float, nargs="+", default=[125.0, 250.0, 500.0])
    ap.add_argument("--scenario", default="loop_600m", choices=sorted(scenarios.SCENARIOS))
    args = ap.parse_args()

    spec = scenarios.get(args.scenario)
    prev = None
    for rate in args.rates:
        err = roundtrip_check(spec, SimConfig(imu_rate=rate))
        ratio = "" if prev is None else f"  (ratio {prev / err:.2f})"
        print(f"{args.scenario} at {rate:g} Hz: max position error {err:.3e} m{ratio}")
        prev = err


if __name__ == "__main__":
    main()
