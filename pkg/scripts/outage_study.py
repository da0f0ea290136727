#!/usr/bin/env python3
"""Horizontal drift during GNSS outages on the 2 km route, with and without
online radius-scale estimation.

    python scripts/outage_study.py --seeds 10 --lengths 30 60 120
"""

import argparse
import json

import numpy as np

from wheelgins import scenarios
from wheelgins.experiments import outage_study
from wheelgins.pipeline import FilterConfig
from wheelgins.sim import InstallTruth, SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at 0")
    ap.add_argument("--lengths", type=float, nargs="+", default=[30.0, 60.0, 120.0])
    ap.add_argument("--start", type=float, default=scenarios.OUTAGE_START)
    ap.add_argument("--radius-scale", type=float, default=0.005, help="true s_r")
    ap.add_argument("--json", help="write per-seed results here")
    args = ap.parse_args()

    variants = {"estimated": FilterConfig(static_init=9.0),
                "fixed": FilterConfig(static_init=9.0, estimate_radius=False)}
    stats = outage_study(scenarios.outage_2km(), SimConfig(install=InstallTruth(s_r=args.radius_scale)),
                         variants, range(args.seeds), args.start, args.lengths)
    speed = 6.0
    print("variant    length  distance  mean RMSE  mean MAX  worst MAX  MAX/distance")
    for name in variants:
        for L in args.lengths:
            s = [x for x in stats if x.variant == name and x.length == L]
            rmse, mx = np.mean([x.rmse for x in s]), np.mean([x.max for x in s])
            worst = max(x.max for x in s)
            print(f"{name:9}  {L:6.0f}  {speed * L:8.0f}  {rmse:9.3f}  {mx:8.3f}  {worst:9.3f}  {100 * mx / (speed * L):11.3f}%")
    if args.json:
        rows = [{"seed": x.seed, "variant": x.variant, "length": x.length, "rmse": x.rmse, "max": x.max,
                 "end_error": x.end_error.tolist()} for x in stats]
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=1)


if __name__ == "__main__":
    main()
