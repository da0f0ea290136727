#!/usr/bin/env python3
"""Position NEES Monte Carlo on the nominal scenario.

    python scripts/nees_montecarlo.py --runs 20 --velocity-std 0.005
"""

import argparse
import json

from wheelgins import scenarios
from wheelgins.experiments import monte_carlo
from wheelgins.models import VelocityNoise
from wheelgins.pipeline import FilterConfig
from wheelgins.sim import SimConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--velocity-std", type=float, default=0.005,
                    help="wheel velocity constraint std (m/s), all three axes")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--no-perturb", action="store_true", help="start every run from the true state")
    ap.add_argument("--json", help="write the summary here")
    args = ap.parse_args()

    sv = args.velocity_std
    fcfg = FilterConfig(static_init=9.0, velocity_noise=VelocityNoise(sv, sv, sv), check_psd=True)
    mc = monte_carlo(scenarios.nominal(), SimConfig(), fcfg, range(args.runs), not args.no_perturb, args.workers)
    lo, hi = mc.envelope
    for r in mc.runs:
        print(f"seed {r.seed:3d}: mean NEES {r.nees.mean():6.3f}  horizontal RMSE {r.horizontal_rmse:.3f} m  "
              f"rejected {r.rejected}/{r.updates}  min eig/trace {r.worst_psd:.1e}")
    print(f"mean position NEES {mc.overall_nees:.3f}, 95% envelope [{lo:.3f}, {hi:.3f}], "
          f"{mc.fraction_inside:.0%} of epochs inside: {'consistent' if mc.consistent else 'INCONSISTENT'}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(mc.to_dict(), f, indent=1)


if __name__ == "__main__":
    main()
