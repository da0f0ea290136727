"""Command-line interface: simulate, fuse, evaluate, report-params, montecarlo.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 divergence,
4 no convergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import scenarios
from .config import RunConfig, parse_config
from .errors import ConfigError, DataError, GeometryError, NoConvergence, WheelGinsError
from .experiments import monte_carlo, outage_study, result_trajectory, truth_trajectory
from .formats import (
    parse_gnss,
    parse_imu,
    parse_param_log,
    parse_trajectory,
    write_error_csv,
    write_gnss,
    write_imu,
    write_innovations,
    write_metrics,
    write_nav,
    write_param_log,
    write_trajectory,
)
from .geo import euler_to_rotation
from .mech import DEG, NavState
from .metrics import error_series, evaluate, report_params
from .pipeline import FusionSession
from .sim import simulate

OUT_FILES = {"nav": "nav.txt", "params": "params.txt", "innovations": "innovations.txt",
             "metrics": "metrics.json", "errors": "errors.csv", "report": "params_report.json",
             "montecarlo": "montecarlo.json"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors share exit code 1 with config errors
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wheelgins", description="Wheel-mounted IMU / GNSS integrated navigation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [
        ("simulate", "synthesize IMU, GNSS and truth files for the configured scenario"),
        ("fuse", "run the filter over IMU/GNSS files"),
        ("evaluate", "compare the navigation output with truth"),
        ("report-params", "summarise installation-parameter convergence"),
        ("montecarlo", "multi-seed consistency and outage study in memory"),
    ]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="INI run configuration")
        s.add_argument("--seed", type=int, help="override [simulation] seed")
        s.add_argument("--outages", help='override outage windows, e.g. "100:160,300:330" (s)')
        s.add_argument("--disable", action="append", default=[], choices=["velocity", "gnss", "wheel-rate"],
                       help="switch a measurement type off (repeatable)")
        s.add_argument("--out", help="output directory (default [paths] output)")
    return p


def _out(cfg: RunConfig, args, key: str) -> str:
    return os.path.join(cfg.path("output", args.out), OUT_FILES[key])


def _spec(cfg: RunConfig):
    try:
        return scenarios.get(cfg["scenario"]["name"])
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def _sim_config(cfg: RunConfig):
    sc = cfg.sim_config()
    try:
        sc.validate()
    except ValueError as exc:
        raise ConfigError(f"[simulation]: {exc}") from None
    return sc


# ------------------------------------------------------------------ commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    spec = _spec(cfg)
    sc = _sim_config(cfg)
    duration = cfg["scenario"]["duration"]
    if duration is not None and duration <= 0:
        raise ConfigError("[scenario] duration must be positive")
    try:
        sim = simulate(spec, sc, duration)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        paths = {k: os.path.join(args.out, f"{k}.txt") for k in ("imu", "gnss", "truth")}
    else:
        paths = {k: cfg.path(k) for k in ("imu", "gnss", "truth")}
    write_imu(paths["imu"], sim.imu)
    write_gnss(paths["gnss"], sim.gnss)
    write_trajectory(paths["truth"], truth_trajectory(sim), "wheelgins truth (IMU point, body ZYX Euler)")
    tr = sim.truth
    dur = float(tr.t[-1] - tr.t[0])
    print(f"scenario {cfg['scenario']['name']}: duration {dur:.1f} s, distance {tr.distance:.1f} m, "
          f"mean speed {tr.distance / dur if dur > 0 else 0.0:.2f} m/s")
    for k, v in paths.items():
        print(f"  {k}: {v}")
    return 0


def _initial_nav(cfg: RunConfig, imu, truth) -> NavState:
    ini = cfg["initial"]
    t0 = float(imu.t[0])
    if ini["lat_deg"] is not None:
        # heading is the vehicle heading; roll and pitch come from accelerometer levelling
        n = max(1, min(len(imu), int(np.searchsorted(imu.t, t0 + max(cfg["features"]["static_init"], 0.0)))))
        f = imu.accel[:n].mean(axis=0)
        roll = np.arctan2(-f[1], -f[2])
        pitch = np.arctan2(f[0], np.hypot(f[1], f[2]))
        yaw = ini["heading_deg"] * DEG + np.pi / 2
        pos = np.array([ini["lat_deg"] * DEG, ini["lon_deg"] * DEG, ini["height"]])
        return NavState(t0, pos, np.array(ini["velocity"]), euler_to_rotation((roll, pitch, yaw)))
    if truth is None:
        raise ConfigError("[initial] is empty and no truth file is available for the initial state")
    if not truth.t[0] - 1e-9 <= t0 <= truth.t[-1]:
        raise DataError("truth does not cover the first IMU epoch")
    tr = truth.interpolate(np.array([t0]))
    return NavState(t0, tr.pos[0], tr.vel[0], euler_to_rotation(tr.euler[0]))


def cmd_fuse(cfg: RunConfig, args) -> int:
    fcfg = cfg.filter_config()
    install0 = cfg.install0()
    imu = parse_imu(cfg.path("imu"))
    if len(imu) < 2:
        raise DataError("IMU file holds fewer than two samples")
    gnss = parse_gnss(cfg.path("gnss")) if fcfg.use_gnss else None
    truth = None
    if cfg["initial"]["lat_deg"] is None:
        truth = parse_trajectory(cfg.path("truth"))
    nav0 = _initial_nav(cfg, imu, truth)
    try:
        res = FusionSession(fcfg, imu, gnss, nav0, install0, earth=cfg.sim_config().earth()).run().result()
    except GeometryError:
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from None
    write_nav(_out(cfg, args, "nav"), result_trajectory(res))
    write_param_log(_out(cfg, args, "params"), res.param_records())
    write_innovations(_out(cfg, args, "innovations"), res.innov_t, res.innov_kind, res.innov_accepted,
                      res.innov_nis, res.innov_z)
    print(f"fused {res.t[-1] - res.t[0]:.1f} s: {res.count('gnss', True)} GNSS, {res.count('velocity', True)} velocity, "
          f"{res.count('wheel_rate', True)} wheel-rate updates accepted "
          f"({int((~res.innov_accepted).sum())} rejected)")
    if res.fixed_at is not None:
        print(f"mounting angles fixed at t = {res.fixed_at:.1f} s")
    print(f"final leverarm ({res.lever[-1, 0]:.4f}, {res.lever[-1, 1]:.4f}) m, mount "
          f"({res.mount[-1, 0] / DEG:.3f}, {res.mount[-1, 1] / DEG:.3f}) deg, s_r {res.radius_scale[-1]:.5f}")
    print(f"outputs in {cfg.path('output', args.out)}")
    return 0


def _param_summaries(cfg: RunConfig, path: str):
    rec = parse_param_log(path)
    names = cfg.estimated_params()
    return report_params(rec, cfg.truth_install(), cfg.bands(), names)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    nav_path = _out(cfg, args, "nav")
    est = parse_trajectory(nav_path)
    truth = parse_trajectory(cfg.path("truth"))
    earth = cfg.sim_config().earth()
    rep = evaluate(est, truth, cfg.outages, earth)
    ppath = _out(cfg, args, "params")
    if os.path.exists(ppath):
        rep.convergence = {s.name: s.convergence_time for s in _param_summaries(cfg, ppath)}
    write_metrics(_out(cfg, args, "metrics"), rep)
    if cfg["evaluate"]["error_csv"]:
        write_error_csv(_out(cfg, args, "errors"), error_series(est, truth, earth))
    print(f"horizontal RMSE {rep.horizontal_rmse:.4f} m, height RMSE {rep.height_rmse:.4f} m, "
          f"heading RMSE {rep.heading_rmse_deg:.4f} deg over {rep.epochs} epochs")
    for w in rep.windows:
        if w.epochs:
            print(f"  outage {w.start:g}-{w.end:g} s: RMSE {w.rmse:.3f} m, MAX {w.max:.3f} m")
        else:
            print(f"  outage {w.start:g}-{w.end:g} s: no epochs")
    for k, v in rep.convergence.items():
        print(f"  {k}: " + (f"converged at {v:.1f} s" if v is not None else "no convergence"))
    return 0


def cmd_report_params(cfg: RunConfig, args) -> int:
    ppath = _out(cfg, args, "params")
    summ = _param_summaries(cfg, ppath)
    write_metrics(_out(cfg, args, "report"), {"parameters": [
        {"name": s.name, "convergence_time": s.convergence_time, "final_error": s.final_error,
         "final_std": s.final_std, "band": s.band} for s in summ]})
    unit = {"lever": (1.0, "m"), "mount": (1 / DEG, "deg"), "radius_scale": (1.0, "")}
    for s in summ:
        k, u = unit[s.name]
        err = ", ".join(f"{e * k:+.4g}" for e in s.final_error)
        std = ", ".join(f"{e * k:.3g}" for e in s.final_std)
        ct = f"{s.convergence_time:.1f} s" if s.converged else "no convergence"
        print(f"{s.name:13s} convergence {ct:>16s}  final error ({err}) {u}  1-sigma ({std}) {u}")
    failed = [s.name for s in summ if not s.converged]
    if failed:
        raise NoConvergence("no convergence: " + ", ".join(failed))
    return 0


def cmd_montecarlo(cfg: RunConfig, args) -> int:
    spec = _spec(cfg)
    sc = _sim_config(cfg)
    fcfg = cfg.filter_config()
    mc = cfg["montecarlo"]
    seeds = range(sc.seed if args.seed is not None else mc["first_seed"],
                  (sc.seed if args.seed is not None else mc["first_seed"]) + mc["runs"])
    summary = monte_carlo(spec, sc, replace(fcfg, outages=()), seeds, mc["perturb_initial"], mc["workers"])
    out = {"scenario": cfg["scenario"]["name"], "monte_carlo": summary.to_dict()}
    lo, hi = summary.envelope
    print(f"{len(summary.runs)} runs: mean position NEES {summary.overall_nees:.3f} "
          f"(95% envelope {lo:.3f}..{hi:.3f}), {summary.fraction_inside:.0%} of epochs inside")
    if mc["outage_lengths"]:
        start = mc["outage_start"]
        if start is None:
            raise ConfigError("[montecarlo] outage_start is required with outage_lengths")
        stats = outage_study(spec, sc, {"filter": replace(fcfg, outages=())}, seeds, start, mc["outage_lengths"])
        rows = []
        for L in mc["outage_lengths"]:
            s = [x for x in stats if x.length == L]
            rows.append({"length": L, "rmse_mean": float(np.mean([x.rmse for x in s])),
                         "max_mean": float(np.mean([x.max for x in s])),
                         "per_seed": [{"seed": x.seed, "rmse": x.rmse, "max": x.max} for x in s]})
            print(f"  outage {L:g} s from {start:g} s: mean RMSE {rows[-1]['rmse_mean']:.3f} m, "
                  f"mean MAX {rows[-1]['max_mean']:.3f} m")
        out["outages"] = rows
    write_metrics(_out(cfg, args, "montecarlo"), out)
    return 0


COMMANDS = {"simulate": cmd_simulate, "fuse": cmd_fuse, "evaluate": cmd_evaluate,
            "report-params": cmd_report_params, "montecarlo": cmd_montecarlo}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_overrides(args.seed, args.outages, args.disable)
        return COMMANDS[args.command](cfg, args)
    except WheelGinsError as exc:
        print(f"wheelgins {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"wheelgins {args.command}: missing file: {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"wheelgins {args.command}: I/O error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
