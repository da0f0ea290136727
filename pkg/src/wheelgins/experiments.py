"""Simulation-backed experiment drivers: single runs, outage studies and NEES Monte Carlo."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .geo import exp_so3, ned_scale
from .mech import NavState
from .metrics import Trajectory, evaluate
from .pipeline import FilterConfig, FusionResult, FusionSession
from .sim import SimConfig, SimResult, TrajectorySpec, simulate
from .state import InstallationParams


def truth_trajectory(sim: SimResult) -> Trajectory:
    """IMU-point truth at the IMU epochs (what the filter estimates)."""
    tr = sim.imu_truth
    return Trajectory.from_attitudes(tr.t, tr.pos_imu, tr.vel_imu, tr.att)


def result_trajectory(res: FusionResult) -> Trajectory:
    return Trajectory.from_attitudes(res.t, res.pos, res.vel, res.att)


def default_install(sim: SimResult) -> InstallationParams:
    """Filter start values: zero leverarm, mount and radius scale, measured radius."""
    return InstallationParams(r_meas=sim.r_meas, l_gnss_v=sim.config.l_gnss_v)


def perturbed_nav(nav: NavState, cfg: FilterConfig, rng: np.random.Generator) -> NavState:
    """Initial state drawn from the filter's initial position/velocity/attitude covariance."""
    ini = cfg.initial
    dp = rng.normal(0.0, ini.pos, 3)
    dv = rng.normal(0.0, ini.vel, 3)
    dphi = rng.normal(0.0, 1.0, 3) * np.asarray(ini.att, dtype=float)
    return NavState(nav.t, nav.pos + dp / ned_scale(nav.pos), nav.vel + dv, exp_so3(-dphi) @ nav.att)


def session(sim: SimResult, cfg: FilterConfig, nav0: Optional[NavState] = None,
            install0: Optional[InstallationParams] = None) -> FusionSession:
    return FusionSession(cfg, sim.imu, sim.gnss, nav0 or sim.initial_nav(), install0 or default_install(sim),
                         earth=sim.config.earth())


def position_errors(res: FusionResult, sim: SimResult) -> np.ndarray:
    """NED position error (m) of the filter at its log epochs."""
    tr = sim.imu_truth
    idx = np.searchsorted(tr.t, res.t - 1e-9)
    if np.any(np.abs(tr.t[idx] - res.t) > 1e-6):
        raise ValueError("log epochs do not coincide with truth epochs")
    d = res.pos - tr.pos_imu[idx]
    return d * np.stack([ned_scale(p) for p in tr.pos_imu[idx]])


def position_nees(res: FusionResult, sim: SimResult) -> np.ndarray:
    d = position_errors(res, sim)
    return np.einsum("ni,nij,nj->n", d, np.linalg.inv(res.pos_cov), d)


def nees_envelope(runs: int, dim: int = 3, prob: float = 0.95) -> tuple[float, float]:
    """Two-sided interval for the average of ``runs`` independent chi-square(dim) NEES values."""
    a = (1.0 - prob) / 2.0
    return float(chi2.ppf(a, dim * runs) / runs), float(chi2.ppf(1.0 - a, dim * runs) / runs)


# ------------------------------------------------------------------ Monte Carlo


@dataclass
class RunSummary:
    seed: int
    nees: np.ndarray
    horizontal_rmse: float
    worst_psd: float
    rejected: int
    updates: int


def _one_run(args) -> RunSummary:
    spec, sim_cfg, fcfg, seed, perturb, base = args
    sim = simulate(spec, replace(sim_cfg, seed=seed), base=base)
    nav0 = sim.initial_nav()
    if perturb:
        nav0 = perturbed_nav(nav0, fcfg, np.random.default_rng([seed, 0x5EED]))
    res = session(sim, fcfg, nav0).run().result()
    rep = evaluate(result_trajectory(res), truth_trajectory(sim), (), sim.config.earth())
    n = len(res.innov_t)
    return RunSummary(seed, position_nees(res, sim), rep.horizontal_rmse, res.worst_psd,
                      int(n - res.innov_accepted.sum()), n)


@dataclass
class MonteCarloSummary:
    t: np.ndarray
    runs: list
    envelope: tuple

    @property
    def mean_nees(self) -> np.ndarray:
        """Per-epoch average over runs."""
        return np.mean([r.nees for r in self.runs], axis=0)

    @property
    def overall_nees(self) -> float:
        return float(np.mean(self.mean_nees))

    @property
    def fraction_inside(self) -> float:
        m = self.mean_nees
        lo, hi = self.envelope
        return float(np.mean((m >= lo) & (m <= hi)))

    @property
    def consistent(self) -> bool:
        lo, hi = self.envelope
        return lo <= self.overall_nees <= hi

    def to_dict(self) -> dict:
        return {
            "runs": [{"seed": r.seed, "mean_nees": float(r.nees.mean()), "horizontal_rmse": r.horizontal_rmse,
                      "worst_psd_ratio": r.worst_psd, "rejected": r.rejected, "updates": r.updates} for r in self.runs],
            "nees_mean": self.overall_nees,
            "nees_envelope": list(self.envelope),
            "nees_fraction_inside": self.fraction_inside,
            "consistent": self.consistent,
        }


def monte_carlo(spec: TrajectorySpec, sim_cfg: SimConfig, fcfg: FilterConfig, seeds: Sequence[int],
                perturb: bool = True, workers: int = 1) -> MonteCarloSummary:
    """Position NEES over independent seeds. Seeds share the truth trajectory when run serially."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("Monte Carlo needs at least one seed")
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            runs = list(ex.map(_one_run, [(spec, sim_cfg, fcfg, s, perturb, None) for s in seeds]))
    else:
        base = simulate(spec, replace(sim_cfg, seed=seeds[0]))
        runs = [_one_run((spec, sim_cfg, fcfg, s, perturb, base)) for s in seeds]
    lengths = {len(r.nees) for r in runs}
    if len(lengths) != 1:
        raise RuntimeError("runs logged different numbers of epochs")
    t = np.arange(len(runs[0].nees)) / fcfg.log_rate
    return MonteCarloSummary(t, runs, nees_envelope(len(runs)))


# ------------------------------------------------------------------ outages


@dataclass
class OutageStats:
    seed: int
    variant: str
    length: float
    rmse: float
    max: float
    end_error: np.ndarray  # horizontal NE error at the last window epoch


def outage_study(
    spec: TrajectorySpec,
    sim_cfg: SimConfig,
    variants: dict,
    seeds: Sequence[int],
    start: float,
    lengths: Sequence[float],
) -> list[OutageStats]:
    """Drift during GNSS outages of several lengths, all starting at ``start``.

    Each variant (name -> FilterConfig) runs once up to ``start`` and is then
    forked per outage length, so every length shares the same converged state.
    """
    out = []
    base = None
    for seed in seeds:
        sim = simulate(spec, replace(sim_cfg, seed=seed), base=base)
        base = base or sim
        truth = truth_trajectory(sim)
        for name, fcfg in variants.items():
            ses = session(sim, fcfg).run(start)
            for L in lengths:
                res = ses.fork([(start, start + L)]).run(start + L).result()
                w = (start, start + L)
                rep = evaluate(result_trajectory(res), truth, [w], sim.config.earth()).windows[0]
                d = position_errors(res, sim)
                last = np.flatnonzero((res.t >= w[0]) & (res.t < w[1]))[-1]
                out.append(OutageStats(seed, name, float(L), rep.rmse, rep.max, d[last, :2].copy()))
    return out
