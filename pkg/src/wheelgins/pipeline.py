"""Fusion session (event loop), evaluation metrics and parameter-convergence reports."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kern
from .errors import DivergenceError, DataError, NoConvergence
from .eskf import ProcessNoiseConfig, feedback, update
from .geo import WGS84, EarthParams, earth_rates, rotation_to_euler, wrap_pi
from .mech import DEG, ICM20602, ImuData, ImuErrors, ImuSample, NavState, compensate, propagate
from .models import (
    ConvergenceFixer,
    GnssData,
    VelocityNoise,
    build_gnss_block,
    build_velocity_block,
    build_wheel_rate_block,
    r_body_to_wheel,
    straight_line_gate,
)
from .state import BA, BG, LW, NDIM, PHI, PHIM, SA, SG, SR, V, FullState, InstallationParams, P as PP

KIND_CODES = {"gnss": 0, "velocity": 1, "wheel_rate": 2}
TIME_TOL = 1e-6


@dataclass
class InitialStd:
    pos: float = 1.0
    vel: float = 0.1
    att: tuple = (0.5 * DEG, 0.5 * DEG, 1.0 * DEG)
    gyro_bias: float = ICM20602["gyro_bias"]
    accel_bias: float = ICM20602["accel_bias"]
    gyro_scale: float = ICM20602["gyro_scale"]
    accel_scale: float = ICM20602["accel_scale"]
    lever: float = 0.05
    mount: float = 2.0 * DEG
    radius_scale: float = 0.005

    def diag(self) -> np.ndarray:
        d = np.zeros(NDIM)
        d[PP] = self.pos
        d[V] = self.vel
        d[PHI] = self.att
        d[BG] = self.gyro_bias
        d[BA] = self.accel_bias
        d[SG] = self.gyro_scale
        d[SA] = self.accel_scale
        d[LW] = self.lever
        d[PHIM] = self.mount
        d[SR] = self.radius_scale
        return d


@dataclass
class GateConfig:
    threshold: float = 0.5 * DEG  # rad/s
    window: float = 1.0  # s
    smooth: float = 0.2  # s


@dataclass
class FixerConfig:
    enabled: bool = True
    sigma: float = 0.05 * DEG
    hold: float = 10.0


@dataclass
class FilterConfig:
    process: ProcessNoiseConfig = field(default_factory=ProcessNoiseConfig)
    initial: InitialStd = field(default_factory=InitialStd)
    velocity_noise: VelocityNoise = field(default_factory=VelocityNoise)
    wheel_rate_sigma: Optional[float] = None  # default: ARW over the averaging interval
    gnss_std: Optional[float] = None  # override of the per-fix std
    velocity_rate: float = 2.0
    wheel_rate_rate: float = 2.0
    gnss_rate: float = 1.0
    gate: GateConfig = field(default_factory=GateConfig)
    fixer: FixerConfig = field(default_factory=FixerConfig)
    use_velocity: bool = True
    use_gnss: bool = True
    use_wheel_rate: bool = True
    estimate_lever: bool = True
    estimate_mount: bool = True
    estimate_radius: bool = True
    gate_prob: float = 0.995
    enforce_gate: bool = True
    log_rate: float = 10.0
    static_init: float = 0.0  # s of initial standstill used to seed the gyro bias
    outages: Sequence[tuple] = ()
    divergence_trace: float = 1e8
    check_psd: bool = False

    def validate(self) -> None:
        self.process.validate()
        for name in ("velocity_rate", "wheel_rate_rate", "gnss_rate", "log_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        vn = self.velocity_noise
        if min(vn.fwd, vn.lat, vn.vert) <= 0:
            raise ValueError("velocity noise must be positive")
        if self.wheel_rate_sigma is not None and self.wheel_rate_sigma <= 0:
            raise ValueError("wheel_rate_sigma must be positive")
        if self.gnss_std is not None and self.gnss_std <= 0:
            raise ValueError("gnss_std must be positive")
        for a, b in self.outages:
            if not a < b:
                raise ValueError(f"outage window ({a}, {b}) is empty")


@dataclass
class FusionResult:
    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    att: np.ndarray
    lever: np.ndarray
    mount: np.ndarray
    radius_scale: np.ndarray
    imu_err: np.ndarray  # (N, 12): bg, ba, sg, sa
    std: np.ndarray  # (N, 26) marginal stds
    pos_cov: np.ndarray  # (N, 3, 3)
    innov_t: np.ndarray
    innov_kind: np.ndarray
    innov_accepted: np.ndarray
    innov_nis: np.ndarray
    innov_z: np.ndarray  # (M, 3), NaN padded
    fixed_at: Optional[float]
    worst_psd: float
    outages: tuple

    def count(self, kind: str, accepted: Optional[bool] = None) -> int:
        m = self.innov_kind == KIND_CODES[kind]
        if accepted is not None:
            m &= self.innov_accepted == accepted
        return int(m.sum())

    def euler(self) -> np.ndarray:
        return np.array([tuple(rotation_to_euler(R))[:3] for R in self.att])

    def nav(self, i: int) -> NavState:
        return NavState(float(self.t[i]), self.pos[i], self.vel[i], self.att[i])

    def param_records(self) -> np.ndarray:
        """Columns t, l_y, l_z, theta_m, psi_m (rad), s_r, then the five stds."""
        s = self.std
        return np.column_stack([
            self.t, self.lever, self.mount, self.radius_scale,
            s[:, LW], s[:, PHIM], s[:, SR],
        ])


def _grid_next(t: float, rate: float) -> float:
    """First point of the ``1/rate`` grid strictly after ``t``."""
    return (np.floor(t * rate + 1e-6) + 1.0) / rate


class FusionSession:
    """Causal wheel-IMU/GNSS filter over an IMU stream and an optional GNSS stream.

    The session is single-owner. :meth:`fork` returns an independent copy that
    shares only the read-only input streams, which is how outage experiments
    branch from a common prefix.
    """

    def __init__(
        self,
        cfg: FilterConfig,
        imu: ImuData,
        gnss: Optional[GnssData],
        nav0: NavState,
        install0: InstallationParams,
        imu_err0: Optional[ImuErrors] = None,
        earth: EarthParams = WGS84,
    ):
        cfg.validate()
        install0.validate()
        self.cfg = cfg
        self.imu = imu
        self.earth = earth
        self.E = earth.vector
        k0 = int(np.searchsorted(imu.t, nav0.t - 1e-9))
        if k0 >= len(imu) or abs(imu.t[k0] - nav0.t) > 1e-9:
            raise DataError("initial state time does not match an IMU epoch")
        self.k = self.k0 = k0
        dts = np.diff(imu.t[k0:k0 + 101])
        self.imu_rate = 1.0 / float(np.median(dts)) if len(dts) else 200.0

        self.state = FullState(nav0.copy(), (imu_err0 or ImuErrors()).copy(), install0.copy())
        d = cfg.initial.diag()
        self.enabled = np.ones(NDIM, dtype=bool)
        self.enabled[LW] = cfg.estimate_lever
        self.enabled[PHIM] = cfg.estimate_mount
        self.enabled[SR] = cfg.estimate_radius
        self.qc = cfg.process.qc()
        if cfg.static_init > 0:
            self._static_gyro_bias(d)
        d = np.where(self.enabled, d, 0.0)
        self.qc = np.where(self.enabled, self.qc, 0.0)
        self.P = np.diag(d**2)
        self.taus = cfg.process.taus

        self.fixes = self._select_fixes(gnss)
        self.ig = int(np.searchsorted(self.fixes.t, imu.t[k0] - TIME_TOL)) if self.fixes is not None else 0
        t0 = float(imu.t[k0])
        self.next_vel = t0 if cfg.use_velocity else np.inf
        self.next_wr = _grid_next(t0, cfg.wheel_rate_rate) if self._wr_active() else np.inf
        self.next_log = t0
        self.gyro_std = cfg.process.arw * np.sqrt(self.imu_rate)
        self.wr_sigma = cfg.wheel_rate_sigma or cfg.process.arw * np.sqrt(cfg.wheel_rate_rate)
        self.fixer = ConvergenceFixer(cfg.fixer.sigma, cfg.fixer.hold)
        # smallest eigenvalue of P over its trace; only tracked with check_psd
        self.worst_psd = self._psd_ratio() if cfg.check_psd else float("nan")
        self._log: dict[str, list] = {k: [] for k in ("t", "pos", "vel", "att", "lever", "mount", "sr", "err", "std", "pcov")}
        self._inn: dict[str, list] = {k: [] for k in ("t", "kind", "acc", "nis", "z")}

    # ------------------------------------------------------------ setup helpers

    def _static_gyro_bias(self, d: np.ndarray) -> None:
        imu, cfg = self.imu, self.cfg
        t0 = imu.t[self.k0]
        sel = slice(self.k0, int(np.searchsorted(imu.t, t0 + cfg.static_init)))
        n = sel.stop - sel.start
        if n < 10:
            raise DataError("static initialisation window holds too few samples")
        nav = self.state.nav
        wie, _, _, _ = earth_rates(nav.pos, np.zeros(3), self.earth)
        self.state.imu_err.gyro_bias = imu.gyro[sel].mean(axis=0) - nav.att.T @ wie
        d[BG] = max(cfg.process.arw / np.sqrt(n / self.imu_rate), 1e-7)

    def _select_fixes(self, gnss: Optional[GnssData]) -> Optional[GnssData]:
        if gnss is None or not self.cfg.use_gnss or len(gnss) == 0:
            return None
        g = gnss.without(self.cfg.outages)
        keep = []
        last = -np.inf
        for i, t in enumerate(g.t):
            if t - last >= 1.0 / self.cfg.gnss_rate - TIME_TOL:
                keep.append(i)
                last = t
        keep = np.array(keep, dtype=int)
        std = g.std[keep]
        if self.cfg.gnss_std is not None:
            std = np.full_like(std, self.cfg.gnss_std)
        return GnssData(g.t[keep], g.pos[keep], std)

    def _wr_active(self) -> bool:
        c = self.cfg
        return c.use_wheel_rate and c.estimate_mount and not self.fixer_fixed()

    def fixer_fixed(self) -> bool:
        return getattr(self, "fixer", None) is not None and self.fixer.fixed

    # ------------------------------------------------------------ public API

    @property
    def t(self) -> float:
        return float(self.imu.t[self.k])

    def fork(self, outages: Sequence[tuple] = ()) -> "FusionSession":
        """Independent copy; ``outages`` removes further fixes from the copy only."""
        new = copy.copy(self)
        new.state = self.state.copy()
        new.P = self.P.copy()
        new.qc = self.qc.copy()
        new.fixer = copy.copy(self.fixer)
        new._log = {k: list(v) for k, v in self._log.items()}
        new._inn = {k: list(v) for k, v in self._inn.items()}
        if outages and self.fixes is not None:
            new.fixes = self.fixes.without(outages)
            new.ig = int(np.searchsorted(new.fixes.t, self.t + TIME_TOL))
            new.cfg = copy.copy(self.cfg)
            new.cfg.outages = tuple(self.cfg.outages) + tuple(outages)
        return new

    def run(self, until: Optional[float] = None) -> "FusionSession":
        """Process the streams up to time ``until`` (default: end of IMU data).

        Events stamped exactly at ``until`` are left for the next call, so a
        fork taken there sees the window ``[until, ...)`` untouched.
        """
        imu = self.imu
        k_stop = len(imu) - 1 if until is None else int(np.searchsorted(imu.t, until + 1e-9)) - 1
        k_stop = min(k_stop, len(imu) - 1)
        while True:
            if until is not None and self.k >= k_stop and imu.t[self.k] >= until - 1e-9:
                break
            self._events()
            if self.k >= k_stop:
                break
            nxt = [k_stop, self._index_of(self.next_vel), self._index_of(self.next_wr), self._index_of(self.next_log)]
            if self.fixes is not None and self.ig < len(self.fixes):
                tf = self.fixes.t[self.ig]
                kg = int(np.searchsorted(imu.t, tf - TIME_TOL))
                if kg < len(imu) and abs(imu.t[kg] - tf) <= TIME_TOL:
                    nxt.append(kg)
                elif kg < len(imu):
                    if kg - 1 == self.k:
                        self._split_step(tf)
                        continue
                    nxt.append(kg - 1)
            k_next = max(min(nxt), self.k + 1)
            self._span(k_next)
        return self

    def result(self) -> FusionResult:
        L, I = self._log, self._inn
        arr = lambda x, shape: np.array(x, dtype=float).reshape(shape)  # noqa: E731
        n, m = len(L["t"]), len(I["t"])
        return FusionResult(
            t=arr(L["t"], (n,)), pos=arr(L["pos"], (n, 3)), vel=arr(L["vel"], (n, 3)), att=arr(L["att"], (n, 3, 3)),
            lever=arr(L["lever"], (n, 2)), mount=arr(L["mount"], (n, 2)), radius_scale=arr(L["sr"], (n,)),
            imu_err=arr(L["err"], (n, 12)), std=arr(L["std"], (n, NDIM)), pos_cov=arr(L["pcov"], (n, 3, 3)),
            innov_t=arr(I["t"], (m,)), innov_kind=np.array(I["kind"], dtype=int).reshape(m),
            innov_accepted=np.array(I["acc"], dtype=bool).reshape(m), innov_nis=arr(I["nis"], (m,)),
            innov_z=arr(I["z"], (m, 3)), fixed_at=self.fixer.fixed_at, worst_psd=self.worst_psd,
            outages=tuple(self.cfg.outages),
        )

    # ------------------------------------------------------------ internals

    def _index_of(self, t_event: float) -> int:
        if not np.isfinite(t_event):
            return len(self.imu) - 1
        return int(np.searchsorted(self.imu.t, t_event - 1e-9))

    def _span(self, k1: int) -> None:
        s = self.state
        e = s.imu_err
        nav = s.nav
        p, v, R, P, worst = _kern.propagate_span(
            self.imu.t, self.imu.gyro, self.imu.accel, self.k, k1, self.k0,
            nav.pos, nav.vel, nav.att, self.P, e.gyro_bias, e.accel_bias, e.gyro_scale, e.accel_scale,
            self.taus, self.qc, self.E, self.cfg.check_psd,
        )
        self.k = k1
        s.nav = NavState(float(self.imu.t[k1]), p, v, R)
        self.P = P
        if self.cfg.check_psd:
            self.worst_psd = min(self.worst_psd, worst)
        self._check_health()

    def _psd_ratio(self) -> float:
        return float(np.linalg.eigvalsh(self.P)[0] / np.trace(self.P))

    def _check_health(self) -> None:
        nav = self.state.nav
        tr = float(np.trace(self.P))
        if not (np.all(np.isfinite(nav.pos)) and np.all(np.isfinite(nav.vel)) and np.isfinite(tr)):
            raise DivergenceError(f"non-finite filter state at t = {self.t:.3f} s")
        if tr > self.cfg.divergence_trace or np.linalg.norm(nav.vel) > 100.0:
            raise DivergenceError(f"filter diverged at t = {self.t:.3f} s (trace P = {tr:.3g})")

    def _compensated(self, k: int) -> ImuSample:
        return compensate(self.imu[k], self.state.imu_err)

    def _cov_step(self, sample: ImuSample, dt: float) -> None:
        s = self.state
        F = _kern.build_F(s.nav.pos, s.nav.vel, s.nav.att, sample.gyro, sample.accel,
                          s.imu_err.gyro_scale, s.imu_err.accel_scale, self.taus, self.E)
        self.P = _kern.cov_step(self.P, F, self.qc, dt)
        if self.cfg.check_psd:
            self.worst_psd = min(self.worst_psd, self._psd_ratio())

    def _split_step(self, tf: float) -> None:
        """GNSS fix between two IMU epochs: propagate to the fix, update, finish the interval."""
        imu, k = self.imu, self.k
        w = (tf - imu.t[k]) / (imu.t[k + 1] - imu.t[k])
        raw = ImuSample(tf, (1 - w) * imu.gyro[k] + w * imu.gyro[k + 1], (1 - w) * imu.accel[k] + w * imu.accel[k + 1])
        hist = [self._compensated(j) for j in range(max(self.k0, k - 2), k)]
        prev = self._compensated(k)
        mid = compensate(raw, self.state.imu_err)
        self.state.nav = propagate(self.state.nav, prev, mid, hist, self.earth)
        self._cov_step(mid, tf - imu.t[k])
        self._gnss_update()
        mid = compensate(raw, self.state.imu_err)
        cur = self._compensated(k + 1)
        self.state.nav = propagate(self.state.nav, mid, cur, (), self.earth)
        self._cov_step(cur, imu.t[k + 1] - tf)
        self.k = k + 1
        self._check_health()

    def _apply(self, block, kind: str) -> None:
        res = update(self.P, np.zeros(NDIM), block.H, block.z, block.R, self.cfg.gate_prob, self.cfg.enforce_gate)
        z = np.full(3, np.nan)
        z[: len(block.z)] = block.z
        I = self._inn
        I["t"].append(self.t)
        I["kind"].append(KIND_CODES[kind])
        I["acc"].append(res.accepted)
        I["nis"].append(res.nis)
        I["z"].append(z)
        if res.accepted:
            self.P = res.P
            self.state, _ = feedback(self.state, res.x, self.earth)
            if self.cfg.check_psd:
                self.worst_psd = min(self.worst_psd, self._psd_ratio())

    def _gnss_update(self) -> None:
        fix = self.fixes[self.ig]
        self.ig += 1
        self._apply(build_gnss_block(self.state.nav, self.state.install, fix, self.earth), "gnss")

    def _events(self) -> None:
        t = self.t
        imu = self.imu
        while self.fixes is not None and self.ig < len(self.fixes) and self.fixes.t[self.ig] <= t + TIME_TOL:
            if abs(self.fixes.t[self.ig] - t) <= TIME_TOL:
                self._gnss_update()
            else:  # fix older than the current epoch (start of run): skip
                self.ig += 1
        if t >= self.next_vel - 1e-9:
            s = self.state
            blk = build_velocity_block(s.nav, imu.gyro[self.k], s.imu_err, s.install, self.cfg.velocity_noise, self.gyro_std)
            self._apply(blk, "velocity")
            self.next_vel = _grid_next(t, self.cfg.velocity_rate)
        if t >= self.next_wr - 1e-9:
            self.next_wr = _grid_next(t, self.cfg.wheel_rate_rate)
            if self._wr_active():
                self._wheel_rate_update()
            else:
                self.next_wr = np.inf
        if t >= self.next_log - 1e-9:
            self._record()
            self.next_log = _grid_next(t, self.cfg.log_rate)

    def _wheel_rate_update(self) -> None:
        imu, k, s = self.imu, self.k, self.state
        g = self.cfg.gate
        j0 = int(np.searchsorted(imu.t, self.t - g.window - 1e-9))
        if j0 < self.k0 or self.t - imu.t[j0] < g.window - 1e-6:
            return
        e = s.imu_err
        Rbw = r_body_to_wheel(s.install.phi_m)
        w = ((imu.gyro[j0:k + 1] - e.gyro_bias) / (1.0 + e.gyro_scale)) @ Rbw.T
        if not straight_line_gate(imu.t[j0:k + 1], w, g.threshold, g.window, g.smooth):
            return
        ja = int(np.searchsorted(imu.t, self.t - 1.0 / self.cfg.wheel_rate_rate + 1e-9))
        mean_raw = imu.gyro[max(ja, self.k0):k + 1].mean(axis=0)
        self._apply(build_wheel_rate_block(mean_raw, e, s.install, self.wr_sigma), "wheel_rate")

    def _record(self) -> None:
        s = self.state
        L = self._log
        L["t"].append(self.t)
        L["pos"].append(s.nav.pos.copy())
        L["vel"].append(s.nav.vel.copy())
        L["att"].append(s.nav.att.copy())
        L["lever"].append(s.install.l_w.copy())
        L["mount"].append(s.install.phi_m.copy())
        L["sr"].append(s.install.s_r)
        e = s.imu_err
        L["err"].append(np.concatenate([e.gyro_bias, e.accel_bias, e.gyro_scale, e.accel_scale]))
        std = np.sqrt(np.maximum(np.diag(self.P), 0.0))
        L["std"].append(std)
        L["pcov"].append(self.P[0:3, 0:3].copy())
        if self.cfg.fixer.enabled and self.cfg.estimate_mount and not self.fixer.fixed:
            if self.fixer.update(self.t, std[PHIM]):
                self.qc[PHIM] = 0.0
                self.next_wr = np.inf


def fuse(cfg: FilterConfig, imu: ImuData, gnss: Optional[GnssData], nav0: NavState, install0: InstallationParams,
         imu_err0: Optional[ImuErrors] = None, earth: EarthParams = WGS84, until: Optional[float] = None) -> FusionResult:
    return FusionSession(cfg, imu, gnss, nav0, install0, imu_err0, earth).run(until).result()
