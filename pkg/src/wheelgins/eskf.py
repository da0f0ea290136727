"""The 26-state error-state Kalman filter: dynamics, discretization, update and feedback."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import chi2

from . import _kern
from .geo import WGS84, EarthParams, exp_so3, log_so3, ned_scale
from .mech import ICM20602, ImuErrors, ImuSample, NavState
from .state import BA, BG, LW, NDIM, PHI, PHIM, SA, SG, SR, V, FullState, InstallationParams

HOUR = 3600.0


@dataclass
class ProcessNoiseConfig:
    """Driving-noise densities. Gauss-Markov states use PSD 2 sigma^2 / tau."""

    arw: float = ICM20602["arw"]  # rad/sqrt(s)
    vrw: float = ICM20602["vrw"]  # m/s/sqrt(s)
    bg_std: float = ICM20602["gyro_bias"]
    bg_tau: float = HOUR
    ba_std: float = ICM20602["accel_bias"]
    ba_tau: float = HOUR
    sg_std: float = ICM20602["gyro_scale"]
    sg_tau: float = HOUR
    sa_std: float = ICM20602["accel_scale"]
    sa_tau: float = HOUR
    w_lw: float = 1e-5  # m/sqrt(s)
    w_phim: float = 1e-6  # rad/sqrt(s)
    w_r: float = 1e-6  # 1/sqrt(s)

    def validate(self) -> None:
        for k, v in vars(self).items():
            if not v > 0:
                raise ValueError(f"process noise '{k}' must be positive")

    @property
    def taus(self) -> np.ndarray:
        return np.array([self.bg_tau, self.ba_tau, self.sg_tau, self.sa_tau])

    def qc(self) -> np.ndarray:
        """Diagonal of G Q G^T (isotropic white noises rotate into themselves)."""
        q = np.zeros(NDIM)
        q[V] = self.vrw**2
        q[PHI] = self.arw**2
        q[BG] = 2 * self.bg_std**2 / self.bg_tau
        q[BA] = 2 * self.ba_std**2 / self.ba_tau
        q[SG] = 2 * self.sg_std**2 / self.sg_tau
        q[SA] = 2 * self.sa_std**2 / self.sa_tau
        q[LW] = self.w_lw**2
        q[PHIM] = self.w_phim**2
        q[SR] = self.w_r**2
        return q


def noise_input_matrix(nav: NavState, noise: ProcessNoiseConfig):
    """Explicit (G, Q) pair: 23 driving noises mapped into the 26 error states."""
    G = np.zeros((NDIM, 23))
    G[V, 0:3] = nav.att
    G[PHI, 3:6] = -nav.att
    G[9:26, 6:23] = np.eye(17)
    q = noise.qc()
    Q = np.diag(np.concatenate([[noise.vrw**2] * 3, [noise.arw**2] * 3, q[9:26]]))
    return G, Q


def build_F(
    nav: NavState,
    compensated: ImuSample,
    imu_err: Optional[ImuErrors] = None,
    noise: Optional[ProcessNoiseConfig] = None,
    earth: EarthParams = WGS84,
) -> np.ndarray:
    """Continuous-time error dynamics at ``nav`` for the compensated sample."""
    imu_err = imu_err or ImuErrors()
    noise = noise or ProcessNoiseConfig()
    return _kern.build_F(
        nav.pos, nav.vel, nav.att,
        np.asarray(compensated.gyro, dtype=float), np.asarray(compensated.accel, dtype=float),
        imu_err.gyro_scale, imu_err.accel_scale, noise.taus, earth.vector,
    )


def discretize(F, noise: ProcessNoiseConfig, nav: NavState, sample: Optional[ImuSample], dt: float):
    """First-order transition and trapezoidal process noise: (Phi, Qd)."""
    if not 0 < dt <= 1.0:
        raise ValueError("dt must lie in (0, 1] s")
    G, Q = noise_input_matrix(nav, noise)
    Phi = np.eye(NDIM) + F * dt
    GQG = G @ Q @ G.T
    Qd = 0.5 * (Phi @ GQG @ Phi.T + GQG) * dt
    return Phi, 0.5 * (Qd + Qd.T)


def predict(P, Phi, Qd) -> np.ndarray:
    Pn = Phi @ P @ Phi.T + Qd
    return 0.5 * (Pn + Pn.T)


class UpdateResult(NamedTuple):
    P: np.ndarray
    x: np.ndarray
    nis: float
    accepted: bool
    threshold: float


@lru_cache(maxsize=None)
def gate_threshold(k: int, prob: float) -> float:
    return float(chi2.ppf(prob, k))


def update(P, x, H, z, R, gate_prob: Optional[float] = 0.995, enforce_gate: bool = True) -> UpdateResult:
    """Kalman update with Joseph-form covariance and a chi-square innovation gate.

    ``z`` is the innovation predicted-minus-observed, so ``z ~ H x_true``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = np.asarray(P, dtype=float)
    x = np.asarray(x, dtype=float)
    n = P.shape[0]
    r = z - H @ x
    PHt = P @ H.T
    S = H @ PHt + R
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ValueError("innovation covariance is not positive definite") from exc
    y = np.linalg.solve(L, r)
    nis = float(y @ y)
    thr = gate_threshold(len(z), gate_prob) if gate_prob is not None else np.inf
    if enforce_gate and nis > thr:
        return UpdateResult(P, x, nis, False, thr)
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    x_new = x + K @ r
    IKH = np.eye(n) - K @ H
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    return UpdateResult(0.5 * (P_new + P_new.T), x_new, nis, True, thr)


def inject(truth: FullState, dx, earth: EarthParams = WGS84) -> FullState:
    """Estimate that carries error ``dx`` relative to ``truth``."""
    dx = np.asarray(dx, dtype=float)
    nav = truth.nav
    pos = nav.pos + dx[0:3] / ned_scale(nav.pos, earth)
    vel = nav.vel + dx[V]
    att = exp_so3(-dx[PHI]) @ nav.att
    e = truth.imu_err
    err = ImuErrors(e.gyro_bias - dx[BG], e.accel_bias - dx[BA], e.gyro_scale - dx[SG], e.accel_scale - dx[SA])
    i = truth.install
    inst = InstallationParams(i.l_w + dx[LW], i.phi_m + dx[PHIM], i.r_meas, i.s_r - dx[25], i.l_gnss_v)
    return FullState(NavState(nav.t, pos, vel, att), err, inst)


def feedback(est: FullState, dx, earth: EarthParams = WGS84):
    """Remove the estimated error ``dx`` from ``est``; returns (corrected, zero error state)."""
    dx = np.asarray(dx, dtype=float)
    nav = est.nav
    pos = nav.pos - dx[0:3] / ned_scale(nav.pos, earth)
    vel = nav.vel - dx[V]
    att = _kern.orthonormalize(exp_so3(dx[PHI]) @ nav.att)
    e = est.imu_err
    err = ImuErrors(e.gyro_bias + dx[BG], e.accel_bias + dx[BA], e.gyro_scale + dx[SG], e.accel_scale + dx[SA])
    i = est.install
    inst = InstallationParams(i.l_w - dx[LW], i.phi_m - dx[PHIM], i.r_meas, i.s_r + dx[25], i.l_gnss_v)
    return FullState(NavState(nav.t, pos, vel, att), err, inst), np.zeros(NDIM)


def state_error(est: FullState, truth: FullState, earth: EarthParams = WGS84) -> np.ndarray:
    """Error vector of ``est`` relative to ``truth`` under the injection convention."""
    dx = np.zeros(NDIM)
    d = est.nav.pos - truth.nav.pos
    dx[0:3] = d * ned_scale(truth.nav.pos, earth)
    dx[V] = est.nav.vel - truth.nav.vel
    dx[PHI] = -log_so3(est.nav.att @ truth.nav.att.T)
    dx[BG] = truth.imu_err.gyro_bias - est.imu_err.gyro_bias
    dx[BA] = truth.imu_err.accel_bias - est.imu_err.accel_bias
    dx[SG] = truth.imu_err.gyro_scale - est.imu_err.gyro_scale
    dx[SA] = truth.imu_err.accel_scale - est.imu_err.accel_scale
    dx[LW] = est.install.l_w - truth.install.l_w
    dx[PHIM] = est.install.phi_m - truth.install.phi_m
    dx[25] = truth.install.s_r - est.install.s_r
    return dx
