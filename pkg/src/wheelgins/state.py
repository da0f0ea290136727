"""Error-state layout and the corrected total state.

Sign conventions (``hat`` is the filter estimate):

* navigation errors are estimate minus truth: ``p_hat = p + D_R^-1 dp``,
  ``v_hat = v + dv``, ``R_hat = exp(-phi x) R``;
* installation errors l_w and phi_m are estimate minus truth as well;
* IMU errors and the radius scale are truth minus estimate:
  ``b_hat = b - db``, ``s_hat = s - ds``, ``s_r_hat = s_r - ds_r``.

Feedback is the exact inverse of this injection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kern
from .mech import ImuErrors, NavState

P = slice(0, 3)
V = slice(3, 6)
PHI = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
SG = slice(15, 18)
SA = slice(18, 21)
LW = slice(21, 23)
PHIM = slice(23, 25)
SR = slice(25, 26)
NDIM = 26

INDEX = dict(p=P, v=V, phi=PHI, bg=BG, ba=BA, sg=SG, sa=SA, lw=LW, phim=PHIM, sr=SR)
assert (_kern.I_LW, _kern.I_PHIM, _kern.I_SR, _kern.NDIM) == (LW.start, PHIM.start, SR.start, NDIM)


@dataclass
class InstallationParams:
    """Wheel-IMU installation: leverarm (l_y, l_z) m, mounting angles (theta_m, psi_m) rad,
    measured radius r_meas m, radius scale s_r, and GNSS antenna offset in the vehicle frame."""

    l_w: np.ndarray = field(default_factory=lambda: np.zeros(2))
    phi_m: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r_meas: float = 0.3
    s_r: float = 0.0
    l_gnss_v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.l_w = np.array(self.l_w, dtype=float).reshape(2)
        self.phi_m = np.array(self.phi_m, dtype=float).reshape(2)
        self.l_gnss_v = np.array(self.l_gnss_v, dtype=float).reshape(3)
        self.r_meas = float(self.r_meas)
        self.s_r = float(self.s_r)

    @property
    def l_w3(self) -> np.ndarray:
        return np.array([0.0, self.l_w[0], self.l_w[1]])

    @property
    def r_corrected(self) -> float:
        return self.r_meas / (1.0 + self.s_r)

    def validate(self) -> None:
        if self.r_meas <= 0:
            raise ValueError("measured wheel radius must be positive")
        if abs(self.s_r) >= 0.1:
            raise ValueError("|s_r| must be below 0.1")
        if np.any(np.abs(self.phi_m) >= np.deg2rad(10.0)):
            raise ValueError("mounting angles must stay below 10 deg")

    def copy(self) -> "InstallationParams":
        return InstallationParams(self.l_w.copy(), self.phi_m.copy(), self.r_meas, self.s_r, self.l_gnss_v.copy())


@dataclass
class FullState:
    nav: NavState
    imu_err: ImuErrors
    install: InstallationParams

    def copy(self) -> "FullState":
        return FullState(self.nav.copy(), self.imu_err.copy(), self.install.copy())
