import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from conftest import to_full
from wheelgins.errors import GeometryError
from wheelgins.eskf import inject
from wheelgins.geo import is_rotation, rot_x, rot_z
from wheelgins.mech import DEG, ImuErrors, NavState
from wheelgins.models import (
    ConvergenceFixer,
    GnssData,
    GnssFix,
    MeasurementBlock,
    StraightLineGate,
    build_gnss_block,
    build_velocity_block,
    build_wheel_rate_block,
    derive_vehicle_frame,
    derive_vehicle_rotation,
    gnss_innovation,
    gnss_leverarm_body,
    mounting_jacobian_A,
    r_body_to_wheel,
    straight_line_gate,
    velocity_innovation,
    wheel_forward_velocity,
    wheel_rate_innovation,
)
from wheelgins.state import BG, NDIM, PHIM, SG, InstallationParams

REF_MOUNT = np.array([-1.22, 1.60]) * DEG
STEPS = O.STATE_SCALE * 1e-3


def _point(rng):
    x = O.random_state(rng)
    w = np.array([rng.uniform(2, 20) * rng.choice([-1, 1]), 0, 0]) + rng.normal(0, 0.3, 3)
    return x, w, O.raw_from_true(w, x.bg, x.sg)


# ---------------------------------------------------------------- geometry


def test_r_body_to_wheel_examples(rng):
    assert np.array_equal(r_body_to_wheel((0, 0)), np.eye(3))
    assert np.abs(r_body_to_wheel(REF_MOUNT) - O.rbw_closed_form(*REF_MOUNT)).max() < 1e-16
    for a in rng.uniform(-0.17, 0.17, (100, 2)):
        R = r_body_to_wheel(a)
        assert is_rotation(R) and np.linalg.norm(R[0]) == pytest.approx(1.0, abs=1e-15)


def test_A_examples():
    assert np.array_equal(mounting_jacobian_A([10, 0, 0], 0.3, (0, 0)), [[0.0, 0.0]])
    assert np.array_equal(mounting_jacobian_A([0, 0, 1], 1.0, (0, 0)), [[1.0, 0.0]])


def test_A_against_closed_form_and_fd(rng):
    for _ in range(100):
        w, r, a = rng.normal(0, 10, 3), rng.uniform(0.1, 1.0), rng.uniform(-0.17, 0.17, 2)
        A = mounting_jacobian_A(w, r, a)
        Ac = O.a_closed_form(w, r, *a)
        assert np.abs(A - Ac).max() <= 1e-14 * np.abs(Ac).max()
        fd = O.central_jacobian(lambda d: [O.forward_speed(w, r, *(a + d))], 2, [1e-4, 1e-4])
        assert np.abs(A - fd).max() / np.abs(A).max() < 1e-6


def test_wheel_forward_velocity_examples():
    inst = InstallationParams(r_meas=0.3)
    assert wheel_forward_velocity([5.0 / 0.3, 0, 0], inst) == pytest.approx(5.0)
    assert wheel_forward_velocity([0, 0, 0], inst) == 0.0
    inst = InstallationParams(phi_m=REF_MOUNT, r_meas=0.3)
    expect = 10 * 0.3 * np.cos(REF_MOUNT[0]) * np.cos(REF_MOUNT[1])
    assert wheel_forward_velocity([10, 0, 0], inst) == pytest.approx(expect, rel=1e-15)


def test_radius_scale_enters_through_corrected_radius():
    inst = InstallationParams(r_meas=0.303, s_r=0.01)
    assert wheel_forward_velocity([10, 0, 0], inst) == pytest.approx(3.0, rel=1e-14)


def test_vehicle_rotation_examples():
    # wheel axis east -> vehicle faces north
    att = rot_z(np.pi / 2)
    assert derive_vehicle_frame(att, (0, 0)).psi_v == pytest.approx(0.0, abs=1e-15)
    assert derive_vehicle_frame(np.eye(3), (0, 0)).psi_v == pytest.approx(-np.pi / 2)
    with pytest.raises(GeometryError):
        derive_vehicle_rotation(np.array([[0, 0, 1.0], [0, 1, 0], [-1, 0, 0]]), (0, 0))


def test_vehicle_rotation_is_horizontal(rng):
    for _ in range(50):
        x = O.random_state(rng)
        Rnv = derive_vehicle_rotation(x.R, x.phim)
        assert Rnv[2, 2] == 1.0 and not Rnv[2, :2].any() and not Rnv[:2, 2].any()
        assert np.allclose(Rnv, O.vehicle_rotation(x), atol=1e-14)


def test_gnss_leverarm_body_examples():
    inst = InstallationParams(l_w=(0.02, 0.03))
    assert np.array_equal(gnss_leverarm_body(inst, np.eye(3)), [0, 0.02, 0.03])
    inst = InstallationParams(l_gnss_v=(0.5, 0.3, -1.5))
    assert np.array_equal(gnss_leverarm_body(inst, np.eye(3)), [0.5, 0.3, -1.5])


def test_gnss_leverarm_periodic_in_wheel_angle():
    inst = InstallationParams(l_w=(0.02, 0.03), phi_m=REF_MOUNT, l_gnss_v=(0.4, -0.5, -1.5))
    heading = 0.7
    Rbw = r_body_to_wheel(REF_MOUNT)

    def lever_n(alpha):
        R = rot_z(heading + np.pi / 2) @ rot_x(alpha) @ Rbw
        Rnv = derive_vehicle_rotation(R, REF_MOUNT)
        return R @ gnss_leverarm_body(inst, R.T @ Rnv.T)

    base = lever_n(0.3)
    assert np.allclose(lever_n(0.3 + 2 * np.pi), base, atol=1e-14)
    # only the wheel lever arm turns with the wheel: a circle in the plane normal to the axle
    pts = np.array([lever_n(a) for a in np.linspace(0, 2 * np.pi, 36, endpoint=False)])
    axle = np.array([np.cos(heading + np.pi / 2), np.sin(heading + np.pi / 2), 0.0])
    assert np.ptp(pts @ axle) < 1e-12
    radius = np.linalg.norm((Rbw @ inst.l_w3)[1:3])
    assert np.allclose(np.linalg.norm(pts - pts.mean(axis=0), axis=1), radius, atol=1e-12)


# ---------------------------------------------------------------- blocks


def test_velocity_block_against_fd(rng):
    for _ in range(25):
        x, w, raw = _point(rng)
        fs = to_full(x)
        b = build_velocity_block(fs.nav, raw, fs.imu_err, fs.install)
        assert np.allclose(b.z, O.velocity_meas(x, raw), atol=1e-13)
        Ho = O.central_jacobian(lambda d: O.velocity_meas(O.inject(x, d), raw), NDIM, STEPS)
        assert O.scaled_rel_error(b.H, Ho) < 1e-5


def test_velocity_block_zero_lever_zero_rate():
    x = O.random_state(np.random.default_rng(4))
    fs = to_full(x)
    fs.install.l_w[:] = 0.0
    b = build_velocity_block(fs.nav, fs.imu_err.gyro_bias, fs.imu_err, fs.install)
    assert not b.H[:, 21:23].any() and not b.H[:, SG].any()
    # no lever-arm coupling of gyro errors; the forward row keeps the observed-speed term
    assert not b.H[1:, BG].any()
    row1 = r_body_to_wheel(x.phim)[0]
    assert np.allclose(b.H[0, BG], -row1 * fs.install.r_corrected / (1 + x.sg), rtol=1e-14)


def test_velocity_block_noise_inflation():
    x, w, raw = _point(np.random.default_rng(5))
    fs = to_full(x)
    b0 = build_velocity_block(fs.nav, raw, fs.imu_err, fs.install)
    b1 = build_velocity_block(fs.nav, raw, fs.imu_err, fs.install, gyro_std=0.01)
    assert np.allclose(b0.R, np.diag([0.05**2] * 3))
    J = b1.H[:, BG]
    assert np.allclose(b1.R - b0.R, 1e-4 * J @ J.T, rtol=1e-12, atol=1e-15)
    assert b1.R[0, 0] > b0.R[0, 0]


def test_velocity_innovation_matches_block(rng):
    x, w, raw = _point(rng)
    fs = to_full(x)
    assert np.array_equal(velocity_innovation(fs.nav, raw, fs.imu_err, fs.install),
                          build_velocity_block(fs.nav, raw, fs.imu_err, fs.install).z)


def test_gnss_block_against_fd(rng):
    for _ in range(25):
        x = O.random_state(rng)
        fs = to_full(x)
        fix = x.pos + rng.normal(0, 2, 3) / O.dr_scale(x.pos)
        b = build_gnss_block(fs.nav, fs.install, GnssFix(0.0, fix, np.ones(3)))
        assert np.allclose(b.z, O.gnss_meas(x, fix), atol=1e-8)
        Ho = O.central_jacobian(lambda d: O.gnss_meas(O.inject(x, d), fix), NDIM, O.STATE_SCALE * 1e-2)
        assert O.scaled_rel_error(b.H, Ho) < 1e-5


def test_gnss_block_examples():
    x = O.random_state(np.random.default_rng(6))
    fs = to_full(x)
    fs.install.l_w[:] = 0
    fs.install.l_gnss_v[:] = 0
    fix = GnssFix(0.0, fs.nav.pos.copy(), np.array([0.1, 0.2, 0.3]))
    b = build_gnss_block(fs.nav, fs.install, fix)
    assert np.abs(b.z).max() < 1e-9
    assert np.allclose(b.R, np.diag([0.01, 0.04, 0.09]))
    dx = np.zeros(NDIM)
    dx[0:3] = (1.0, 2.0, 3.0)
    est = inject(fs, dx)
    assert np.allclose(gnss_innovation(est.nav, est.install, fix), [1, 2, 3], atol=1e-5)


def test_wheel_rate_block_against_fd(rng):
    for _ in range(25):
        x, w, raw = _point(rng)
        fs = to_full(x)
        b = build_wheel_rate_block(raw, fs.imu_err, fs.install, 0.01)
        Ho = O.central_jacobian(lambda d: O.wheel_rate_meas(O.inject(x, d), raw), NDIM, STEPS)
        assert O.scaled_rel_error(b.H, Ho) < 1e-6
        nz = np.zeros(NDIM, dtype=bool)
        nz[BG] = nz[SG] = nz[PHIM] = True
        assert not b.H[:, ~nz].any()
        assert np.allclose(b.R, 1e-4 * np.eye(2))


def test_wheel_rate_examples():
    w_true = r_body_to_wheel(REF_MOUNT).T @ [10.0, 0, 0]
    exact = InstallationParams(phi_m=REF_MOUNT)
    assert np.abs(wheel_rate_innovation(w_true, ImuErrors(), exact)).max() < 1e-14
    z = wheel_rate_innovation(w_true, ImuErrors(), InstallationParams())
    assert np.allclose(z, w_true[1:3], atol=0) and np.abs(z).max() > 0.1
    with pytest.raises(ValueError):
        build_wheel_rate_block(w_true, ImuErrors(), exact, 0.0)


def test_block_shape_validation():
    with pytest.raises(ValueError):
        MeasurementBlock(np.zeros((2, NDIM)), np.zeros(2), np.eye(2), "velocity")
    with pytest.raises(ValueError):
        MeasurementBlock(np.zeros((2, NDIM)), np.zeros(2), np.eye(2), "odometer")


def test_gnss_data_rejects_bad_std():
    with pytest.raises(ValueError):
        GnssData([0.0], [[0.5, 0.1, 0]], [[0.1, 0.0, 0.1]])
    g = GnssData(np.arange(10.0), np.zeros((10, 3)), np.ones((10, 3)))
    assert list(g.without([(2, 5)]).t) == [0, 1, 5, 6, 7, 8, 9]


# ---------------------------------------------------------------- gate and fixer


def _wheel_rates(spin, yaw_rate, T=1.5, rate=200.0, leak=(0.0, 0.0)):
    t = np.arange(int(T * rate) + 1) / rate
    a = spin * t
    w = np.stack([np.full_like(t, spin), yaw_rate * np.sin(a) + leak[0] * spin, yaw_rate * np.cos(a) + leak[1] * spin], 1)
    return t, w


def test_gate_examples():
    assert straight_line_gate(*_wheel_rates(10.0, 0.0))
    assert straight_line_gate(*_wheel_rates(10.0, 0.0, leak=(0.03, -0.02)))
    assert not straight_line_gate(*_wheel_rates(10.0, 10 * DEG))
    with pytest.raises(ValueError):
        straight_line_gate(*_wheel_rates(10.0, 0.0, T=0.5))


@settings(max_examples=30, deadline=None)
@given(st.floats(3.0, 30.0), st.floats(1.0, 20.0))
def test_gate_closes_for_turns(spin, yaw_deg):
    assert not straight_line_gate(*_wheel_rates(spin, yaw_deg * DEG))


def test_gate_object_needs_full_window():
    g = StraightLineGate()
    t, w = _wheel_rates(10.0, 0.0)
    for ti, wi in zip(t[:100], w[:100]):
        g.push(ti, wi)
    assert not g.is_open()
    for ti, wi in zip(t[100:], w[100:]):
        g.push(ti, wi)
    assert g.is_open() and g.span() == pytest.approx(1.0)


def test_fixer_examples():
    f = ConvergenceFixer(sigma_fix=0.05 * DEG, hold=10.0)
    for t in np.arange(0, 100, 0.1):
        assert not f.update(t, [0.1 * DEG, 0.01 * DEG])
    f = ConvergenceFixer(sigma_fix=0.05 * DEG, hold=10.0)
    for t in np.arange(0, 100.05, 0.1):
        f.update(t, [0.01 * DEG] * 2 if t >= 42 - 1e-9 else [1 * DEG] * 2)
    assert f.fixed and f.fixed_at == pytest.approx(52.0)
