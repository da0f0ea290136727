import numpy as np
import pytest
from scipy.integrate import solve_ivp

import oracles as O
from wheelgins.geo import WGS84, euler_to_rotation, is_rotation, rotation_to_euler
from wheelgins.mech import DEG, ImuData, ImuErrors, ImuSample, NavState, compensate, propagate, run_ins


def _static_imu(pos, R, rate=200.0, duration=60.0):
    n = int(duration * rate) + 1
    t = np.arange(n) / rate
    wie, _ = O.rates(pos, np.zeros(3))
    g = np.array([0.0, 0.0, O.gravity(pos[0], pos[2])])
    # at rest the specific force also balances the centripetal term, which normal gravity already contains
    return ImuData(t, np.tile(R.T @ wie, (n, 1)), np.tile(-R.T @ g, (n, 1)))


def test_compensate_examples():
    raw = ImuSample(0.0, np.array([0.101, 0, 0]), np.array([1.0, 2, 3]))
    assert np.array_equal(compensate(raw, ImuErrors()).gyro, raw.gyro)
    out = compensate(raw, ImuErrors(gyro_bias=[0.001, 0, 0]))
    assert out.gyro == pytest.approx([0.1, 0, 0], abs=1e-15)
    out = compensate(ImuSample(0.0, np.array([1.01, 0, 0]), np.zeros(3)), ImuErrors(gyro_scale=[0.01, 0, 0]))
    assert out.gyro == pytest.approx([1.0, 0, 0], abs=1e-12)


def test_compensate_rejects_singular_scale():
    with pytest.raises(ValueError):
        compensate(ImuSample(0.0, np.ones(3), np.ones(3)), ImuErrors(gyro_scale=[-1.0, 0, 0]))


def test_compensate_inverts_forward_model(rng):
    for _ in range(50):
        e = ImuErrors(rng.normal(0, 1e-3, 3), rng.normal(0, 0.01, 3), rng.normal(0, 0.03, 3), rng.normal(0, 0.03, 3))
        w, f = rng.normal(size=3), rng.normal(size=3)
        raw = ImuSample(0.0, (1 + e.gyro_scale) * w + e.gyro_bias, (1 + e.accel_scale) * f + e.accel_bias)
        c = compensate(raw, e)
        assert np.allclose(c.gyro, w, atol=1e-14) and np.allclose(c.accel, f, atol=1e-14)


def test_stationary_drift():
    pos = np.array([30.5 * DEG, 114.3 * DEG, 20.0])
    R = euler_to_rotation((0.02, -0.01, 1.0))
    imu = _static_imu(pos, R)
    _, p, v, att = run_ins(NavState(0.0, pos, np.zeros(3), R), imu)
    d = (p[-1] - pos) * O.dr_scale(pos)
    assert np.linalg.norm(d) < 1e-3
    assert is_rotation(att[-1])


def test_propagate_rejects_bad_dt():
    s = NavState(0.0, np.array([0.5, 0.1, 0.0]), np.zeros(3), np.eye(3))
    a = ImuSample(0.0, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        propagate(s, a, ImuSample(0.0, np.zeros(3), np.zeros(3)))
    with pytest.raises(ValueError):
        propagate(s, a, ImuSample(0.05, np.zeros(3), np.zeros(3)))


def test_pure_yaw_rotation_no_earth_rate():
    earth = WGS84.without_rotation()
    rate, n = 200.0, 9 * 200 + 1
    t = np.arange(n) / rate
    pos = np.array([0.3, 0.2, 0.0])
    g = O.gravity(pos[0], pos[2])
    imu = ImuData(t, np.tile([0, 0, 10 * DEG], (n, 1)), np.tile([0, 0, -g], (n, 1)))
    _, _, _, att = run_ins(NavState(0.0, pos, np.zeros(3), np.eye(3)), imu, earth)
    yaw = rotation_to_euler(att[-1]).yaw
    assert abs(yaw - 90 * DEG) < 1e-6 * DEG


def _reference_solution(pos0, vel0, R0, w_fn, f_fn, T, omega_e=O.OMEGA_E):
    """Dense-output strapdown integration of the continuous equations with the oracle model."""

    def rhs(t, y):
        p, v, R = y[0:3], y[3:6], y[6:15].reshape(3, 3)
        pd, vd, Rd = O.nav_rates(p, v, R, w_fn(t), f_fn(t), omega_e)
        return np.concatenate([pd, vd, Rd.ravel()])

    y0 = np.concatenate([pos0, vel0, R0.ravel()])
    return solve_ivp(rhs, (0, T), y0, method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)


def test_constant_accel_equator_against_reference():
    pos0 = np.array([0.0, 0.0, 0.0])
    g = O.gravity(0.0, 0.0)
    w_fn = lambda t: np.zeros(3)  # noqa: E731
    f_fn = lambda t: np.array([1.0, 0.0, -g])  # noqa: E731
    ref = _reference_solution(pos0, np.zeros(3), np.eye(3), w_fn, f_fn, 10.0, omega_e=0.0)
    rate = 200.0
    t = np.arange(int(10 * rate) + 1) / rate
    imu = ImuData(t, np.zeros((len(t), 3)), np.tile(f_fn(0), (len(t), 1)))
    _, p, v, _ = run_ins(NavState(0.0, pos0, np.zeros(3), np.eye(3)), imu, WGS84.without_rotation())
    yr = ref.sol(10.0)
    assert v[-1, 0] == pytest.approx(10.0, abs=1e-2)
    assert np.abs(v[-1] - yr[3:6]).max() < 1e-4


def _smooth_case():
    w_fn = lambda t: np.array([0.3 * np.sin(0.7 * t), 0.2 * np.cos(0.5 * t), 0.1 + 0.05 * t])  # noqa: E731
    f_fn = lambda t: np.array([0.5 * np.cos(0.3 * t), 0.2, -9.7 + 0.1 * np.sin(t)])  # noqa: E731
    pos0 = np.array([0.5, 1.9, 50.0])
    vel0 = np.array([3.0, -1.0, 0.0])
    R0 = euler_to_rotation((0.05, -0.03, 0.7))
    return w_fn, f_fn, pos0, vel0, R0


@pytest.mark.parametrize("rate", [100.0, 200.0, 400.0])
def test_smooth_input_against_reference(rate):
    w_fn, f_fn, pos0, vel0, R0 = _smooth_case()
    T = 10.0
    ref = _reference_solution(pos0, vel0, R0, w_fn, f_fn, T)
    t = np.arange(int(T * rate) + 1) / rate
    imu = ImuData(t, np.array([w_fn(x) for x in t]), np.array([f_fn(x) for x in t]))
    _, p, v, att = run_ins(NavState(0.0, pos0, vel0, R0), imu)
    err = np.linalg.norm((p[-1] - ref.sol(T)[0:3]) * O.dr_scale(pos0))
    assert err < 1e-2 * (100.0 / rate)


def test_halving_dt_reduces_error():
    w_fn, f_fn, pos0, vel0, R0 = _smooth_case()
    T = 10.0
    ref = _reference_solution(pos0, vel0, R0, w_fn, f_fn, T).sol(T)
    errs = []
    for rate in (50.0, 100.0, 200.0):
        t = np.arange(int(T * rate) + 1) / rate
        imu = ImuData(t, np.array([w_fn(x) for x in t]), np.array([f_fn(x) for x in t]))
        _, p, v, _ = run_ins(NavState(0.0, pos0, vel0, R0), imu)
        errs.append(np.linalg.norm((p[-1] - ref[0:3]) * O.dr_scale(pos0)))
    assert errs[0] / errs[1] > 1.9 and errs[1] / errs[2] > 1.9


def test_orthonormal_after_many_steps():
    n = 1_000_001
    rate = 200.0
    t = np.arange(n) / rate
    rng = np.random.default_rng(7)
    gyro = rng.normal(0, 1.0, (n, 3)) + [20.0, 0, 0]
    accel = np.tile([0.0, 0.0, -9.8], (n, 1))
    # free inertial over 1.4 h of spinning drifts far, so only the attitude is examined
    _, _, _, att = run_ins(NavState(0.0, np.array([0.5, 0.1, 0.0]), np.zeros(3), np.eye(3)), ImuData(t, gyro, accel))
    assert is_rotation(att[-1], 1e-9)


def test_propagation_deterministic():
    w_fn, f_fn, pos0, vel0, R0 = _smooth_case()
    t = np.arange(401) / 200.0
    imu = ImuData(t, np.array([w_fn(x) for x in t]), np.array([f_fn(x) for x in t]))
    a = run_ins(NavState(0.0, pos0, vel0, R0), imu)
    b = run_ins(NavState(0.0, pos0, vel0, R0), imu)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_propagate_matches_run_ins():
    w_fn, f_fn, pos0, vel0, R0 = _smooth_case()
    t = np.arange(21) / 200.0
    imu = ImuData(t, np.array([w_fn(x) for x in t]), np.array([f_fn(x) for x in t]))
    _, p, v, att = run_ins(NavState(0.0, pos0, vel0, R0), imu)
    s = NavState(0.0, pos0, vel0, R0)
    for k in range(1, len(t)):
        s = propagate(s, imu[k - 1], imu[k], [imu[j] for j in range(max(0, k - 3), k - 1)])
    assert np.allclose(s.pos, p[-1], rtol=0, atol=1e-12) and np.allclose(s.att, att[-1], atol=1e-12)
