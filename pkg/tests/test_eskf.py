import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

import oracles as O
from conftest import to_full
from wheelgins import eskf
from wheelgins.eskf import ProcessNoiseConfig, build_F, discretize, feedback, inject, predict, state_error, update
from wheelgins.mech import ImuErrors, ImuSample, NavState
from wheelgins.state import BA, BG, INDEX, LW, NDIM, PHIM, SA, SG, SR

# finite-difference steps: 100 m in position (curvature scale is the earth radius), 1 % of the
# typical magnitude elsewhere
FD_STEPS = O.STATE_SCALE * 1e-2
FD_STEPS[0:3] = 100.0


def _linearization_point(rng):
    x = O.random_state(rng)
    w = np.array([rng.uniform(2, 20) * rng.choice([-1, 1]), 0, 0]) + rng.normal(0, 0.3, 3)
    f = rng.normal(0, 2, 3) + x.R.T @ np.array([0, 0, -9.8])
    return x, w, f


def _F(x, w, f, noise=ProcessNoiseConfig()):
    return build_F(NavState(0, x.pos, x.vel, x.R), ImuSample(0, w, f), ImuErrors(x.bg, x.ba, x.sg, x.sa), noise)


@pytest.mark.parametrize("seed", range(5))
def test_F_matches_error_dynamics(seed):
    """Navigation rows of F against central differences of the exact nonlinear error rate.

    Entries are compared per entry at 1e-5 relative wherever the state-normalised entry
    is above the finite-difference floor (1e-6); below it they must agree absolutely.
    """
    rng = np.random.default_rng(seed)
    x, w, f = _linearization_point(rng)
    rw, rf = O.raw_from_true(w, x.bg, x.sg), O.raw_from_true(f, x.ba, x.sa)
    F = _F(x, w, f)
    Fo = O.central_jacobian(lambda d: O.error_rate(x, d, rw, rf), NDIM, FD_STEPS)
    S = O.STATE_SCALE
    norm = np.abs(F[:9]) * S[None, :] / S[:9, None]
    dn = np.abs(F[:9] - Fo) * S[None, :] / S[:9, None]
    rel = np.abs(F[:9] - Fo) / np.maximum(np.abs(F[:9]), 1e-300)
    big = norm > 1e-6
    assert big.sum() > 50
    assert rel[big].max() < 1e-5
    assert dn[~big].max() < 1e-9


def test_F_gauss_markov_and_installation_rows():
    noise = ProcessNoiseConfig(bg_tau=1000.0, ba_tau=2000.0, sg_tau=3000.0, sa_tau=4000.0)
    x, w, f = _linearization_point(np.random.default_rng(1))
    F = _F(x, w, f, noise)
    for sl, tau in ((BG, 1000.0), (BA, 2000.0), (SG, 3000.0), (SA, 4000.0)):
        assert np.array_equal(F[sl, sl], -np.eye(3) / tau)
        off = F[sl].copy()
        off[:, sl] = 0
        assert not off.any()
    assert not F[LW.start:].any()


def test_phi_first_order_against_expm():
    """I + F dt differs from expm(F dt) by F^2 dt^2 / 2 plus third-order terms."""
    x, w, f = _linearization_point(np.random.default_rng(2))
    F = _F(x, w, f)
    noise = ProcessNoiseConfig()
    nav = NavState(0, x.pos, x.vel, x.R)
    diffs = []
    for dt in (0.01, 0.005, 0.0025):
        Phi, _ = discretize(F, noise, nav, None, dt)
        E = expm(F * dt)
        resid = E - Phi - 0.5 * (F @ F) * dt**2
        assert np.linalg.norm(resid, 2) < np.linalg.norm(F @ F @ F, 2) * dt**3 / 6 * 1.01
        diffs.append(np.linalg.norm(Phi - E, 2))
    assert 3.8 < diffs[0] / diffs[1] < 4.2 and 3.8 < diffs[1] / diffs[2] < 4.2


def test_discretize_limits():
    x, w, f = _linearization_point(np.random.default_rng(3))
    F = _F(x, w, f)
    noise = ProcessNoiseConfig()
    nav = NavState(0, x.pos, x.vel, x.R)
    Phi, Qd = discretize(F, noise, nav, None, 1e-9)
    assert np.abs(Phi - np.eye(NDIM)).max() < 1e-7 and np.abs(Qd).max() <= 1.01e-9 * noise.qc().max()
    G, Q = eskf.noise_input_matrix(nav, noise)
    _, Qd0 = discretize(np.zeros((NDIM, NDIM)), noise, nav, None, 0.01)
    assert np.allclose(Qd0, G @ Q @ G.T * 0.01, rtol=0, atol=1e-20)
    assert np.allclose(np.diag(G @ Q @ G.T), noise.qc(), rtol=1e-12, atol=0)
    assert np.allclose(Qd, Qd.T) and np.linalg.eigvalsh(discretize(F, noise, nav, None, 0.005)[1]).min() > -1e-20
    for dt in (0.0, -1.0, 2.0):
        with pytest.raises(ValueError):
            discretize(F, noise, nav, None, dt)


def test_process_noise_validation():
    with pytest.raises(ValueError):
        ProcessNoiseConfig(bg_tau=0.0).validate()


def test_predict_examples(rng):
    A = rng.normal(size=(NDIM, NDIM))
    P = A @ A.T
    assert np.array_equal(predict(P, np.eye(NDIM), np.zeros((NDIM, NDIM))), 0.5 * (P + P.T))
    P2 = predict(P, np.eye(NDIM), 1e-3 * np.eye(NDIM))
    assert np.allclose(np.diag(P2) - np.diag(P), 1e-3, atol=1e-12)


def test_predict_many_stays_psd(rng):
    x, w, f = _linearization_point(rng)
    F = _F(x, w, f)
    Phi, Qd = discretize(F, ProcessNoiseConfig(), NavState(0, x.pos, x.vel, x.R), None, 0.005)
    P = np.diag(O.STATE_SCALE**2)
    for k in range(10_000):
        P = predict(P, Phi, Qd)
        if k % 1000 == 999:
            assert np.array_equal(P, P.T)
            assert np.linalg.eigvalsh(P).min() >= -1e-12 * np.trace(P)


def test_update_examples():
    P = np.diag(np.arange(1.0, 4.0))
    x = np.array([0.1, 0.2, 0.3])
    r = update(P, x, np.zeros((1, 3)), [0.5], [[1.0]])
    assert np.array_equal(r.P, P) and np.array_equal(r.x, x)
    r = update([[1.0]], [0.0], [[1.0]], [1.0], [[1.0]])
    assert r.x[0] == pytest.approx(0.5) and r.P[0, 0] == pytest.approx(0.5) and r.accepted
    assert r.nis == pytest.approx(0.5)


def test_update_gate():
    r = update([[1.0]], [0.0], [[1.0]], [100.0], [[1.0]])
    assert not r.accepted and r.nis == pytest.approx(5000.0)
    assert r.threshold == pytest.approx(7.879, abs=1e-3)
    r = update([[1.0]], [0.0], [[1.0]], [100.0], [[1.0]], enforce_gate=False)
    assert r.accepted and r.x[0] == pytest.approx(50.0)


def test_update_singular_innovation():
    with pytest.raises(ValueError):
        update(np.zeros((2, 2)), np.zeros(2), np.eye(2), np.ones(2), np.zeros((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_joseph_equals_simple_form(seed, k):
    rng = np.random.default_rng(seed)
    n = 8
    A = rng.normal(size=(n, n))
    P = A @ A.T + np.eye(n)
    H = rng.normal(size=(k, n))
    B = rng.normal(size=(k, k))
    R = B @ B.T + np.eye(k)
    r = update(P, np.zeros(n), H, rng.normal(size=k), R, gate_prob=None)
    K = P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
    assert np.allclose(r.P, (np.eye(n) - K @ H) @ P, atol=1e-10 * np.abs(P).max())


def test_inject_feedback_inverse(rng):
    for _ in range(20):
        truth = to_full(O.random_state(rng))
        dx = rng.normal(size=NDIM) * O.STATE_SCALE * 0.1
        est = inject(truth, dx)
        assert np.allclose(state_error(est, truth), dx, rtol=1e-7, atol=1e-12)
        back, zero = feedback(est, dx)
        assert not zero.any()
        assert np.abs(state_error(back, truth)).max() < 1e-6 * np.abs(dx).max()


def test_inject_matches_oracle(rng):
    x = O.random_state(rng)
    dx = rng.normal(size=NDIM) * O.STATE_SCALE * 0.1
    a, b = inject(to_full(x), dx), O.inject(x, dx)
    assert np.allclose(a.nav.pos, b.pos, rtol=1e-15) and np.allclose(a.nav.att, b.R, atol=1e-14)
    assert np.allclose(a.install.l_w, b.lw) and a.install.s_r == pytest.approx(b.sr)
    assert np.allclose(a.imu_err.gyro_scale, b.sg)


def test_feedback_examples():
    truth = to_full(O.random_state(np.random.default_rng(9)))
    back, zero = feedback(truth, np.zeros(NDIM))
    assert np.array_equal(back.nav.pos, truth.nav.pos) and np.array_equal(back.nav.vel, truth.nav.vel)
    assert np.allclose(back.nav.att, truth.nav.att, atol=1e-15)
    # an estimated error of +1 m north means the estimate sits 1 m north of truth: feedback moves it south
    dx = np.zeros(NDIM)
    dx[0] = 1.0
    back, _ = feedback(truth, dx)
    rm, _ = O.radii(truth.nav.pos[0])
    assert back.nav.pos[0] - truth.nav.pos[0] == pytest.approx(-1.0 / (rm + truth.nav.pos[2]), rel=1e-9)


def test_feedback_small_angle_composition(rng):
    truth = to_full(O.random_state(rng))
    for mag in (1e-2, 1e-3):
        phi0 = rng.normal(size=3)
        phi0 *= mag / np.linalg.norm(phi0)
        dx = np.zeros(NDIM)
        dx[6:9] = phi0
        est = inject(truth, dx)
        back, _ = feedback(est, dx)
        assert np.linalg.norm(back.nav.att - truth.nav.att) <= mag**2


def test_layout_is_shared():
    assert [INDEX[k].start for k in ("p", "v", "phi", "bg", "ba", "sg", "sa", "lw", "phim", "sr")] == [
        0, 3, 6, 9, 12, 15, 18, 21, 23, 25]
    assert SR.stop == NDIM == 26 and PHIM.stop - PHIM.start == 2
