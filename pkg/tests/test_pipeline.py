import numpy as np
import pytest
from dataclasses import replace

from wheelgins.errors import DataError, DivergenceError
from wheelgins.experiments import default_install, position_errors, session
from wheelgins.mech import ImuData, run_ins
from wheelgins.pipeline import KIND_CODES, FilterConfig, FusionSession
from wheelgins.scenarios import ORIGIN, loop_600m
from wheelgins.sim import Dwell, SimConfig, Straight, Arc, TrajectorySpec, simulate
from wheelgins.state import InstallationParams


@pytest.fixture(scope="module")
def short_sim():
    spec = TrajectorySpec(ORIGIN, 0.3, [Dwell(5.0), Straight(60.0, 2.0), Arc(20.0, np.pi / 2, 2.0), Straight(60.0, 2.0)])
    return simulate(spec, SimConfig(seed=1))


@pytest.fixture(scope="module")
def short_run(short_sim):
    return session(short_sim, FilterConfig()).run().result()


def _true_install(sim):
    c = sim.config
    return InstallationParams((c.install.l_y, c.install.l_z), c.install.phi_m, sim.r_meas, c.install.s_r, c.l_gnss_v)


def test_noise_free_loop_closes():
    sim = simulate(loop_600m(), SimConfig().noise_free())
    res = session(sim, FilterConfig(), install0=_true_install(sim)).run().result()
    d = position_errors(res, sim)
    assert np.hypot(d[-1, 0], d[-1, 1]) < 1e-2


def test_update_cadence(short_sim, short_run):
    r = short_run
    tv = r.innov_t[r.innov_kind == KIND_CODES["velocity"]]
    assert np.allclose(np.diff(tv), 0.5, atol=1e-9)
    tg = r.innov_t[r.innov_kind == KIND_CODES["gnss"]]
    assert np.allclose(tg, short_sim.gnss.t[: len(tg)], atol=1e-9)
    assert len(tg) == len(short_sim.gnss)
    tw = r.innov_t[r.innov_kind == KIND_CODES["wheel_rate"]]
    assert len(tw) > 0 and np.allclose(np.round(tw * 2), tw * 2, atol=1e-6)
    assert np.allclose(np.diff(r.t), 0.1, atol=1e-9)


def test_wheel_rate_only_on_straights(short_sim, short_run):
    r = short_run
    tw = r.innov_t[r.innov_kind == KIND_CODES["wheel_rate"]]
    tr = short_sim.imu_truth
    rate = np.abs(np.gradient(np.unwrap(tr.psi_v), tr.t))
    turning = tr.t[rate > np.deg2rad(1.0)]
    assert not np.any((tw > turning.min() + 0.5) & (tw < turning.max()))


def test_outage_has_no_gnss_updates(short_sim):
    cfg = FilterConfig(outages=((20.0, 40.0),))
    r = session(short_sim, cfg).run().result()
    tg = r.innov_t[r.innov_kind == KIND_CODES["gnss"]]
    assert not np.any((tg >= 20.0) & (tg < 40.0))
    assert np.any(tg < 20.0) and np.any(tg >= 40.0)
    assert r.outages == ((20.0, 40.0),)


def test_disabled_estimation_keeps_parameters(short_sim):
    cfg = FilterConfig(estimate_lever=False, estimate_mount=False, estimate_radius=False)
    inst = InstallationParams((0.01, -0.01), (0.001, 0.002), short_sim.r_meas, 0.001, short_sim.config.l_gnss_v)
    r = session(short_sim, cfg, install0=inst).run().result()
    rec = r.param_records()
    assert np.all(rec[:, 1:3] == [0.01, -0.01]) and np.all(rec[:, 3:5] == [0.001, 0.002])
    assert np.all(rec[:, 5] == 0.001) and np.all(rec[:, 6:] == 0.0)
    assert r.count("wheel_rate") == 0


def test_no_updates_reproduces_free_inertial(short_sim):
    cfg = FilterConfig(use_velocity=False, use_gnss=False, use_wheel_rate=False)
    # free inertial with MEMS errors leaves any sane envelope within a minute, so stop at 20 s
    r = session(short_sim, cfg).run(20.0).result()
    assert len(r.innov_t) == 0
    n = int(np.searchsorted(short_sim.imu.t, 20.0 + 1e-9))
    t, p, v, att = run_ins(short_sim.initial_nav(), ImuData(short_sim.imu.t[:n], short_sim.imu.gyro[:n], short_sim.imu.accel[:n]),
                          short_sim.config.earth())
    idx = np.searchsorted(t, r.t - 1e-9)
    assert np.allclose(r.pos, p[idx], rtol=0, atol=1e-12)
    assert np.allclose(r.vel, v[idx], rtol=0, atol=1e-9)
    assert np.allclose(r.att, att[idx], rtol=0, atol=1e-12)


def test_rerun_bit_identical(short_sim, short_run):
    again = session(short_sim, FilterConfig()).run().result()
    for name in ("t", "pos", "vel", "att", "lever", "mount", "radius_scale", "std", "innov_nis"):
        assert np.array_equal(getattr(again, name), getattr(short_run, name)), name


def test_fork_matches_configured_outage(short_sim):
    """Forking at the outage start and configuring the outage up front give the same run,
    and both agree with the baseline before the outage."""
    start, end = 30.0, 50.0
    base = session(short_sim, FilterConfig()).run().result()
    pre = session(short_sim, FilterConfig()).run(start)
    forked = pre.fork([(start, end)]).run().result()
    upfront = session(short_sim, FilterConfig(outages=((start, end),))).run().result()
    before = base.t < start
    assert np.array_equal(forked.pos[before], base.pos[before])
    assert np.array_equal(upfront.pos[before], base.pos[before])
    assert np.array_equal(forked.pos, upfront.pos) and np.array_equal(forked.std, upfront.std)
    assert not np.array_equal(forked.pos[~before], base.pos[~before])
    # the parent session is unaffected by the fork
    assert np.array_equal(pre.run().result().pos, base.pos)


def test_fixer_fixes_mount(short_sim, short_run):
    assert short_run.fixed_at is not None and short_run.fixed_at < 60.0
    tw = short_run.innov_t[short_run.innov_kind == KIND_CODES["wheel_rate"]]
    assert tw.max() <= short_run.fixed_at + 1e-9


def test_static_init_seeds_gyro_bias():
    spec = TrajectorySpec(ORIGIN, 0.3, [Dwell(10.0), Straight(20.0, 2.0)])
    sim = simulate(spec, SimConfig(seed=4))
    ses = session(sim, FilterConfig(static_init=9.0))
    err = ses.state.imu_err.gyro_bias - sim.imu_errors.gyro_bias
    # the bias estimate is limited by white noise averaged over 9 s and by the gyro scale error
    assert np.all(np.abs(err) < 5e-4)


def test_bad_start_time(short_sim):
    nav = short_sim.initial_nav()
    nav.t = 0.0012
    with pytest.raises(DataError):
        FusionSession(FilterConfig(), short_sim.imu, short_sim.gnss, nav, default_install(short_sim))


def test_divergence_reported(short_sim):
    bad = replace(short_sim, imu=ImuData(short_sim.imu.t, short_sim.imu.gyro, short_sim.imu.accel + [0.0, 0.0, 80.0]))
    cfg = FilterConfig(use_velocity=False, use_gnss=False, use_wheel_rate=False)
    with pytest.raises(DivergenceError, match="diverged"):
        session(bad, cfg).run()


def test_invalid_filter_config():
    with pytest.raises(ValueError):
        FilterConfig(velocity_rate=0.0).validate()
    with pytest.raises(ValueError):
        FilterConfig(outages=((5.0, 5.0),)).validate()


def test_psd_tracking(short_sim, short_run):
    r = session(short_sim, FilterConfig(check_psd=True)).run().result()
    assert 0.0 < r.worst_psd < 1.0
    assert np.isnan(short_run.worst_psd)
    assert np.all(np.isfinite(r.std))
