import pathlib

import numpy as np
import pytest

from wheelgins.config import SCHEMA, defaults, describe_defaults, parse_config, parse_config_text, parse_windows
from wheelgins.errors import ConfigError
from wheelgins.mech import DEG

MINIMAL = "[paths]\nimu = a.txt\ngnss = b.txt\ntruth = c.txt\noutput = out\n[install]\nwheel_radius = 0.3\n"


def test_minimal_config_takes_defaults(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(MINIMAL)
    cfg = parse_config(p)
    d = defaults()
    for section, keys in SCHEMA.items():
        for key in keys:
            if section == "paths" or (section, key) == ("install", "wheel_radius"):
                continue
            assert cfg[section][key] == d[section][key], (section, key)
    assert cfg.path("imu") == str(tmp_path / "a.txt")
    assert cfg.path("output", str(tmp_path / "x")) == str(tmp_path / "x")
    fc = cfg.filter_config()
    assert fc.gnss_rate == 1.0 and fc.velocity_rate == 2.0
    assert fc.use_wheel_rate and fc.estimate_mount


def test_gnss_rate_integer_is_float():
    cfg = parse_config_text(MINIMAL + "[rates]\ngnss_rate_hz = 1\n")
    assert cfg["rates"]["gnss_rate_hz"] == 1.0 and isinstance(cfg["rates"]["gnss_rate_hz"], float)


def test_misspelled_key_is_named():
    with pytest.raises(ConfigError, match="wheel_radus"):
        parse_config_text("[install]\nwheel_radus = 0.3\n")


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"\[instal\]"):
        parse_config_text(MINIMAL + "[instal]\nx = 1\n")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="wheel_radius"):
        parse_config_text("[paths]\nimu = a.txt\n")


@pytest.mark.parametrize("section,key,value", [
    ("install", "wheel_radius", "abc"),
    ("features", "gnss", "maybe"),
    ("simulation", "gnss_lever", "1 2"),
    ("simulation", "seed", "1.5"),
])
def test_type_mismatch(section, key, value):
    text = MINIMAL.replace("wheel_radius = 0.3", "wheel_radius = abc") if key == "wheel_radius" else (
        MINIMAL + f"[{section}]\n{key} = {value}\n")
    with pytest.raises(ConfigError, match=key):
        parse_config_text(text)


@pytest.mark.parametrize("extra", [
    "[measurement]\nsigma_fwd = 0\n",
    "[rates]\ngnss_rate_hz = -1\n",
    "[measurement]\ngate_prob = 1.5\n",
    "[initial]\nlat_deg = 30\n",
    "[initial_std]\nlever = 0\n",
])
def test_invalid_values(extra):
    with pytest.raises(ConfigError):
        parse_config_text(MINIMAL + extra).filter_config()


def test_sim_and_filter_builders():
    text = MINIMAL + (
        "[simulation]\nseed = 7\nradius_scale = 0.005\ntheta_m_deg = -1.22\n"
        "[features]\nwheel_rate_constraint = off\n[outages]\nwindows = 100:160, 200:230\n"
    )
    cfg = parse_config_text(text)
    sc = cfg.sim_config()
    assert sc.seed == 7 and sc.install.s_r == 0.005
    assert sc.wheel_radius * (1 + 0.005) == pytest.approx(0.3)
    assert sc.install.theta_m == pytest.approx(-1.22 * DEG)
    fc = cfg.filter_config()
    assert not fc.use_wheel_rate and fc.outages == ((100.0, 160.0), (200.0, 230.0))
    assert cfg.truth_install()["radius_scale"] == 0.005


def test_overrides():
    cfg = parse_config_text(MINIMAL).with_overrides(seed=9, outages="10:20", disable=["gnss", "wheel-rate"])
    assert cfg["simulation"]["seed"] == 9 and cfg.outages == ((10.0, 20.0),)
    assert not cfg["features"]["gnss"] and not cfg["features"]["wheel_rate_constraint"]
    for bad in (dict(seed=-1), dict(outages="5:1"), dict(disable=["odometer"])):
        with pytest.raises(ConfigError):
            parse_config_text(MINIMAL).with_overrides(**bad)


def test_parse_windows():
    assert parse_windows("") == ()
    assert parse_windows("1:2; 3.5:4") == ((1.0, 2.0), (3.5, 4.0))
    with pytest.raises(ValueError):
        parse_windows("3")


def test_described_defaults_reparse():
    """Every key has one documented default, and the listing itself is a valid config."""
    text = describe_defaults()
    lines = [ln for ln in text.splitlines() if "(unset)" not in ln]
    text = "\n".join(ln.replace("(required)", "0.3") for ln in lines)
    cfg = parse_config_text(text)
    d = defaults()
    for section, keys in d.items():
        for key, val in keys.items():
            if val is None or (section, key) == ("install", "wheel_radius"):
                continue
            got = cfg[section][key]
            assert np.array_equal(np.asarray(got, dtype=object), np.asarray(val, dtype=object)), (section, key)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.ini")


def test_formats_reference_listing_parses():
    """The commented listing in FORMATS.md is a valid config with the same defaults."""
    doc = pathlib.Path(__file__).resolve().parents[1] / "FORMATS.md"
    block = doc.read_text().split("```ini\n")[1].split("```")[0]
    text = "\n".join(ln.replace("(required)", "0.3") for ln in block.splitlines() if "(unset)" not in ln)
    cfg = parse_config_text(text)
    d = defaults()
    documented, section = set(), None
    for ln in block.splitlines():
        if ln.startswith("["):
            section = ln[1:ln.index("]")]
        elif "=" in ln:
            documented.add((section, ln.split("=")[0].strip()))
    assert documented == {(sec, key) for sec, keys in SCHEMA.items() for key in keys}
    for section, keys in d.items():
        for key, val in keys.items():
            if val is None or (section, key) == ("install", "wheel_radius"):
                continue
            assert np.array_equal(np.asarray(cfg[section][key], dtype=object), np.asarray(val, dtype=object)), (section, key)
