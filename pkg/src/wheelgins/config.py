"""INI run configuration.

Every key has exactly one default, listed in :data:`SCHEMA` (``REQUIRED`` marks
the only mandatory key). Unknown sections and keys are errors. Relative paths
are resolved against the directory of the config file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .eskf import HOUR, ProcessNoiseConfig
from .mech import DEG, ImuErrors
from .metrics import ParamBands
from .models import VelocityNoise
from .pipeline import FilterConfig, FixerConfig, GateConfig, InitialStd
from .sim import InstallTruth, SimConfig
from .state import InstallationParams

REQUIRED = object()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _vec(n: int):
    def parse(s: str) -> tuple:
        parts = s.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        return tuple(float(p) for p in parts)

    parse.__name__ = f"vector{n}"
    return parse


def _opt_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("", "auto", "none") else float(s)


def parse_windows(s: str) -> tuple:
    """``"a:b, c:d"`` (seconds) into ((a, b), (c, d)); empty string gives no windows."""
    out = []
    for part in s.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition(":")
        if not sep:
            raise ValueError(f"window {part!r} is not of the form start:end")
        a, b = float(a), float(b)
        if not a < b:
            raise ValueError(f"window {part!r} is empty")
        out.append((a, b))
    return tuple(out)


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.replace(",", " ").split())


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "paths": {
        "imu": (str, "imu.txt"),
        "gnss": (str, "gnss.txt"),
        "truth": (str, "truth.txt"),
        "output": (str, "out"),
    },
    "scenario": {
        "name": (str, "nominal"),
        "duration": (_opt_float, None),
    },
    "simulation": {
        "seed": (int, 0),
        "imu_rate_hz": (float, 200.0),
        "gnss_rate_hz": (float, 1.0),
        "gnss_std": (float, 0.02),
        "lever_y": (float, 0.02),
        "lever_z": (float, 0.03),
        "theta_m_deg": (float, -1.22),
        "psi_m_deg": (float, 1.60),
        "radius_scale": (float, 0.0),
        "gnss_lever": (_vec(3), (0.0, -0.5, -1.5)),
        "earth_rotation": (_bool, True),
        "imu_errors": (_bool, True),
        "imu_noise": (_bool, True),
    },
    "install": {
        "wheel_radius": (float, REQUIRED),
        "lever_y": (float, 0.0),
        "lever_z": (float, 0.0),
        "theta_m_deg": (float, 0.0),
        "psi_m_deg": (float, 0.0),
        "radius_scale": (float, 0.0),
        "gnss_lever": (_vec(3), None),
    },
    "initial": {
        "lat_deg": (_opt_float, None),
        "lon_deg": (_opt_float, None),
        "height": (_opt_float, None),
        "heading_deg": (_opt_float, None),
        "velocity": (_vec(3), (0.0, 0.0, 0.0)),
    },
    "initial_std": {
        "pos": (float, 1.0),
        "vel": (float, 0.1),
        "att_deg": (_vec(3), (0.5, 0.5, 1.0)),
        "gyro_bias_deg_h": (float, 200.0),
        "accel_bias": (float, 0.01),
        "gyro_scale": (float, 0.03),
        "accel_scale": (float, 0.03),
        "lever": (float, 0.05),
        "mount_deg": (float, 2.0),
        "radius_scale": (float, 0.005),
    },
    "process": {
        "arw_deg_sqrt_h": (float, 0.24),
        "vrw_m_s_sqrt_h": (float, 3.0),
        "gyro_bias_deg_h": (float, 200.0),
        "accel_bias": (float, 0.01),
        "gyro_scale": (float, 0.03),
        "accel_scale": (float, 0.03),
        "tau_gyro_bias": (float, HOUR),
        "tau_accel_bias": (float, HOUR),
        "tau_gyro_scale": (float, HOUR),
        "tau_accel_scale": (float, HOUR),
        "lever_rw": (float, 1e-5),
        "mount_rw": (float, 1e-6),
        "radius_scale_rw": (float, 1e-6),
    },
    "measurement": {
        "sigma_fwd": (float, 0.05),
        "sigma_lat": (float, 0.05),
        "sigma_vert": (float, 0.05),
        "sigma_wheel_rate": (_opt_float, None),
        "gnss_std": (_opt_float, None),
        "gate_prob": (float, 0.995),
    },
    "rates": {
        "velocity_hz": (float, 2.0),
        "gnss_rate_hz": (float, 1.0),
        "wheel_rate_hz": (float, 2.0),
        "log_hz": (float, 10.0),
    },
    "features": {
        "wheel_rate_constraint": (_bool, True),
        "velocity": (_bool, True),
        "gnss": (_bool, True),
        "estimate_lever": (_bool, True),
        "estimate_mount": (_bool, True),
        "estimate_radius": (_bool, True),
        "static_init": (float, 0.0),
    },
    "gate": {
        "threshold_deg_s": (float, 0.5),
        "window": (float, 1.0),
        "smooth": (float, 0.2),
    },
    "fixer": {
        "enabled": (_bool, True),
        "sigma_deg": (float, 0.05),
        "hold": (float, 10.0),
    },
    "outages": {
        "windows": (parse_windows, ()),
    },
    "evaluate": {
        "band_lever": (float, 0.005),
        "band_mount_deg": (float, 0.1),
        "band_radius_scale": (float, 0.001),
        "hold": (float, 10.0),
        "error_csv": (_bool, False),
    },
    "montecarlo": {
        "runs": (int, 20),
        "first_seed": (int, 0),
        "workers": (int, 1),
        "perturb_initial": (_bool, True),
        "outage_lengths": (_floats, ()),
        "outage_start": (_opt_float, None),
    },
}


@dataclass
class RunConfig:
    """Parsed configuration: ``values[section][key]`` in file units plus the config directory."""

    values: dict
    base_dir: str = "."

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # ---------------------------------------------------------------- paths

    def path(self, key: str, out: Optional[str] = None) -> str:
        if key == "output":
            p = out or self.values["paths"]["output"]
        else:
            p = self.values["paths"][key]
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    # ---------------------------------------------------------------- builders

    @property
    def outages(self) -> tuple:
        return self.values["outages"]["windows"]

    def sim_config(self) -> SimConfig:
        s = self.values["simulation"]
        r_meas = self.values["install"]["wheel_radius"]
        cfg = SimConfig(
            wheel_radius=r_meas / (1.0 + s["radius_scale"]),
            install=InstallTruth(s["lever_y"], s["lever_z"], s["theta_m_deg"] * DEG, s["psi_m_deg"] * DEG, s["radius_scale"]),
            imu_rate=s["imu_rate_hz"],
            gnss_rate=s["gnss_rate_hz"],
            gnss_std=s["gnss_std"],
            l_gnss_v=np.array(s["gnss_lever"]),
            earth_rotation=s["earth_rotation"],
            seed=s["seed"],
        )
        if not s["imu_errors"]:
            cfg = replace(cfg, imu_errors=ImuErrors())
        if not s["imu_noise"]:
            cfg = replace(cfg, arw=0.0, vrw=0.0)
        return cfg

    def truth_install(self) -> dict:
        s = self.values["simulation"]
        return {"lever": (s["lever_y"], s["lever_z"]), "mount": (s["theta_m_deg"] * DEG, s["psi_m_deg"] * DEG),
                "radius_scale": s["radius_scale"]}

    def install0(self) -> InstallationParams:
        i = self.values["install"]
        gl = i["gnss_lever"] if i["gnss_lever"] is not None else self.values["simulation"]["gnss_lever"]
        p = InstallationParams((i["lever_y"], i["lever_z"]), (i["theta_m_deg"] * DEG, i["psi_m_deg"] * DEG),
                               i["wheel_radius"], i["radius_scale"], np.array(gl))
        try:
            p.validate()
        except ValueError as exc:
            raise ConfigError(f"[install]: {exc}") from None
        return p

    def filter_config(self) -> FilterConfig:
        v = self.values
        pr, st, me, ra, fe = v["process"], v["initial_std"], v["measurement"], v["rates"], v["features"]
        process = ProcessNoiseConfig(
            arw=pr["arw_deg_sqrt_h"] * DEG / 60.0, vrw=pr["vrw_m_s_sqrt_h"] / 60.0,
            bg_std=pr["gyro_bias_deg_h"] * DEG / HOUR, bg_tau=pr["tau_gyro_bias"],
            ba_std=pr["accel_bias"], ba_tau=pr["tau_accel_bias"],
            sg_std=pr["gyro_scale"], sg_tau=pr["tau_gyro_scale"],
            sa_std=pr["accel_scale"], sa_tau=pr["tau_accel_scale"],
            w_lw=pr["lever_rw"], w_phim=pr["mount_rw"], w_r=pr["radius_scale_rw"],
        )
        initial = InitialStd(
            pos=st["pos"], vel=st["vel"], att=tuple(a * DEG for a in st["att_deg"]),
            gyro_bias=st["gyro_bias_deg_h"] * DEG / HOUR, accel_bias=st["accel_bias"],
            gyro_scale=st["gyro_scale"], accel_scale=st["accel_scale"],
            lever=st["lever"], mount=st["mount_deg"] * DEG, radius_scale=st["radius_scale"],
        )
        g, fx = v["gate"], v["fixer"]
        cfg = FilterConfig(
            process=process, initial=initial,
            velocity_noise=VelocityNoise(me["sigma_fwd"], me["sigma_lat"], me["sigma_vert"]),
            wheel_rate_sigma=me["sigma_wheel_rate"], gnss_std=me["gnss_std"],
            velocity_rate=ra["velocity_hz"], wheel_rate_rate=ra["wheel_rate_hz"], gnss_rate=ra["gnss_rate_hz"],
            gate=GateConfig(g["threshold_deg_s"] * DEG, g["window"], g["smooth"]),
            fixer=FixerConfig(fx["enabled"], fx["sigma_deg"] * DEG, fx["hold"]),
            use_velocity=fe["velocity"], use_gnss=fe["gnss"], use_wheel_rate=fe["wheel_rate_constraint"],
            estimate_lever=fe["estimate_lever"], estimate_mount=fe["estimate_mount"], estimate_radius=fe["estimate_radius"],
            gate_prob=me["gate_prob"], log_rate=ra["log_hz"], static_init=fe["static_init"], outages=self.outages,
        )
        try:
            cfg.validate()
            initial_ok = np.all(initial.diag() > 0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not initial_ok:
            raise ConfigError("[initial_std]: all standard deviations must be positive")
        return cfg

    def bands(self) -> ParamBands:
        e = self.values["evaluate"]
        return ParamBands(e["band_lever"], e["band_mount_deg"] * DEG, e["band_radius_scale"], e["hold"])

    def estimated_params(self) -> list[str]:
        fe = self.values["features"]
        names = []
        for name, key in (("lever", "estimate_lever"), ("mount", "estimate_mount"), ("radius_scale", "estimate_radius")):
            if fe[key]:
                names.append(name)
        return names

    # ---------------------------------------------------------------- overrides

    def with_overrides(self, seed: Optional[int] = None, outages: Optional[str] = None, disable=()) -> "RunConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        if seed is not None:
            if seed < 0 or seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            vals["simulation"]["seed"] = int(seed)
        if outages is not None:
            try:
                vals["outages"]["windows"] = parse_windows(outages)
            except ValueError as exc:
                raise ConfigError(f"--outages: {exc}") from None
        keys = {"velocity": "velocity", "gnss": "gnss", "wheel-rate": "wheel_rate_constraint"}
        for d in disable:
            if d not in keys:
                raise ConfigError(f"--disable: unknown measurement {d!r}")
            vals["features"][keys[d]] = False
        return RunConfig(vals, self.base_dir)


def defaults() -> dict:
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}


def _validate_values(v: dict) -> None:
    positive = [
        ("simulation", "imu_rate_hz"), ("simulation", "gnss_rate_hz"), ("install", "wheel_radius"),
        ("rates", "velocity_hz"), ("rates", "gnss_rate_hz"), ("rates", "wheel_rate_hz"), ("rates", "log_hz"),
        ("measurement", "sigma_fwd"), ("measurement", "sigma_lat"), ("measurement", "sigma_vert"),
        ("gate", "threshold_deg_s"), ("gate", "window"), ("gate", "smooth"), ("fixer", "sigma_deg"),
        ("evaluate", "band_lever"), ("evaluate", "band_mount_deg"), ("evaluate", "band_radius_scale"),
        ("montecarlo", "runs"), ("montecarlo", "workers"),
    ]
    for s, k in positive:
        if not v[s][k] > 0:
            raise ConfigError(f"[{s}] {k} must be positive")
    for s, k in [("simulation", "gnss_std"), ("fixer", "hold"), ("evaluate", "hold"), ("features", "static_init")]:
        if v[s][k] < 0:
            raise ConfigError(f"[{s}] {k} must be non-negative")
    for s, k in [("measurement", "sigma_wheel_rate"), ("measurement", "gnss_std")]:
        if v[s][k] is not None and not v[s][k] > 0:
            raise ConfigError(f"[{s}] {k} must be positive")
    if not 0 < v["measurement"]["gate_prob"] < 1:
        raise ConfigError("[measurement] gate_prob must lie in (0, 1)")
    if v["simulation"]["seed"] < 0 or v["simulation"]["seed"] >= 2**64:
        raise ConfigError("[simulation] seed must be an unsigned 64-bit integer")
    ini = v["initial"]
    given = [ini[k] is not None for k in ("lat_deg", "lon_deg", "height", "heading_deg")]
    if any(given) and not all(given):
        raise ConfigError("[initial]: lat_deg, lon_deg, height and heading_deg must be given together")


def parse_config_text(text: str, base_dir: str = ".", source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str  # keep key case so typos are reported verbatim
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    vals = defaults()
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            parser, _ = SCHEMA[section][key]
            try:
                vals[section][key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from None
    for section, keys in vals.items():
        for key, val in keys.items():
            if val is REQUIRED:
                raise ConfigError(f"{source}: missing required key '{key}' in [{section}]")
    _validate_values(vals)
    return RunConfig(vals, base_dir)


def parse_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read(1 << 20)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, os.path.dirname(os.path.abspath(path)), str(path))


def describe_defaults() -> str:
    """INI text listing every key with its default (used to generate the FORMATS reference)."""
    lines = []
    for s, keys in SCHEMA.items():
        lines.append(f"[{s}]")
        for k, (p, d) in keys.items():
            if d is REQUIRED:
                shown = "(required)"
            elif d is None:
                shown = "(unset)"
            elif isinstance(d, tuple):
                shown = " ".join(str(x) for x in d) if d and not isinstance(d[0], tuple) else ", ".join(f"{a}:{b}" for a, b in d)
            else:
                shown = str(d).lower() if isinstance(d, bool) else str(d)
            lines.append(f"{k} = {shown}")
        lines.append("")
    return "\n".join(lines)

