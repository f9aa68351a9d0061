"""Simulation configuration: flat ``key = value`` files mapped onto the
parameter dataclasses of each module.

Example::

    # lemniscate benchmark with a heavier link
    mode = benchmark
    control.preset = lemni_bm
    plant.mass_kg = 0.008
    control.kp = 0.4, 0.85, 1.05, 0.95
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace

from .control import AMP_PROFILES, PRESETS, PidGains
from .geometry import GeometryParams
from .plant import STRAIN_TABLE, HaselParams, PlantParams, RigidBodyParams, calibrate_from_table
from .trajectory import TrajectorySpec

MODES = ("openloop", "benchmark", "train", "selfsense", "evaluate")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SignalParams:
    ma_window: int = 20
    lp_cutoff_sense_hz: float = 10.0
    lp_cutoff_cmd_hz: float = 15.0
    waveform_mode: bool = False


@dataclass(frozen=True)
class ControlConfig:
    preset: str | None = None  # None: picked from mode and trajectory kind
    kp: tuple | None = None
    ki: tuple | None = None
    kd: tuple | None = None
    rate_hz: float = 200.0
    error_scale: float = 2.5
    amp_profile: str = "unit"
    amp_scale: tuple | None = None


@dataclass(frozen=True)
class NoiseParams:
    sense_sigma_v: float = 0.01
    mocap_sigma_mm: float = 0.05


@dataclass(frozen=True)
class MocapParams:
    rate_hz: float = 150.0
    latency_s: float = 0.0


@dataclass(frozen=True)
class OpenLoopParams:
    amplitude_kv: float = 5.5
    freq_hz: float = 3.0
    duration_s: float = 5.0
    pair: str = "both"  # phi | theta | both


@dataclass(frozen=True)
class TrainParams:
    kinds: tuple = ("lemniscate", "star")
    test_frac: float = 0.2


@dataclass(frozen=True)
class SimConfig:
    geometry: GeometryParams = field(default_factory=GeometryParams)
    hasel: HaselParams = field(default_factory=HaselParams)
    body: RigidBodyParams = field(default_factory=RigidBodyParams)
    signal: SignalParams = field(default_factory=SignalParams)
    control: ControlConfig = field(default_factory=ControlConfig)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    noise: NoiseParams = field(default_factory=NoiseParams)
    mocap: MocapParams = field(default_factory=MocapParams)
    openloop: OpenLoopParams = field(default_factory=OpenLoopParams)
    train: TrainParams = field(default_factory=TrainParams)
    seed: int = 0
    mode: str = "benchmark"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        for name, rate in (("control.rate_hz", self.control.rate_hz), ("mocap.rate_hz", self.mocap.rate_hz)):
            if not rate > 0:
                raise ConfigError(f"{name} must be positive")
        period = 1.0 / self.control.rate_hz
        n = round(period / self.body.dt)
        if n < 1 or abs(period - n * self.body.dt) > 1e-12:
            raise ConfigError("plant.dt_s must divide the control period")
        if self.control.amp_profile not in AMP_PROFILES:
            raise ConfigError(f"unknown amplifier profile {self.control.amp_profile!r}")
        if self.openloop.pair not in ("phi", "theta", "both"):
            raise ConfigError("openloop.pair must be phi, theta or both")
        if self.signal.ma_window < 1:
            raise ConfigError("signal.ma_window must be >= 1")

    @property
    def plant(self) -> PlantParams:
        return PlantParams(self.geometry, self.hasel, self.body)

    @property
    def substeps(self) -> int:
        return int(round(1.0 / self.control.rate_hz / self.body.dt))

    def preset_name(self, feedback: str | None = None) -> str:
        """Gain preset: explicit, else <kind>_<bm|ss> for the feedback source."""
        if self.control.preset:
            return self.control.preset
        prefix = "lemni" if self.trajectory.kind == "lemniscate" else "star"
        suffix = "ss" if (feedback or self.mode) == "selfsense" else "bm"
        return f"{prefix}_{suffix}"

    def gains(self, feedback: str | None = None) -> PidGains:
        g = PidGains.preset(self.preset_name(feedback), self.control.rate_hz)
        c = self.control
        return PidGains(
            kp=c.kp if c.kp is not None else g.kp,
            ki=c.ki if c.ki is not None else g.ki,
            kd=c.kd if c.kd is not None else g.kd,
        )

    def amp_scale(self) -> tuple:
        if self.control.amp_scale is not None:
            return self.control.amp_scale
        return AMP_PROFILES[self.control.amp_profile]

    def with_mode(self, mode: str, **trajectory_changes) -> "SimConfig":
        traj = replace(self.trajectory, **trajectory_changes) if trajectory_changes else self.trajectory
        return replace(self, mode=mode, trajectory=traj)


# -- parsing ---------------------------------------------------------------

def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _vec(n, conv=float):
    def parse(s):
        parts = [p for p in s.replace(";", ",").split(",") if p.strip()]
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated values, got {len(parts)}")
        return tuple(conv(p) for p in parts)
    return parse


def _str(s):
    return s.strip()


def _opt_str(s):
    s = s.strip()
    return None if s.lower() in ("", "none", "auto") else s


def _kinds(s):
    return tuple(p.strip() for p in s.split(",") if p.strip())


# flat key -> (section, field, parser)
KEYS = {
    "geometry.r_s_mm": ("geometry", "r_s", _float),
    "geometry.r_t_mm": ("geometry", "r_t", _float),
    "geometry.q_t_mm": ("geometry", "q_t", _float),
    "geometry.l_m_mm": ("geometry", "l_m", _float),
    "plant.l0_mm": ("hasel", "L0", _float),
    "plant.c_max_mm": ("hasel", "c_max", _float),
    "plant.f_b5k_n": ("hasel", "F_b5k", _float),
    "plant.eps_max": ("hasel", "eps_max", _float),
    "plant.v_ref_kv": ("hasel", "V_ref", _float),
    "plant.v_max_kv": ("hasel", "V_max", _float),
    "plant.tau_force_s": ("hasel", "tau_force", _float),
    "plant.c_min_pf": ("hasel", "C_min", _float),
    "plant.c_max_pf": ("hasel", "C_max", _float),
    "plant.r_sense_mohm": ("hasel", "R_sense", _float),
    "plant.f_ac_khz": ("hasel", "f_ac", _float),
    "plant.v_ac_rms_v": ("hasel", "V_ac_rms", _float),
    "plant.strain_scale": ("hasel", "strain_scale", _vec(4)),
    "plant.slack_mm": ("hasel", "slack", _float),
    "plant.calib_loads_kg": ("calib", "loads", _vec(2)),
    "plant.calib_strains": ("calib", "strains", _vec(2)),
    "plant.mass_kg": ("body", "mass", _float),
    "plant.l_com_mm": ("body", "l_com", _float),
    "plant.damping_nmms": ("body", "damping", _float),
    "plant.g_mps2": ("body", "g", _float),
    "plant.dt_s": ("body", "dt", _float),
    "signal.ma_window": ("signal", "ma_window", _int),
    "signal.lp_cutoff_sense_hz": ("signal", "lp_cutoff_sense_hz", _float),
    "signal.lp_cutoff_cmd_hz": ("signal", "lp_cutoff_cmd_hz", _float),
    "signal.waveform_mode": ("signal", "waveform_mode", _bool),
    "control.preset": ("control", "preset", _opt_str),
    "control.kp": ("control", "kp", _vec(4)),
    "control.ki": ("control", "ki", _vec(4)),
    "control.kd": ("control", "kd", _vec(4)),
    "control.rate_hz": ("control", "rate_hz", _float),
    "control.error_scale": ("control", "error_scale", _float),
    "control.amp_profile": ("control", "amp_profile", _str),
    "control.amp_scale": ("control", "amp_scale", _vec(4)),
    "trajectory.kind": ("trajectory", "kind", _str),
    "trajectory.amplitude_mm": ("trajectory", "amplitude", _float),
    "trajectory.period_s": ("trajectory", "period", _float),
    "trajectory.cycles": ("trajectory", "cycles", _int),
    "trajectory.star_points": ("trajectory", "star_points", _int),
    "trajectory.star_inner_ratio": ("trajectory", "star_inner_ratio", _float),
    "trajectory.ramp_s": ("trajectory", "ramp", _float),
    "trajectory.mirror_x": ("trajectory", "mirror_x", _bool),
    "noise.sense_sigma_v": ("noise", "sense_sigma_v", _float),
    "noise.mocap_sigma_mm": ("noise", "mocap_sigma_mm", _float),
    "mocap.rate_hz": ("mocap", "rate_hz", _float),
    "mocap.latency_s": ("mocap", "latency_s", _float),
    "openloop.amplitude_kv": ("openloop", "amplitude_kv", _float),
    "openloop.freq_hz": ("openloop", "freq_hz", _float),
    "openloop.duration_s": ("openloop", "duration_s", _float),
    "openloop.pair": ("openloop", "pair", _str),
    "train.kinds": ("train", "kinds", _kinds),
    "train.test_frac": ("train", "test_frac", _float),
    "seed": (None, "seed", _int),
    "mode": (None, "mode", _str),
}


def from_mapping(values: dict, base: SimConfig | None = None) -> SimConfig:
    """Build a config from flat keys; unknown keys raise ConfigError."""
    base = base or SimConfig()
    sections: dict[str, dict] = {}
    top: dict = {}
    for key, raw in values.items():
        norm = key.strip().lower()
        if norm not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, name, parse = KEYS[norm]
        try:
            if isinstance(raw, str):
                value = parse(raw)
            else:
                value = tuple(raw) if isinstance(raw, list) else raw
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if section is None:
            top[name] = value
        else:
            sections.setdefault(section, {})[name] = value

    calib = sections.pop("calib", None)
    hasel_changes = sections.get("hasel", {})
    if calib:
        loads = calib.get("loads", tuple(p[0] for p in STRAIN_TABLE["phi1"]))
        strains = calib.get("strains", tuple(p[1] for p in STRAIN_TABLE["phi1"]))
        g = sections.get("body", {}).get("g", base.body.g)
        try:
            f_b, eps = calibrate_from_table(list(zip(loads, strains)), g=g)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        hasel_changes.setdefault("F_b5k", f_b)
        hasel_changes.setdefault("eps_max", eps)
        sections["hasel"] = hasel_changes

    traj = sections.get("trajectory", {})
    if "kind" in traj and "period" not in traj and base.trajectory.kind != traj["kind"]:
        traj["period"] = None  # re-derive the per-kind default

    try:
        parts = {}
        for f in fields(SimConfig):
            if f.name in sections:
                parts[f.name] = replace(getattr(base, f.name), **sections[f.name])
        parts.update(top)
        cfg = replace(base, **parts)
        if cfg.control.preset is not None and cfg.control.preset not in PRESETS:
            raise ConfigError(f"unknown control preset {cfg.control.preset!r}")
        for kind in cfg.train.kinds:
            TrajectorySpec(kind=kind)
        cfg.trajectory.check_reachable(cfg.geometry.r_t, cfg.geometry.l_m, cfg.geometry.q_t)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def parse_text(text: str) -> dict:
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
        delimiters=("=",), strict=True,
    )
    parser.optionxform = str
    try:
        parser.read_string("[sim]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if parser.sections() != ["sim"]:
        raise ConfigError("section headers are not allowed; use flat dotted keys")
    return dict(parser["sim"])


def load(path) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_mapping(parse_text(text))


def to_mapping(cfg: SimConfig) -> dict:
    """Flat key/value echo of a config (for summaries)."""
    out = {}
    for key, (section, name, _) in KEYS.items():
        if section == "calib":
            continue
        obj = cfg if section is None else getattr(cfg, section)
        value = getattr(obj, name)
        if isinstance(value, float) and not math.isfinite(value):
            value = str(value)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out
