"""Episode orchestration: open-loop drive, closed-loop runs with motion
capture or self-sensing feedback, estimator training and evaluation."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .config import SimConfig, to_mapping
from .control import Controller, ControllerFault, ControllerParams, FeedbackSource
from .dsp import LowPass, MovingAverage
from .estimator import PolynomialPoseEstimator
from .geometry import KinematicsError, end_effector_position, rotation_from_euler, tendon_values
from .plant import (
    PlantError,
    PlantState,
    advance,
    capacitance,
    contractions,
    sense_voltage_rms,
    sense_voltage_waveform_rms,
)
from .trajectory import TrajectorySpec, reference

CSV_HEADER = (
    ["t_s", "xr_x", "xr_y", "xr_z", "x_x", "x_y", "x_z", "xe_x", "xe_y", "xe_z"]
    + [f"qr_{i}" for i in range(1, 5)]
    + [f"qe_{i}" for i in range(1, 5)]
    + [f"vcmd_{i}" for i in range(1, 5)]
    + [f"vh_{i}" for i in range(1, 5)]
    + [f"sat_{i}" for i in range(1, 5)]
)

# RNG stream ids, one per noise source
_SENSE_STREAM, _MOCAP_STREAM = 0, 1


class EpisodeAborted(RuntimeError):
    """A run stopped early; ``log`` holds the ticks completed so far."""

    def __init__(self, diagnostic: str, log: "EpisodeLog"):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic
        self.log = log


@dataclass
class EpisodeLog:
    mode: str
    rate_hz: float
    trajectory: TrajectorySpec | None
    t: np.ndarray
    x_r: np.ndarray
    x_true: np.ndarray
    x_e: np.ndarray
    q_r: np.ndarray
    q_e: np.ndarray
    v_cmd: np.ndarray
    v_h: np.ndarray
    sat: np.ndarray
    phi: np.ndarray  # true joint angles and tendon coordinates, not part of the CSV
    theta: np.ndarray
    q_true: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def rows(self):
        for k in range(len(self.t)):
            yield [self.t[k], *self.x_r[k], *self.x_true[k], *self.x_e[k], *self.q_r[k],
                   *self.q_e[k], *self.v_cmd[k], *self.v_h[k]] + [int(s) for s in self.sat[k]]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for row in self.rows():
                w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


class _LogBuilder:
    def __init__(self, mode, rate_hz, spec):
        self.mode, self.rate_hz, self.spec = mode, rate_hz, spec
        self.cols = {k: [] for k in ("t", "x_r", "x_true", "x_e", "q_r", "q_e", "v_cmd", "v_h", "sat", "phi", "theta", "q_true")}

    def add(self, **row):
        for k, v in row.items():
            self.cols[k].append(v)

    def build(self, **meta) -> EpisodeLog:
        def arr(key, width, dtype=float):
            data = self.cols[key]
            return np.array(data, dtype=dtype).reshape(len(data), width) if width else np.array(data, dtype=dtype)
        return EpisodeLog(
            self.mode, self.rate_hz, self.spec, arr("t", 0),
            arr("x_r", 3), arr("x_true", 3), arr("x_e", 3), arr("q_r", 4), arr("q_e", 4),
            arr("v_cmd", 4), arr("v_h", 4), arr("sat", 4, bool), arr("phi", 0), arr("theta", 0), arr("q_true", 4), meta,
        )


def _rng(seed: int, stream: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, episode, stream]))


class SensingChain:
    """RMS sensing voltages with additive noise, moving average and low pass."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator | None):
        self.cfg = cfg
        self.plant = cfg.plant
        self.rng = rng
        self.sigma = cfg.noise.sense_sigma_v
        dt = 1.0 / cfg.control.rate_hz
        self.ma = [MovingAverage(cfg.signal.ma_window) for _ in range(4)]
        self.lp = [LowPass(cfg.signal.lp_cutoff_sense_hz, dt) for _ in range(4)]
        self._rms = sense_voltage_waveform_rms if cfg.signal.waveform_mode else sense_voltage_rms

    def raw(self, phi, theta) -> np.ndarray:
        hp = self.plant.hasel
        return np.array([self._rms(capacitance(c, hp), hp) for c in contractions(phi, theta, self.plant)])

    def push(self, phi, theta) -> np.ndarray:
        v = self.raw(phi, theta)
        if self.sigma > 0 and self.rng is not None:
            v = v + self.rng.normal(0.0, self.sigma, 4)
        return np.array([self.lp[i].push(self.ma[i].push(v[i])) for i in range(4)])


class MocapEmulator:
    """Position samples at a fixed rate with Gaussian noise, held between
    samples and released to the controller after ``latency`` seconds."""

    def __init__(self, cfg: SimConfig, rng: np.random.Generator | None):
        self.rate = cfg.mocap.rate_hz
        self.latency = cfg.mocap.latency_s
        self.sigma = cfg.noise.mocap_sigma_mm
        self.rng = rng
        self.l_m = cfg.geometry.l_m
        self.plant_rate = round(1.0 / cfg.body.dt)
        self.k = 0
        self.pending = deque()
        self.held = None

    def next_substep(self) -> int:
        """Plant step index of the next sample instant (rounded up)."""
        return math.ceil(self.k * self.plant_rate / self.rate - 1e-9)

    def sample(self, phi, theta, t):
        x = end_effector_position(rotation_from_euler(phi, theta), self.l_m)
        if self.sigma > 0 and self.rng is not None:
            x = x + self.rng.normal(0.0, self.sigma, 3)
        self.pending.append((t, x))
        self.k += 1

    def read(self, t) -> np.ndarray:
        while self.pending and self.pending[0][0] + self.latency <= t + 1e-12:
            self.held = self.pending.popleft()[1]
        if self.held is None:
            raise ControllerFault("no motion-capture sample available yet")
        return self.held


def _nan(n):
    return [math.nan] * n


# -- open loop ---------------------------------------------------------------

def openloop_voltage(t: float, amplitude: float, freq: float) -> float:
    return amplitude * (1.0 + math.sin(2.0 * math.pi * freq * t)) / 2.0


def run_openloop(cfg: SimConfig, episode: int = 0) -> EpisodeLog:
    """Antagonistic sinusoidal drive: the second actuator of a pair sees the
    first one's waveform shifted by half a period."""
    ol = cfg.openloop
    v_max = cfg.hasel.V_max
    if ol.amplitude_kv > v_max or ol.amplitude_kv < 0:
        raise ControllerFault(f"open-loop amplitude {ol.amplitude_kv} kV outside [0, {v_max}]")
    pairs = {"phi": (0, 1), "theta": (2, 3), "both": (0, 1, 2, 3)}[ol.pair]
    half = 0.5 / ol.freq_hz
    dt = 1.0 / cfg.control.rate_hz
    n_sub = cfg.substeps
    n_ticks = int(round(ol.duration_s * cfg.control.rate_hz))
    plant = cfg.plant
    sensing = SensingChain(cfg, _rng(cfg.seed, _SENSE_STREAM, episode))
    log = _LogBuilder("openloop", cfg.control.rate_hz, None)
    state = PlantState()
    for n in range(n_ticks):
        t = n * dt
        v1 = openloop_voltage(t, ol.amplitude_kv, ol.freq_hz)
        v2 = openloop_voltage(t + half, ol.amplitude_kv, ol.freq_hz)
        cmds = [0.0] * 4
        for i in pairs:
            cmds[i] = v1 if i % 2 == 0 else v2
        v_h = sensing.push(state.phi, state.theta)
        x = end_effector_position(rotation_from_euler(state.phi, state.theta), cfg.geometry.l_m)
        log.add(t=t, x_r=_nan(3), x_true=x, x_e=_nan(3), q_r=_nan(4), q_e=_nan(4),
                v_cmd=cmds, v_h=v_h, sat=[False] * 4, phi=state.phi, theta=state.theta,
                q_true=tendon_values(state.phi, state.theta, cfg.geometry))
        try:
            state = advance(state, cmds, plant, n_sub, step0=n * n_sub)
        except PlantError as exc:
            raise EpisodeAborted(f"plant fault at t={t:.4f} s: {exc}", log.build(aborted=True)) from exc
    return log.build(pair=ol.pair, amplitude_kv=ol.amplitude_kv, freq_hz=ol.freq_hz)


def peak_to_peak_deg(log: EpisodeLog) -> dict:
    return {
        "phi": math.degrees(float(np.ptp(log.phi))),
        "theta": math.degrees(float(np.ptp(log.theta))),
    }


# -- closed loop ---------------------------------------------------------------

def _feedback_source(feedback) -> FeedbackSource:
    if isinstance(feedback, FeedbackSource):
        return feedback
    return FeedbackSource(feedback)


def run_closed_loop(cfg: SimConfig, feedback, model: PolynomialPoseEstimator | None = None,
                    episode: int = 0, initial_state: PlantState | None = None,
                    reference_fn=None) -> EpisodeLog:
    """One closed-loop episode.

    Each control tick: sense, read feedback, step the controller, log, then
    integrate the plant over the control period with the new commands held.
    ``reference_fn(t)`` overrides the trajectory (used for regulation runs).
    """
    source = _feedback_source(feedback)
    if source is FeedbackSource.SELF_SENSING and model is None:
        raise ValueError("self-sensing feedback needs a trained estimator")
    geo = cfg.geometry
    spec = cfg.trajectory
    rate = cfg.control.rate_hz
    dt = 1.0 / rate
    n_sub = cfg.substeps
    n_ticks = int(round(spec.duration * rate))
    plant = cfg.plant
    v_max = cfg.hasel.V_max
    ref = reference_fn or (lambda t: reference(t, spec, geo.l_m))

    ctrl = Controller(ControllerParams(
        gains=cfg.gains(source.value), rate_hz=rate, v_max=v_max,
        cmd_cutoff_hz=cfg.signal.lp_cutoff_cmd_hz, amp_scale=cfg.amp_scale(),
        error_scale=cfg.control.error_scale,
    ), geo)
    sensing = SensingChain(cfg, _rng(cfg.seed, _SENSE_STREAM, episode))
    mocap = MocapEmulator(cfg, _rng(cfg.seed, _MOCAP_STREAM, episode))
    log = _LogBuilder(source.value, rate, spec)
    state = initial_state or PlantState()
    g = 0  # plant step counter

    def abort(msg, exc):
        raise EpisodeAborted(msg, log.build(aborted=True, diagnostic=msg)) from exc

    if mocap.next_substep() == 0:
        mocap.sample(state.phi, state.theta, 0.0)
    for n in range(n_ticks):
        t = n * dt
        phi, theta = state.phi, state.theta
        x_true = end_effector_position(rotation_from_euler(phi, theta), geo.l_m)
        v_h = sensing.push(phi, theta)
        x_r = ref(t)
        try:
            if source is FeedbackSource.GROUND_TRUTH:
                x_fb = mocap.read(t)
            else:
                x_fb = model.estimate_position(v_h, geo.l_m)
            out = ctrl.step(x_r, x_fb)
        except (ControllerFault, KinematicsError, ValueError) as exc:
            abort(f"controller fault at t={t:.4f} s: {exc}", exc)
        if np.any(out.commands > v_max) or np.any(out.commands < 0):
            abort(f"command outside [0, {v_max}] kV at t={t:.4f} s", None)
        log.add(t=t, x_r=x_r, x_true=x_true, x_e=x_fb, q_r=out.q_ref, q_e=out.q_fb,
                v_cmd=out.commands, v_h=v_h, sat=out.saturated, phi=phi, theta=theta,
                q_true=tendon_values(phi, theta, geo))

        target = g + n_sub
        try:
            while g < target:
                stop = min(target, mocap.next_substep())
                if stop > g:
                    state = advance(state, out.commands, plant, stop - g, step0=g)
                    g = stop
                if g == mocap.next_substep():
                    mocap.sample(state.phi, state.theta, g * cfg.body.dt)
        except PlantError as exc:
            abort(f"plant fault at t={g * cfg.body.dt:.4f} s: {exc}", exc)
    return log.build(preset=cfg.preset_name(source.value))


# -- metrics -----------------------------------------------------------------

def _window(log: EpisodeLog, skip_ramp: bool = True) -> np.ndarray:
    if skip_ramp and log.trajectory is not None:
        return log.t >= log.trajectory.ramp - 1e-12
    return np.ones(len(log.t), dtype=bool)


def rmse_task(log: EpisodeLog, skip_ramp: bool = True) -> float:
    """RMS Euclidean distance between true and reference position, post-ramp."""
    w = _window(log, skip_ramp)
    if not w.any():
        raise ValueError("empty RMSE window")
    d = log.x_true[w] - log.x_r[w]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def rmse_tendon(log: EpisodeLog, skip_ramp: bool = True) -> list:
    """Per-channel RMS of true minus reference tendon coordinate, post-ramp."""
    w = _window(log, skip_ramp)
    if not w.any():
        raise ValueError("empty RMSE window")
    return [float(v) for v in np.sqrt(np.mean((log.q_true[w] - log.q_r[w]) ** 2, axis=0))]


def percent_increase(rmse_ss: float, rmse_bm: float) -> float:
    """Relative error increase of self-sensing over benchmark, in percent,
    rounded to one decimal."""
    if rmse_bm <= 0:
        raise ValueError("benchmark RMSE must be positive")
    return round((rmse_ss - rmse_bm) / rmse_bm * 100.0, 1)


def evaluate(log_bm: EpisodeLog, log_ss: EpisodeLog) -> dict:
    """Comparison report of a benchmark and a self-sensing episode."""
    if log_bm.trajectory != log_ss.trajectory:
        raise ValueError("episodes were run on different trajectories")
    bm, ss = rmse_task(log_bm), rmse_task(log_ss)
    return {
        "trajectory": asdict(log_bm.trajectory) if log_bm.trajectory else None,
        "rmse_bm_mm": bm,
        "rmse_ss_mm": ss,
        "increase_pct": percent_increase(ss, bm) if bm > 0 else (0.0 if ss == 0 else math.inf),
        "ratio": ss / bm if bm > 0 else None,
        "rmse_tendon_bm_mm": rmse_tendon(log_bm),
        "rmse_tendon_ss_mm": rmse_tendon(log_ss),
    }


def summarize(log: EpisodeLog, cfg: SimConfig, model: PolynomialPoseEstimator | None = None, **extra) -> dict:
    out = {"mode": log.mode, "seed": cfg.seed, "n_ticks": len(log), "max_command_kv": float(np.max(log.v_cmd, initial=0.0))}
    if log.trajectory is not None and len(log):
        try:
            out["rmse_task_mm"] = rmse_task(log)
            out["rmse_tendon_mm"] = rmse_tendon(log)
        except ValueError:
            out["rmse_task_mm"] = None
        out["preset"] = log.meta.get("preset")
        out["trajectory"] = asdict(log.trajectory)
    if log.mode == "openloop" and len(log):
        out["peak_to_peak_deg"] = peak_to_peak_deg(log)
    if model is not None:
        out["estimator_metrics"] = {"r2": model.metrics_["r2"], "rmse": model.metrics_["rmse"]}
    out.update(extra)
    out["config"] = to_mapping(cfg)
    return out


# -- training ----------------------------------------------------------------

def angles_from_position(x) -> tuple[float, float]:
    """(phi, theta) of a point measured on the sphere (yaw is zero)."""
    x = np.asarray(x, dtype=float)
    phi = math.atan2(x[1], math.hypot(x[0], x[2]))
    theta = math.atan2(-x[0], -x[2])
    return phi, theta


def training_pairs(log: EpisodeLog) -> tuple[np.ndarray, np.ndarray]:
    """Filtered sensing voltages and measured (phi, theta) per tick."""
    Y = np.array([angles_from_position(x) for x in log.x_e])
    return log.v_h.copy(), Y


def _benchmark_config(cfg: SimConfig, kind: str) -> SimConfig:
    traj = replace(cfg.trajectory, kind=kind, period=None) if kind != cfg.trajectory.kind else cfg.trajectory
    control = replace(cfg.control, preset=None) if kind != cfg.trajectory.kind else cfg.control
    return replace(cfg, mode="benchmark", trajectory=traj, control=control)


def train_pipeline(cfg: SimConfig) -> tuple[PolynomialPoseEstimator, dict]:
    """Benchmark episodes per trajectory kind, then a cubic fit of the
    logged sensing voltages against the measured joint angles."""
    Xs, Ys, episodes = [], [], []
    for k, kind in enumerate(cfg.train.kinds):
        sub = _benchmark_config(cfg, kind)
        log = run_closed_loop(sub, FeedbackSource.GROUND_TRUTH, episode=100 + k)
        X, Y = training_pairs(log)
        Xs.append(X)
        Ys.append(Y)
        episodes.append({"kind": kind, "preset": log.meta["preset"], "cycles": sub.trajectory.cycles,
                         "period_s": sub.trajectory.period, "n_ticks": len(log)})
    X, Y = np.vstack(Xs), np.vstack(Ys)
    model = PolynomialPoseEstimator(degree=3, test_frac=cfg.train.test_frac, seed=cfg.seed).fit(X, Y)
    meta = {
        "format": "antagosim-poly-model/1",
        "version": __version__,
        "seed": cfg.seed,
        "inputs": ["V_phi1", "V_phi2", "V_theta1", "V_theta2"],
        "outputs": ["phi_rad", "theta_rad"],
        "feature_order": "graded lexicographic, constant first",
        "test_frac": cfg.train.test_frac,
        "n_samples": int(X.shape[0]),
        "episodes": episodes,
        "noise": asdict(cfg.noise),
    }
    return model, meta


def static_sweep(cfg: SimConfig, n: int = 41, span_rad: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free sensing voltages over a grid of joint angles."""
    chain = SensingChain(replace(cfg, noise=replace(cfg.noise, sense_sigma_v=0.0)), None)
    X, Y = [], []
    for phi in np.linspace(-span_rad, span_rad, n):
        for theta in np.linspace(-span_rad, span_rad, n):
            X.append(chain.raw(phi, theta))
            Y.append((phi, theta))
    return np.array(X), np.array(Y)


def oracle_estimator(cfg: SimConfig, n: int = 41, span_rad: float = 0.6) -> PolynomialPoseEstimator:
    X, Y = static_sweep(cfg, n, span_rad)
    return PolynomialPoseEstimator(degree=3, test_frac=0.2, seed=cfg.seed).fit(X, Y)


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
