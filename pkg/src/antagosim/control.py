"""Tendon-space PID control of the four actuators.

The error of channel i is e_i = q_i(feedback) - q_i(reference): a tendon
that is longer than requested needs more contraction, i.e. more voltage.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dsp import LowPass
from .geometry import GeometryParams, tendon_reference

# Hand-tuned gains for the four trajectory/feedback combinations, as
# per-sample gains of a loop running at PRESET_RATE_HZ. Integral gains are
# the tabulated value * 1e-3. ``PidGains.preset`` converts them to the
# continuous-time form used by ``pid_step``.
PRESETS = {
    "lemni_ss": dict(kp=(0.3, 0.75, 0.95, 0.85), ki=(1e-3, 2e-3, 2e-3, 2e-3), kd=(0.0, 0.0, 0.0, 0.0)),
    "lemni_bm": dict(kp=(0.4, 0.85, 1.05, 0.95), ki=(2e-3, 3e-3, 3e-3, 3e-3), kd=(0.5, 1.0, 1.0, 1.0)),
    "star_ss": dict(kp=(0.45, 0.85, 0.8, 0.90), ki=(1e-3, 2e-3, 2e-3, 2e-3), kd=(0.0, 0.0, 0.0, 0.0)),
    "star_bm": dict(kp=(0.45, 0.95, 0.9, 0.95), ki=(1e-3, 2e-3, 2e-3, 2e-3), kd=(0.5, 1.0, 1.0, 1.0)),
}
# The phi1 amplifier of the reference hardware has twice the gain of the others.
PRESET_RATE_HZ = 200.0
AMP_PROFILES = {"unit": (1.0, 1.0, 1.0, 1.0), "paper_hw": (2.0, 1.0, 1.0, 1.0)}


class ControllerFault(RuntimeError):
    pass


class FeedbackSource(enum.Enum):
    SELF_SENSING = "selfsense"
    GROUND_TRUTH = "benchmark"


@dataclass(frozen=True)
class PidGains:
    kp: tuple = (0.0, 0.0, 0.0, 0.0)
    ki: tuple = (0.0, 0.0, 0.0, 0.0)
    kd: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 4 or min(v) < 0:
                raise ValueError(f"{name} needs four non-negative gains")
            object.__setattr__(self, name, v)

    @classmethod
    def preset(cls, name: str, rate_hz: float = PRESET_RATE_HZ) -> "PidGains":
        """Continuous-time gains of a tabulated per-sample preset."""
        try:
            g = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown control preset {name!r}") from None
        return cls.from_sampled(g["kp"], g["ki"], g["kd"], rate_hz)

    @classmethod
    def from_sampled(cls, kp, ki, kd, rate_hz: float) -> "PidGains":
        """u = kp*e + ki*sum(e) + kd*(e - e_prev) at ``rate_hz``, rewritten
        as kp*e + ki'*integral(e) + kd'*de/dt."""
        if rate_hz <= 0:
            raise ValueError("rate must be positive")
        return cls(kp=kp, ki=tuple(k * rate_hz for k in ki), kd=tuple(k / rate_hz for k in kd))

    def channel(self, i: int) -> tuple[float, float, float]:
        return self.kp[i], self.ki[i], self.kd[i]


@dataclass
class PidState:
    integral: float = 0.0  # mm*s
    prev_measurement: float | None = None


def pid_step(gains, state: PidState, e: float, dt: float,
             measurement: float | None = None, v_max: float = 5.5) -> float:
    """One PID update for a single channel; returns the command in kV.

    ``gains`` is a (kp, ki, kd) triple. The derivative acts on
    ``measurement`` when given (no kick on reference steps), otherwise on
    the error. The integral term is clamped to [0, v_max] and integration
    is skipped while the output sits above v_max with a positive error.

    The lower clamp sits on the accumulator rather than on the output: an
    antagonist held at 0 kV keeps unwinding its integral, so alternating
    errors cannot ratchet both channels of a pair into co-contraction.
    """
    kp, ki, kd = gains
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not math.isfinite(e) or (measurement is not None and not math.isfinite(measurement)):
        raise ControllerFault(f"non-finite controller input (error={e}, measurement={measurement})")

    signal = e if measurement is None else measurement
    if state.prev_measurement is None:
        deriv = 0.0
    else:
        deriv = (signal - state.prev_measurement) / dt
    state.prev_measurement = signal

    integral = state.integral + e * dt
    if ki > 0:
        integral = min(max(integral, 0.0), v_max / ki)
    u = kp * e + ki * integral + kd * deriv
    if u > v_max and e > 0:
        # conditional integration: hold the accumulator while pushing into the limit
        u = kp * e + ki * state.integral + kd * deriv
    else:
        state.integral = integral
    return min(max(u, 0.0), v_max)


@dataclass
class ControllerParams:
    gains: PidGains
    rate_hz: float = 200.0
    v_max: float = 5.5
    cmd_cutoff_hz: float = 15.0
    amp_scale: tuple = (1.0, 1.0, 1.0, 1.0)
    error_scale: float = 2.5  # applied to tendon errors (mm) before the PID


@dataclass
class ControlOutput:
    commands: np.ndarray  # applied voltages, kV
    q_ref: np.ndarray
    q_fb: np.ndarray
    saturated: np.ndarray  # bool per channel


class Controller:
    """Four-channel tendon-space controller with command low-pass filters."""

    def __init__(self, params: ControllerParams, geometry: GeometryParams):
        self.params = params
        self.geometry = geometry
        self.dt = 1.0 / params.rate_hz
        self.states = [PidState() for _ in range(4)]
        self.filters = [LowPass(params.cmd_cutoff_hz, self.dt, y0=0.0) for _ in range(4)]

    def step(self, x_ref, x_fb) -> ControlOutput:
        p = self.params
        q_ref = tendon_reference(x_ref, self.geometry)
        q_fb = tendon_reference(x_fb, self.geometry)
        k = p.error_scale
        cmds = np.empty(4)
        sat = np.zeros(4, dtype=bool)
        for i in range(4):
            e = (q_fb.q[i] - q_ref.q[i]) * k
            u_raw = pid_step(p.gains.channel(i), self.states[i], e, self.dt,
                             measurement=q_fb.q[i] * k, v_max=p.v_max)
            sat[i] = u_raw >= p.v_max
            u = self.filters[i].push(u_raw) * p.amp_scale[i]
            if u >= p.v_max:
                u, sat[i] = p.v_max, True
            cmds[i] = min(max(u, 0.0), p.v_max)
            sat[i] |= q_ref.saturated
        return ControlOutput(cmds, q_ref.q, q_fb.q, sat)


def control_step(controller: Controller, x_ref, x_fb) -> ControlOutput:
    return controller.step(x_ref, x_fb)
