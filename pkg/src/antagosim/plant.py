"""Actuator and ball-joint plant.

Four Peano-HASEL actuators pull on tendons attached to a point-mass
pendulum (roll ``phi``, pitch ``theta``). Each actuator has a linear
force-strain segment whose blocked force scales with the square of the
applied voltage, a first-order force lag, and a sensing capacitance that
falls linearly with contraction. The sensing electrodes form an RC low
pass with the series resistance; its RMS output is the self-sensing
signal.

Units: lengths mm, forces N, torques N*mm, voltages kV (actuation) and V
(sensing), capacitance pF, resistance MOhm, frequency kHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .geometry import GeometryParams, _jacobian_columns, _projection_xy, _tendon_lengths, JACOBIAN_STEP

G = 9.81

# 5 kV step characterization: (load kg, strain) per actuator, (phi1, phi2, theta1, theta2)
STRAIN_TABLE = {
    "phi1": ((0.014, 0.065), (0.034, 0.0588)),
    "phi2": ((0.014, 0.0642), (0.034, 0.0575)),
    "theta1": ((0.014, 0.0648), (0.034, 0.0586)),
    "theta2": ((0.014, 0.0662), (0.034, 0.0601)),
}
DISPLACEMENT_14G_PHI1_MM = 8.45


class PlantError(RuntimeError):
    pass


class CalibrationError(ValueError):
    pass


class IntegratorDivergence(PlantError):
    def __init__(self, step, time):
        super().__init__(f"non-finite plant state at step {step} (t={time:.6f} s)")
        self.step = step
        self.time = time


def calibrate_from_table(points, g: float = G) -> tuple[float, float]:
    """Fit blocked force and free strain of F = F_b * (1 - eps / eps_max)
    through two (load kg, strain) points with F = m * g.
    """
    (m1, e1), (m2, e2) = points
    if e1 == e2:
        raise CalibrationError("calibration strains are equal; force-strain line is undefined")
    f1, f2 = m1 * g, m2 * g
    slope = (f2 - f1) / (e2 - e1)  # dF/d(eps) = -F_b / eps_max
    f_b = f1 - slope * e1
    if slope >= 0 or f_b <= 0:
        raise CalibrationError("calibration points do not describe a decreasing force-strain line")
    return f_b, -f_b / slope


_FB_DEFAULT, _EPS_DEFAULT = calibrate_from_table(STRAIN_TABLE["phi1"])
_STRAIN_SCALE_DEFAULT = tuple(
    STRAIN_TABLE[k][0][1] / STRAIN_TABLE["phi1"][0][1] for k in ("phi1", "phi2", "theta1", "theta2")
)


@dataclass(frozen=True)
class HaselParams:
    L0: float = DISPLACEMENT_14G_PHI1_MM / STRAIN_TABLE["phi1"][0][1]  # mm
    c_max: float = 7.5  # mm
    F_b5k: float = _FB_DEFAULT  # N
    eps_max: float = _EPS_DEFAULT
    V_ref: float = 5.0  # kV
    V_max: float = 5.5  # kV
    tau_force: float = 0.02  # s
    C_min: float = 100.0  # pF
    C_max: float = 500.0  # pF
    R_sense: float = 2.0  # MOhm
    f_ac: float = 2.0  # kHz
    V_ac_rms: float = 7.0711  # V
    strain_scale: tuple = _STRAIN_SCALE_DEFAULT
    slack: float = 0.0  # mm, subtracted from contraction

    def __post_init__(self):
        if not 0 < self.C_min < self.C_max:
            raise ValueError("need 0 < C_min < C_max")
        if not 0 < self.eps_max < 1:
            raise ValueError("eps_max must lie in (0, 1)")
        if self.F_b5k <= 0:
            raise ValueError("F_b5k must be positive")
        if self.V_max < self.V_ref:
            raise ValueError("V_max must be >= V_ref")
        if len(self.strain_scale) != 4 or min(self.strain_scale) <= 0:
            raise ValueError("strain_scale needs four positive values")
        for name in ("L0", "c_max", "tau_force", "R_sense", "f_ac", "V_ac_rms"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class RigidBodyParams:
    mass: float = 0.003  # kg
    l_com: float = 10.0  # mm
    damping: float = 0.35  # N*mm*s/rad
    g: float = G
    dt: float = 1e-4  # s

    def __post_init__(self):
        for name in ("mass", "l_com", "damping", "g", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PlantState:
    phi: float = 0.0
    theta: float = 0.0
    phi_dot: float = 0.0
    theta_dot: float = 0.0
    force: tuple = (0.0, 0.0, 0.0, 0.0)
    time: float = 0.0


@dataclass(frozen=True)
class PlantParams:
    """Everything the transition function needs, bundled."""

    geometry: GeometryParams = field(default_factory=GeometryParams)
    hasel: HaselParams = field(default_factory=HaselParams)
    body: RigidBodyParams = field(default_factory=RigidBodyParams)


def blocked_force(V: float, params: HaselParams) -> float:
    if not 0.0 <= V <= params.V_max:
        raise ValueError(f"voltage {V} kV outside [0, {params.V_max}]")
    return params.F_b5k * (V / params.V_ref) ** 2


def tension(V: float, c: float, params: HaselParams, channel: int = 0) -> float:
    """Tendon tension (N) of actuator ``channel`` at voltage V and contraction c (mm)."""
    eps = max(0.0, (c - params.slack) / params.L0)
    eps_max = params.eps_max * params.strain_scale[channel]
    return max(0.0, blocked_force(V, params) * (1.0 - eps / eps_max))


def capacitance(c: float, params: HaselParams) -> float:
    c = min(max(c, 0.0), params.c_max)
    return params.C_max - (params.C_max - params.C_min) * c / params.c_max


def _omega_rc(C: float, params: HaselParams) -> float:
    # kHz * MOhm * pF = 1e3 * 1e6 * 1e-12 = 1e-3
    return 2.0 * math.pi * params.f_ac * params.R_sense * C * 1e-3


def sense_voltage_rms(C: float, params: HaselParams) -> float:
    if C <= 0:
        raise ValueError("capacitance must be positive")
    return params.V_ac_rms / math.sqrt(1.0 + _omega_rc(C, params) ** 2)


def sense_voltage_waveform_rms(
    C: float, params: HaselParams, fs_khz: float = 100.0, periods: int = 20
) -> float:
    """RMS of the sensing voltage obtained by driving the RC divider with a
    sampled carrier and integrating the circuit in the time domain.

    The carrier is treated as piecewise linear between samples, for which
    the first-order response has a closed-form update. A settling interval
    of ten time constants is discarded before the RMS window.
    """
    if C <= 0:
        raise ValueError("capacitance must be positive")
    tau = params.R_sense * 1e6 * C * 1e-12  # s
    fs = fs_khz * 1e3
    f = params.f_ac * 1e3
    h = 1.0 / fs
    spp = fs / f
    if abs(spp - round(spp)) > 1e-9:
        raise ValueError("sampling rate must be an integer multiple of the carrier")
    spp = int(round(spp))
    n_settle = int(math.ceil(10.0 * tau / h / spp)) * spp
    n = n_settle + periods * spp
    t = np.arange(n + 1) * h
    u = math.sqrt(2.0) * params.V_ac_rms * np.sin(2.0 * math.pi * f * t)
    a = math.exp(-h / tau)
    b = tau / h
    # exact response to a linear ramp between samples:
    # y[k+1] = a*y[k] + (1 - b + a*b)*u[k+1] + (b - a - a*b)*u[k], with u[0] = 0
    y = lfilter([1.0 - b + a * b, b - a - a * b], [1.0, -a], u)
    window = y[n_settle + 1 :]
    return float(np.sqrt(np.mean(window**2)))


def contractions(phi: float, theta: float, params: PlantParams) -> tuple:
    q = _tendon_lengths(*_projection_xy(phi, theta, params.geometry.r_t), params.geometry.q_t)
    two_qt = 2.0 * params.geometry.q_t
    return tuple(two_qt - qi for qi in q)


def sense_voltages(phi: float, theta: float, params: PlantParams) -> np.ndarray:
    """Noise-free RMS sensing voltages of the four actuators at a pose."""
    h = params.hasel
    return np.array([sense_voltage_rms(capacitance(c, h), h) for c in contractions(phi, theta, params)])


def generalized_forces(state: PlantState, params: PlantParams) -> tuple[float, float, float, float]:
    """(tendon_phi, tendon_theta, gravity_phi, gravity_theta) in N*mm."""
    geo, body = params.geometry, params.body
    d_phi, d_theta = _jacobian_columns(state.phi, state.theta, geo.r_t, geo.q_t, JACOBIAN_STEP)
    F = state.force
    q_phi = -sum(F[i] * d_phi[i] for i in range(4))
    q_theta = -sum(F[i] * d_theta[i] for i in range(4))
    mgl = body.mass * body.g * body.l_com
    g_phi = -mgl * math.cos(state.theta) * math.sin(state.phi)
    g_theta = -mgl * math.cos(state.phi) * math.sin(state.theta)
    return q_phi, q_theta, g_phi, g_theta


def advance(state: PlantState, V_cmd, params: PlantParams, n_steps: int = 1, step0: int = 0) -> PlantState:
    """Integrate ``n_steps`` plant steps with the commands held constant.

    Semi-implicit Euler on the point-mass pendulum; tensions follow their
    static targets through a first-order lag (exact exponential update).
    """
    geo, hp, body = params.geometry, params.hasel, params.body
    V_cmd = [float(v) for v in V_cmd]
    fb = [blocked_force(v, hp) for v in V_cmd]
    inv_eps = [1.0 / (hp.eps_max * s) for s in hp.strain_scale]
    inv_L0 = 1.0 / hp.L0
    slack = hp.slack
    two_qt = 2.0 * geo.q_t
    r_t, q_t = geo.r_t, geo.q_t
    dt = body.dt
    lag = 1.0 - math.exp(-dt / hp.tau_force)
    mgl = body.mass * body.g * body.l_com
    inv_inertia = 1000.0 / (body.mass * body.l_com**2)  # N*mm -> rad/s^2
    b = body.damping
    sin, cos, sqrt = math.sin, math.cos, math.sqrt
    half_pi = math.pi / 2

    phi, theta = state.phi, state.theta
    wp, wt = state.phi_dot, state.theta_dot
    F0, F1, F2, F3 = state.force
    t = state.time
    for k in range(n_steps):
        sp, cp, st, ct = sin(phi), cos(phi), sin(theta), cos(theta)
        # attachment projection and its derivatives (closed form of the
        # finite-difference tendon Jacobian, which the tests compare it to)
        x = -r_t * st * cp
        y = r_t * sp
        dx_p, dx_t, dy_p = r_t * st * sp, -r_t * ct * cp, r_t * cp
        a1, a2, b1, b2 = q_t - x, q_t + x, q_t - y, q_t + y
        q0 = sqrt(a1 * a1 + y * y)
        q1 = sqrt(a2 * a2 + y * y)
        q2 = sqrt(x * x + b1 * b1)
        q3 = sqrt(x * x + b2 * b2)

        e = (two_qt - q0 - slack) * inv_L0
        tg = fb[0] * (1.0 - (e if e > 0.0 else 0.0) * inv_eps[0])
        F0 += ((tg if tg > 0.0 else 0.0) - F0) * lag
        e = (two_qt - q1 - slack) * inv_L0
        tg = fb[1] * (1.0 - (e if e > 0.0 else 0.0) * inv_eps[1])
        F1 += ((tg if tg > 0.0 else 0.0) - F1) * lag
        e = (two_qt - q2 - slack) * inv_L0
        tg = fb[2] * (1.0 - (e if e > 0.0 else 0.0) * inv_eps[2])
        F2 += ((tg if tg > 0.0 else 0.0) - F2) * lag
        e = (two_qt - q3 - slack) * inv_L0
        tg = fb[3] * (1.0 - (e if e > 0.0 else 0.0) * inv_eps[3])
        F3 += ((tg if tg > 0.0 else 0.0) - F3) * lag

        g0, g1, g2, g3 = F0 / q0, F1 / q1, F2 / q2, F3 / q3
        # Q = -sum F_i dq_i/d(angle)
        q_phi = -(g0 * (-a1 * dx_p + y * dy_p) + g1 * (a2 * dx_p + y * dy_p)
                  + g2 * (x * dx_p - b1 * dy_p) + g3 * (x * dx_p + b2 * dy_p))
        q_theta = -(g0 * (-a1 * dx_t) + g1 * (a2 * dx_t) + g2 * (x * dx_t) + g3 * (x * dx_t))
        tau_phi = q_phi - mgl * ct * sp - b * wp
        tau_theta = q_theta - mgl * cp * st - b * wt
        acc_phi = tau_phi * inv_inertia - sp * cp * wt * wt
        acc_theta = (tau_theta * inv_inertia + 2.0 * cp * sp * wp * wt) / (cp * cp)
        wp += acc_phi * dt
        wt += acc_theta * dt
        phi += wp * dt
        theta += wt * dt
        t += dt
        if not (abs(phi) < half_pi and abs(theta) < half_pi and math.isfinite(wp) and math.isfinite(wt)):
            raise IntegratorDivergence(step0 + k, t)
    F = (F0, F1, F2, F3)
    return PlantState(phi, theta, wp, wt, F, t)


def step_dynamics(state: PlantState, V_cmd, params: PlantParams) -> PlantState:
    """Single integrator step of length ``params.body.dt``."""
    return advance(state, V_cmd, params, 1)


def torque_residual(state: PlantState, params: PlantParams) -> tuple[float, float]:
    """Net generalized force (N*mm) including damping; zero at equilibrium."""
    q_phi, q_theta, g_phi, g_theta = generalized_forces(state, params)
    b = params.body.damping
    return q_phi + g_phi - b * state.phi_dot, q_theta + g_theta - b * state.theta_dot


def hanging_load_test(
    load_kg: float, params: HaselParams, V: float = 5.0, channel: int = 0,
    duration: float = 1.0, dt: float = 1e-4, g: float = G,
) -> float:
    """Simulate the single-actuator test rig: a mass hangs from the actuator,
    which is stepped to ``V`` at t=0. Returns the settled strain.

    The load moves with the actuator's free end; the rig is critically
    damped around the final operating point.
    """
    fb = blocked_force(V, params)
    eps_max = params.eps_max * params.strain_scale[channel]
    k_mm = fb / (params.L0 * eps_max)  # N/mm
    k = k_mm * 1e3  # N/m
    damping = 2.0 * math.sqrt(k * load_kg)
    lag = 1.0 - math.exp(-dt / params.tau_force)
    c = c_dot = F = 0.0  # m, m/s
    for _ in range(int(round(duration / dt))):
        eps = max(0.0, c * 1e3 / params.L0)
        F += (max(0.0, fb * (1.0 - eps / eps_max)) - F) * lag
        acc = (F - load_kg * g - damping * c_dot) / load_kg
        if c <= 0.0 and acc < 0.0:
            # resting on the stop until the actuator lifts the load
            c, c_dot = 0.0, 0.0
            continue
        c_dot += acc * dt
        c += c_dot * dt
    return c * 1e3 / params.L0


def with_mass(params: PlantParams, **body_changes) -> PlantParams:
    return replace(params, body=replace(params.body, **body_changes))
