import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from antagosim.plant import (
    G,
    STRAIN_TABLE,
    CalibrationError,
    HaselParams,
    IntegratorDivergence,
    PlantParams,
    PlantState,
    advance,
    blocked_force,
    calibrate_from_table,
    capacitance,
    contractions,
    generalized_forces,
    hanging_load_test,
    sense_voltage_rms,
    sense_voltage_waveform_rms,
    tension,
    torque_residual,
    with_mass,
)

HP = HaselParams()
PLANT = PlantParams()
# two-point linear solve of F = a + b*eps through the 14 g / 34 g rows,
# F_b5k = a, eps_max = -a/b (frozen from numpy.linalg.solve)
F_B5K = 2.194275483870968
EPS_MAX = 0.06934


def test_calibration_matches_linear_solve():
    pts = STRAIN_TABLE["phi1"]
    A = np.array([[1.0, e] for _, e in pts])
    a, b = np.linalg.solve(A, [m * G for m, _ in pts])
    assert a == pytest.approx(F_B5K, rel=1e-12)
    assert -a / b == pytest.approx(EPS_MAX, rel=1e-12)
    f_b, eps = calibrate_from_table(pts)
    assert f_b == pytest.approx(F_B5K, rel=1e-12)
    assert eps == pytest.approx(EPS_MAX, rel=1e-12)


def test_calibration_singular():
    with pytest.raises(CalibrationError):
        calibrate_from_table([(0.014, 0.065), (0.014, 0.065)])


def test_default_length_scale():
    assert HP.L0 == pytest.approx(8.45 / 0.065, rel=1e-12)
    assert HP.L0 == pytest.approx(130.0, rel=1e-12)


def test_tension_reproduces_table_loads():
    for load, strain in STRAIN_TABLE["phi1"]:
        c = strain * HP.L0
        assert abs(tension(5.0, c, HP) - load * G) < 1e-9
    assert tension(5.0, 0.065 * HP.L0, HP) == pytest.approx(0.13734, abs=1e-9)
    assert tension(5.0, 0.0588 * HP.L0, HP) == pytest.approx(0.33354, abs=1e-9)
    assert tension(0.0, 3.0, HP) == 0.0


def test_blocked_force_law():
    assert blocked_force(0.0, HP) == 0.0
    assert blocked_force(5.0, HP) == pytest.approx(HP.F_b5k)
    assert blocked_force(2.5, HP) == pytest.approx(HP.F_b5k / 4)
    for bad in (-0.1, 5.6):
        with pytest.raises(ValueError):
            blocked_force(bad, HP)


@given(st.floats(0, 5.5), st.floats(0, 5.5), st.floats(0, 7.5), st.floats(0, 7.5))
def test_tension_monotone(v1, v2, c1, c2):
    lo_v, hi_v = sorted((v1, v2))
    lo_c, hi_c = sorted((c1, c2))
    assert tension(hi_v, c1, HP) >= tension(lo_v, c1, HP)
    assert tension(v1, hi_c, HP) <= tension(v1, lo_c, HP)
    assert tension(v1, c1, HP) >= 0.0


def test_capacitance_endpoints():
    assert capacitance(0.0, HP) == 500.0
    assert capacitance(7.5, HP) == 100.0
    assert capacitance(3.75, HP) == 300.0
    assert capacitance(-1.0, HP) == 500.0 and capacitance(9.0, HP) == 100.0


def _divider_gain(C_pf):
    # |1 / (1 + j w R C)| in SI units
    w = 2 * math.pi * 2000.0
    return 1.0 / math.sqrt(1.0 + (w * 2.0e6 * C_pf * 1e-12) ** 2)


def test_sense_voltage_hand_values():
    assert _divider_gain(100) == pytest.approx(0.3697, abs=5e-5)
    assert _divider_gain(500) == pytest.approx(0.0793, abs=5e-5)
    for C in (100.0, 300.0, 500.0):
        assert abs(sense_voltage_rms(C, HP) - 7.0711 * _divider_gain(C)) < 1e-9
    assert sense_voltage_rms(100.0, HP) == pytest.approx(2.614, abs=1e-3)
    assert sense_voltage_rms(500.0, HP) == pytest.approx(0.561, abs=1e-3)
    assert sense_voltage_rms(1e-9, HP) == pytest.approx(HP.V_ac_rms, rel=1e-9)


def test_sense_voltage_monotone_in_contraction():
    c = np.linspace(0, HP.c_max, 200)
    v = [sense_voltage_rms(capacitance(ci, HP), HP) for ci in c]
    assert np.all(np.diff(v) > 0)


@pytest.mark.parametrize("C", [100.0, 200.0, 300.0, 400.0, 500.0])
def test_waveform_rms_matches_analytic(C):
    assert sense_voltage_waveform_rms(C, HP) == pytest.approx(sense_voltage_rms(C, HP), rel=0.01)


def test_rest_is_fixed_point():
    s = advance(PlantState(), [0, 0, 0, 0], PLANT, 1000)
    assert (s.phi, s.theta, s.phi_dot, s.theta_dot) == (0.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("start", [(0.3, 0.0), (0.0, 0.3), (0.3, -0.3)])
def test_returns_to_rest(start):
    s = advance(PlantState(phi=start[0], theta=start[1]), [0, 0, 0, 0], PLANT, 100_000)
    assert math.hypot(s.phi, s.theta) < 1e-3


def test_antagonist_swap_negates_motion():
    hp = replace(HP, strain_scale=(1.0, 1.0, 1.0, 1.0))
    p = PlantParams(hasel=hp)
    a = b = PlantState()
    for k in range(40):
        va, vb = 4.0 + math.sin(k), 1.0
        a = advance(a, [va, vb, 0, 0], p, 50)
        b = advance(b, [vb, va, 0, 0], p, 50)
        assert abs(a.theta + b.theta) <= 1e-9
        assert a.phi == 0.0 and b.phi == 0.0


def _reference_step(state, V, p):
    """One semi-implicit Euler step assembled from the public pieces
    (finite-difference generalized forces, explicit mass matrix)."""
    hp, body = p.hasel, p.body
    c = contractions(state.phi, state.theta, p)
    lag = 1 - math.exp(-body.dt / hp.tau_force)
    F = tuple(f + (tension(v, ci, hp, i) - f) * lag for i, (f, v, ci) in enumerate(zip(state.force, V, c)))
    s = replace(state, force=F)
    q_phi, q_theta, g_phi, g_theta = generalized_forces(s, p)
    inertia = body.mass * body.l_com**2 / 1000.0  # N*mm*s^2
    sp, cp = math.sin(s.phi), math.cos(s.phi)
    tau_phi = q_phi + g_phi - body.damping * s.phi_dot
    tau_theta = q_theta + g_theta - body.damping * s.theta_dot
    acc_phi = tau_phi / inertia - sp * cp * s.theta_dot**2
    acc_theta = (tau_theta / inertia + 2 * cp * sp * s.phi_dot * s.theta_dot) / cp**2
    wp = s.phi_dot + acc_phi * body.dt
    wt = s.theta_dot + acc_theta * body.dt
    return s.phi + wp * body.dt, s.theta + wt * body.dt, wp, wt


def test_fast_step_matches_reference_step():
    rng = np.random.default_rng(11)
    for _ in range(50):
        phi, theta = rng.uniform(-0.5, 0.5, 2)
        state = PlantState(phi, theta, *rng.uniform(-2, 2, 2), tuple(rng.uniform(0, 1, 4)))
        V = rng.uniform(0, 5.5, 4)
        fast = advance(state, V, PLANT, 1)
        ref = _reference_step(state, V, PLANT)
        assert np.allclose((fast.phi, fast.theta), ref[:2], atol=1e-12)
        assert np.allclose((fast.phi_dot, fast.theta_dot), ref[2:], rtol=1e-7, atol=1e-8)


def test_step_on_one_actuator_settles_at_static_balance():
    # a heavier arm keeps the equilibrium clear of the tendon anchor
    p = with_mass(PLANT, mass=0.020, l_com=50.0, damping=0.5)
    s = advance(PlantState(), [5.0, 0, 0, 0], p, 80_000)
    hp, geo, body = p.hasel, p.geometry, p.body
    mgl = body.mass * body.g * body.l_com
    f_b = blocked_force(5.0, hp)

    def net(theta):
        # phi = 0: q_phi1 = q_t + r_t sin(theta), lever arm r_t cos(theta)
        c = geo.q_t - geo.r_t * math.sin(theta)
        F = max(0.0, f_b * (1 - c / hp.L0 / (hp.eps_max * hp.strain_scale[0])))
        return -F * geo.r_t * math.cos(theta) - mgl * math.sin(theta)

    theta_eq = brentq(net, -math.asin(geo.q_t / geo.r_t) + 1e-9, 0.0, xtol=1e-14)
    assert s.phi == 0.0
    assert s.theta == pytest.approx(theta_eq, abs=1e-6)
    assert max(abs(r) for r in torque_residual(s, p)) < 1e-6
    q = contractions(s.phi, s.theta, p)
    assert q[0] == max(q)  # the driven actuator is the most contracted


def test_divergence_is_reported():
    with pytest.raises(IntegratorDivergence) as info:
        advance(PlantState(theta_dot=math.nan), [0, 0, 0, 0], PLANT, 1000, step0=7)
    assert info.value.step == 7


@pytest.mark.parametrize("load,strain", STRAIN_TABLE["phi1"])
def test_hanging_load_strain(load, strain):
    hp = replace(HP, F_b5k=F_B5K, eps_max=EPS_MAX)
    assert hanging_load_test(load, hp) == pytest.approx(strain, abs=0.002)


def test_param_validation():
    with pytest.raises(ValueError):
        HaselParams(C_min=600.0)
    with pytest.raises(ValueError):
        HaselParams(eps_max=1.5)
    with pytest.raises(ValueError):
        HaselParams(V_max=4.0)
