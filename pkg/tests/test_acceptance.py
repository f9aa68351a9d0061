"""Acceptance criteria 1-8. Each test records one PASS/FAIL line, printed in
the terminal summary (and immediately with ``pytest -s``)."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from antagosim.config import SimConfig
from antagosim.control import FeedbackSource
from antagosim.geometry import euler_from_rotation, rotation_from_euler, task_to_tendon
from antagosim.harness import (
    peak_to_peak_deg,
    percent_increase,
    rmse_task,
    run_closed_loop,
    run_openloop,
    train_pipeline,
)
from antagosim.plant import (
    STRAIN_TABLE,
    HaselParams,
    PlantParams,
    PlantState,
    advance,
    calibrate_from_table,
    hanging_load_test,
    sense_voltage_rms,
    sense_voltage_waveform_rms,
)
from conftest import ACCEPTANCE_LINES

DIAG = math.sqrt(2) * 3.75  # 5.303300858899107


def report(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} | {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def _quiet(cfg):
    return replace(cfg, noise=replace(cfg.noise, sense_sigma_v=0.0, mocap_sigma_mm=0.0))


def _star(cfg):
    return cfg.with_mode(cfg.mode, kind="star", period=None)


class Timed:
    def __init__(self, fn, *args, **kw):
        t0 = time.perf_counter()
        self.value = fn(*args, **kw)
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="module")
def base():
    return SimConfig()


@pytest.fixture(scope="module")
def trained(base):
    return Timed(train_pipeline, base)


@pytest.fixture(scope="module")
def episodes(base, trained):
    model = trained.value[0]
    out = {}
    for kind, cfg in (("lemniscate", base), ("star", _star(base))):
        out[kind, "bm"] = Timed(run_closed_loop, cfg, FeedbackSource.GROUND_TRUTH)
        out[kind, "ss"] = Timed(run_closed_loop, cfg, FeedbackSource.SELF_SENSING, model)
    return out


def test_criterion_1_kinematics():
    t0 = time.perf_counter()
    center = task_to_tendon(0.0, 0.0, 3.75).q
    corner = np.array(task_to_tendon(3.75, 0.0, 3.75).q)
    mirror = np.array(task_to_tendon(-3.75, 0.0, 3.75).q)
    corner_err = np.max(np.abs(corner - [0.0, 7.5, DIAG, DIAG]))
    mirror_err = np.max(np.abs(mirror - [7.5, 0.0, DIAG, DIAG]))
    rng = np.random.default_rng(2024)
    lim = math.radians(80)
    worst = 0.0
    for phi, theta in rng.uniform(-lim, lim, size=(10_000, 2)):
        e = euler_from_rotation(rotation_from_euler(phi, theta).R)
        worst = max(worst, abs(e.phi - phi), abs(e.theta - theta))
    dt = time.perf_counter() - t0
    ok = list(center) == [3.75] * 4 and corner_err <= 1e-9 and mirror_err <= 1e-9 and worst <= 1e-12 and dt < 1.0
    report(1, "kinematics suite", ok,
           f"center exact={list(center) == [3.75] * 4}, corner err={corner_err:.1e}, "
           f"mirror err={mirror_err:.1e}, round-trip max err={worst:.1e}, {dt:.2f} s")


def test_criterion_2_sensing_fidelity():
    t0 = time.perf_counter()
    hp = HaselParams()
    w = 2 * math.pi * 2000.0
    oracle = 7.0711 / math.sqrt(1 + (w * 2e6 * 100e-12) ** 2)
    analytic_err = abs(sense_voltage_rms(100.0, hp) - oracle)
    gain = sense_voltage_rms(100.0, hp) / hp.V_ac_rms
    worst = max(abs(sense_voltage_waveform_rms(C, hp) / sense_voltage_rms(C, hp) - 1)
                for C in np.linspace(100.0, 500.0, 9))
    dt = time.perf_counter() - t0
    ok = analytic_err <= 1e-9 and round(gain, 4) == 0.3697 and worst < 0.01 and dt < 5.0
    report(2, "sensing voltage fidelity", ok,
           f"|analytic - oracle|={analytic_err:.1e} V, gain={gain:.4f}, "
           f"waveform max rel dev={worst:.2%}, {dt:.2f} s")


def test_criterion_3_calibration():
    t0 = time.perf_counter()
    f_b, eps = calibrate_from_table(STRAIN_TABLE["phi1"])
    hp = replace(HaselParams(), F_b5k=f_b, eps_max=eps)
    got = {m: hanging_load_test(m, hp) for m in (0.014, 0.034)}
    dt = time.perf_counter() - t0
    ok = abs(got[0.014] - 0.065) <= 0.002 and abs(got[0.034] - 0.0588) <= 0.002 and dt < 2.0
    report(3, "calibration", ok,
           f"14 g -> {got[0.014]:.4f} (0.065), 34 g -> {got[0.034]:.4f} (0.0588), {dt:.2f} s")


def test_criterion_4_openloop_range(base):
    # roll is driven by the pair anchored on the y axis ("theta"-named tendons)
    t0 = time.perf_counter()
    log = run_openloop(replace(base, openloop=replace(base.openloop, pair="theta")))
    dt = time.perf_counter() - t0
    p2p = peak_to_peak_deg(log)
    other = peak_to_peak_deg(run_openloop(replace(base, openloop=replace(base.openloop, pair="phi"))))
    ok = p2p["phi"] >= 80.0 and dt < 5.0 and log.t[-1] < 5.0
    report(4, "open-loop range", ok,
           f"phi p2p={p2p['phi']:.2f} deg (theta pair driven); theta p2p={other['theta']:.2f} deg "
           f"(phi pair driven), {dt:.2f} s")


def test_criterion_5_estimator(base, trained):
    quiet = Timed(train_pipeline, _quiet(base))
    r2_quiet = quiet.value[0].metrics_["r2"]
    r2_noisy = trained.value[0].metrics_["r2"]
    ok = (min(r2_quiet) >= 0.99 and min(r2_noisy) >= 0.95
          and quiet.seconds < 30 and trained.seconds < 30)
    report(5, "estimator fit", ok,
           f"R2 noise-free={[round(r, 5) for r in r2_quiet]} ({quiet.seconds:.1f} s), "
           f"R2 default noise={[round(r, 5) for r in r2_noisy]} ({trained.seconds:.1f} s)")


def test_criterion_6_benchmark_tracking(base, episodes):
    parts, ok = [], True
    for kind in ("lemniscate", "star"):
        ep = episodes[kind, "bm"]
        rmse = rmse_task(ep.value)
        limit = 0.1 * base.trajectory.amplitude
        ok &= rmse <= limit and ep.seconds < 60
        parts.append(f"{kind} RMSE={rmse:.3f} mm (<= {limit:.1f}), {ep.seconds:.1f} s")
    report(6, "benchmark tracking", ok, "; ".join(parts))


def test_criterion_7_selfsense_vs_benchmark(episodes):
    parts, ok = [], True
    for kind in ("lemniscate", "star"):
        bm, ss = rmse_task(episodes[kind, "bm"].value), rmse_task(episodes[kind, "ss"].value)
        ok &= ss <= 2.0 * bm
        parts.append(f"{kind} ss/bm={ss:.3f}/{bm:.3f} mm ({percent_increase(ss, bm):+.1f}%)")
    pcts = (percent_increase(4.245, 2.869), percent_increase(3.407, 2.798))
    ok &= pcts == (48.0, 21.8)
    parts.append(f"reference percentages={pcts}")
    report(7, "self-sensing vs benchmark", ok, "; ".join(parts))


def test_criterion_8_determinism_and_safety(base, trained, episodes, tmp_path):
    model, meta = trained.value
    first, again = tmp_path / "a.csv", tmp_path / "b.csv"
    episodes["lemniscate", "bm"].value.write_csv(first)
    run_closed_loop(base, FeedbackSource.GROUND_TRUTH).write_csv(again)
    csv_same = first.read_bytes() == again.read_bytes()
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    model.save(m1, metadata=meta)
    model2, meta2 = train_pipeline(base)
    model2.save(m2, metadata=meta2)
    json_same = m1.read_bytes() == m2.read_bytes()
    v_peak = max(float(np.max(ep.value.v_cmd)) for ep in episodes.values())
    plant = PlantParams()
    rest = []
    for start in ((0.3, 0.0), (0.0, 0.3), (0.3, -0.3)):
        s = advance(PlantState(phi=start[0], theta=start[1]), [0, 0, 0, 0], plant, 100_000)
        rest.append(math.hypot(s.phi, s.theta))
    ok = csv_same and json_same and v_peak <= 5.5 and max(rest) < 1e-3
    report(8, "determinism and safety", ok,
           f"csv identical={csv_same}, model json identical={json_same}, max command={v_peak:.3f} kV, "
           f"residual after 10 s={max(rest):.1e} rad")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
