from dataclasses import replace

import pytest
from hypothesis import settings

from antagosim.config import SimConfig

settings.register_profile("antagosim", deadline=None, max_examples=200)
settings.load_profile("antagosim")


def short_config(kind="lemniscate", period=6.0, cycles=1, ramp=1.0, **changes) -> SimConfig:
    """A default config with a brief trajectory, for fast episode tests."""
    cfg = SimConfig()
    traj = replace(cfg.trajectory, kind=kind, period=period, cycles=cycles, ramp=ramp)
    return replace(cfg, trajectory=traj, **changes)


def quiet(cfg: SimConfig) -> SimConfig:
    return replace(cfg, noise=replace(cfg.noise, sense_sigma_v=0.0, mocap_sigma_mm=0.0))


@pytest.fixture
def default_config():
    return SimConfig()


# acceptance criteria append "PASS/FAIL" lines here; printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
