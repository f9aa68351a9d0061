"""Task-space reference curves on the manipulator sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_PERIODS = {"lemniscate": 25.0, "star": 40.0}


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "lemniscate"
    amplitude: float = 40.0  # mm
    period: float | None = None  # s; None picks the per-kind default
    star_points: int = 5
    star_inner_ratio: float = 0.382
    ramp: float = 2.0  # s
    cycles: int = 2
    mirror_x: bool = False

    def __post_init__(self):
        if self.kind not in DEFAULT_PERIODS:
            raise TrajectoryError(f"unknown trajectory kind {self.kind!r}")
        if self.period is None:
            object.__setattr__(self, "period", DEFAULT_PERIODS[self.kind])
        if self.period <= 0:
            raise TrajectoryError("period must be positive")
        if self.amplitude <= 0:
            raise TrajectoryError("amplitude must be positive")
        if self.star_points < 3:
            raise TrajectoryError("a star needs at least 3 points")
        if not 0 < self.star_inner_ratio < 1:
            raise TrajectoryError("star inner ratio must lie in (0, 1)")
        if self.ramp < 0 or self.cycles < 1:
            raise TrajectoryError("ramp must be >= 0 and cycles >= 1")

    @property
    def duration(self) -> float:
        return self.ramp + self.cycles * self.period

    def check_reachable(self, r_t: float, l_m: float, q_t: float):
        if self.amplitude * r_t / l_m > q_t:
            raise TrajectoryError(
                f"amplitude {self.amplitude} mm exceeds the reachable disc ({q_t * l_m / r_t:.1f} mm)"
            )


def lemniscate_point(t: float, spec: TrajectorySpec) -> tuple[float, float]:
    """Figure-eight of Gerono: x = A sin a, y = A sin a cos a."""
    a = 2.0 * math.pi * t / spec.period
    s = math.sin(a)
    return spec.amplitude * s, spec.amplitude * s * math.cos(a)


def star_vertices(spec: TrajectorySpec) -> np.ndarray:
    n = 2 * spec.star_points
    k = np.arange(n)
    radius = np.where(k % 2 == 0, spec.amplitude, spec.star_inner_ratio * spec.amplitude)
    angle = math.pi / 2 + k * math.pi / spec.star_points
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def star_point(t: float, spec: TrajectorySpec) -> tuple[float, float]:
    """Constant-speed walk around the star outline, starting at the top tip."""
    verts = star_vertices(spec)
    seg = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    total = seg.sum()
    s = (t % spec.period) / spec.period * total
    i = 0
    while i < len(seg) - 1 and s > seg[i]:
        s -= seg[i]
        i += 1
    frac = min(s / seg[i], 1.0)
    p0, p1 = verts[i], verts[(i + 1) % len(verts)]
    x, y = p0 + frac * (p1 - p0)
    return float(x), float(y)


def to_sphere(x: float, y: float, l_m: float) -> np.ndarray:
    r2 = x * x + y * y
    if r2 >= l_m * l_m:
        raise TrajectoryError(f"({x}, {y}) lies outside the sphere of radius {l_m}")
    return np.array([x, y, -math.sqrt(l_m * l_m - r2)])


def curve_point(t: float, spec: TrajectorySpec) -> tuple[float, float]:
    x, y = lemniscate_point(t, spec) if spec.kind == "lemniscate" else star_point(t, spec)
    if spec.mirror_x:
        x = -x
    return x, y


def ramp_gain(t: float, ramp: float) -> float:
    if ramp == 0:
        return 1.0
    return min(1.0, max(t, 0.0) / ramp) ** 2


def reference(t: float, spec: TrajectorySpec, l_m: float) -> np.ndarray:
    """Reference end-effector point at time t.

    The curve starts at t = ramp; before that its (periodically extended)
    points are scaled by a quadratic ease-in from the rest point.
    """
    if t < 0:
        return np.array([0.0, 0.0, -l_m])
    s = ramp_gain(t, spec.ramp)
    x, y = curve_point(t - spec.ramp, spec)
    return to_sphere(s * x, s * y, l_m)
