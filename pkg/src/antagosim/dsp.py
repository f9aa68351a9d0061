"""Streaming filters for the sensing and command paths."""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def rms(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("rms of an empty sequence")
    return float(np.sqrt(np.mean(x * x)))


class MovingAverage:
    """Mean of the last ``window`` samples; averages what is available
    during warm-up instead of zero-padding.

    The sum is recomputed from the buffer each step so the output is the
    exact arithmetic mean with no accumulated drift.
    """

    def __init__(self, window: int = 20):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.buffer = deque(maxlen=window)

    def push(self, x: float) -> float:
        self.buffer.append(float(x))
        return math.fsum(self.buffer) / len(self.buffer)

    def reset(self):
        self.buffer.clear()


class LowPass:
    """First-order IIR low pass, y += alpha * (x - y) with
    alpha = dt / (dt + 1 / (2 pi f_c)).

    With ``y0=None`` the first sample initializes the output.
    """

    def __init__(self, cutoff_hz: float, dt: float, y0: float | None = None):
        if cutoff_hz <= 0 or dt <= 0:
            raise ValueError("cutoff and dt must be positive")
        self.cutoff_hz = cutoff_hz
        self.dt = dt
        self.alpha = dt / (dt + 1.0 / (2.0 * math.pi * cutoff_hz))
        self.y = y0

    def push(self, x: float) -> float:
        if self.y is None:
            self.y = float(x)
        else:
            self.y += self.alpha * (x - self.y)
        return self.y


def moving_average_push(state: MovingAverage, x: float) -> float:
    return state.push(x)


def lowpass_push(state: LowPass, x: float) -> float:
    return state.push(x)
