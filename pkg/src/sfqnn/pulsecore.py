"""Pulse trains, pulse generators, rate measurement and physical constants.

Time is measured in picoseconds and rates in GHz, so a rate ``r`` corresponds
to ``r * 1e-3`` pulses per picosecond.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

PHI0_MV_PS = 2.07
"""Magnetic flux quantum expressed as voltage-pulse area (mV * ps)."""

E_SWITCH_J = 2e-19
"""Energy dissipated by one 2*pi switch of a ~100 uA junction (J)."""

RATE_NORM_GHZ = 33.3
"""Rate used to normalize figure axes."""

GHZ_PER_INV_PS = 1e3


@dataclass(frozen=True)
class PhysicalConstants:
    phi0: float = PHI0_MV_PS
    e_switch: float = E_SWITCH_J


CONSTANTS = PhysicalConstants()


class PulseTrain:
    """Strictly increasing sequence of pulse times inside ``[0, duration]``.

    The event array is stored read-only so trains can be shared freely.
    """

    __slots__ = ("_t", "duration")

    def __init__(self, events: Iterable[float] = (), duration: float | None = None):
        t = np.array(list(events) if not isinstance(events, np.ndarray) else events,
                     dtype=np.float64)
        if t.ndim != 1:
            raise ValueError("pulse times must be one-dimensional")
        if duration is None:
            duration = float(t[-1]) if t.size else 0.0
        duration = float(duration)
        if t.size:
            if not np.all(np.isfinite(t)):
                raise ValueError("pulse times must be finite")
            if t[0] < 0 or t[-1] > duration:
                raise ValueError("pulse times must lie in [0, duration]")
            if np.any(np.diff(t) <= 0):
                raise ValueError("pulse times must be strictly increasing")
        t.setflags(write=False)
        self._t = t
        self.duration = duration

    @property
    def times(self) -> np.ndarray:
        return self._t

    def __len__(self) -> int:
        return int(self._t.size)

    def __iter__(self):
        return iter(self._t.tolist())

    def __getitem__(self, i):
        return self._t[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PulseTrain):
            return NotImplemented
        return self.duration == other.duration and np.array_equal(self._t, other._t)

    def __repr__(self) -> str:
        return f"PulseTrain(n={len(self)}, duration={self.duration:g} ps)"

    def shifted(self, delay: float) -> "PulseTrain":
        """Return the train delayed by ``delay`` ps, dropping pulses past the window."""
        t = self._t + delay
        return PulseTrain(t[t < self.duration], self.duration)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("t_ps\n")
        for x in self._t.tolist():
            buf.write(f"{x!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, duration: float | None = None) -> "PulseTrain":
        return cls.parse_csv(Path(path).read_text(), duration)

    @classmethod
    def parse_csv(cls, text: str, duration: float | None = None) -> "PulseTrain":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["t_ps"]:
            raise ValueError("pulse CSV must start with header 't_ps'")
        return cls([float(r[0]) for r in rows[1:] if r], duration)


@dataclass(frozen=True)
class RateMeasurement:
    rate: float
    window: tuple[float, float]
    count: int


def regular_train(rate: float, duration: float, phase: float = 0.0) -> PulseTrain:
    """Periodic train with pulses at ``phase + k / rate`` inside ``[0, duration)``."""
    if rate < 0 or not math.isfinite(rate):
        raise ValueError(f"rate must be a finite value >= 0, got {rate}")
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if rate == 0:
        return PulseTrain((), duration)
    period = GHZ_PER_INV_PS / rate
    if not 0 <= phase < period:
        raise ValueError(f"phase must lie in [0, {period:g}) ps")
    n = math.ceil((duration - phase) / period)
    t = phase + period * np.arange(max(n, 0), dtype=np.float64)
    return PulseTrain(t[t < duration], duration)


def poisson_train(rate: float, duration: float, seed) -> PulseTrain:
    """Poisson train with exponential inter-arrival times of mean ``1 / rate``."""
    if rate < 0 or not math.isfinite(rate):
        raise ValueError(f"rate must be a finite value >= 0, got {rate}")
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if rate == 0:
        return PulseTrain((), duration)
    rng = np.random.default_rng(seed)
    mean_gap = GHZ_PER_INV_PS / rate
    chunk = max(16, int(duration / mean_gap * 1.2) + 16)
    gaps = rng.exponential(mean_gap, size=chunk)
    t = np.cumsum(gaps)
    while t[-1] < duration:
        more = np.cumsum(rng.exponential(mean_gap, size=chunk)) + t[-1]
        t = np.concatenate([t, more])
    t = t[t < duration]
    # exponential draws of exactly 0 would duplicate a timestamp
    if t.size and np.any(np.diff(t) <= 0):
        t = np.unique(t)
    return PulseTrain(t, duration)


def measure_rate(train: PulseTrain, start: float, end: float) -> RateMeasurement:
    """Mean rate in GHz of the pulses falling in ``[start, end)``."""
    if not end > start:
        raise ValueError(f"measurement window must satisfy end > start, got [{start}, {end})")
    t = train.times
    count = int(np.searchsorted(t, end, side="left") - np.searchsorted(t, start, side="left"))
    return RateMeasurement(count / (end - start) * GHZ_PER_INV_PS, (float(start), float(end)), count)


def steady_window(duration: float, skip_fraction: float = 0.2) -> tuple[float, float]:
    """Measurement window that skips the initial transient."""
    if not 0 <= skip_fraction < 1:
        raise ValueError("skip_fraction must lie in [0, 1)")
    return skip_fraction * duration, float(duration)
