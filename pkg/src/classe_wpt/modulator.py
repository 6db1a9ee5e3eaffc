"""Synchronised phase-shift gate generation.

A zero-cross detector marks every rising zero crossing of the coil current.
The PWM counter restarts on each of these sync edges and produces a 50 %
duty gate whose rising edge leads the coil current by ``(0.25 + D) * Ts``.
In counter terms the gate falls at ``(0.25 - D) * Ts`` after the sync edge
and rises again half a period later, so relative to the turn-on instant the
coil current reads ``-|I| cos(2 pi fs t - 2 pi D)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import CoilSource
from .errors import PhaseOutOfRange

D_MIN = 0.0
D_MAX = 0.25


@dataclass(frozen=True)
class SyncEvent:
    t: float


@dataclass(frozen=True)
class CounterModel:
    """PWM time base.  ``counter_max=None`` means exact (unquantised) timing."""

    counter_max: int | None = None
    prop_delay: float = 0.0

    @classmethod
    def from_clock(cls, fs: float, fs_clock: float = 150e6, prop_delay: float = 0.0):
        return cls(int(round(fs_clock / fs)), prop_delay)

    def compare_values(self, D: float) -> tuple[int, int]:
        """Counter ticks at which the gate falls and rises within one period."""
        if self.counter_max is None:
            raise ValueError("exact counter has no compare registers")
        n = self.counter_max
        fall = int(math.floor((D_MAX - D) * n + 0.5))
        return fall, fall + n // 2

    def offsets(self, D: float, Ts: float) -> tuple[float, float]:
        """Gate rise and fall times measured from the sync edge (fall lies in the next period)."""
        if self.counter_max is None:
            rise = (0.75 - D) * Ts
            fall = rise + 0.5 * Ts
        else:
            n = self.counter_max
            fall_tick, rise_tick = self.compare_values(D)
            rise = rise_tick * Ts / n
            fall = (fall_tick + n) * Ts / n
        return rise + self.prop_delay, fall + self.prop_delay


EXACT = CounterModel()


def clamp_phase_ratio(D_raw: float) -> tuple[float, bool]:
    """Limit D to [0, 0.25]; the flag tells whether the limit was active."""
    D = min(max(D_raw, D_MIN), D_MAX)
    return D, D != D_raw


def detect_zero_crossings(src: CoilSource, fs: float, horizon: float) -> list[SyncEvent]:
    """Rising zero crossings of the coil current in ``[0, horizon)``.

    The source is an ideal sinusoid, so crossings are placed analytically.  An
    amplitude step leaves the phase, and therefore the crossings, untouched.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    Ts = 1.0 / fs
    first = math.ceil(-src.phase_origin / Ts - 1e-9)
    last = math.ceil((horizon - src.phase_origin) / Ts - 1e-9)
    return [SyncEvent(src.phase_origin + n * Ts) for n in range(first, last)]


@dataclass(frozen=True)
class GateSchedule:
    t_on: np.ndarray
    t_off: np.ndarray
    D: np.ndarray
    Ts: float
    t_end: float

    def __len__(self):
        return len(self.t_on)

    def state(self, t: float) -> int:
        i = int(np.searchsorted(self.t_on, t, side="right")) - 1
        return int(i >= 0 and t < self.t_off[i])

    def is_periodic(self, rtol: float = 1e-9) -> bool:
        if len(self) < 2:
            return True
        return (np.ptp(self.D) == 0.0
                and np.allclose(np.diff(self.t_on), self.Ts, rtol=0, atol=rtol * self.Ts))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_on", "t_off"])
            for a, b in zip(self.t_on, self.t_off):
                w.writerow([repr(float(a)), repr(float(b))])


def gate_interval(t_sync: float, D: float, Ts: float, counter: CounterModel = EXACT):
    rise, fall = counter.offsets(D, Ts)
    return t_sync + rise, t_sync + fall


def gate_schedule(events: Sequence[SyncEvent], D, Ts: float,
                  counter: CounterModel = EXACT) -> GateSchedule:
    """One on-interval per sync event.

    ``D`` is a scalar or one value per event; it is latched at the sync edge.
    """
    if len(events) == 0:
        raise ValueError("no sync events")
    ds = np.broadcast_to(np.asarray(D, dtype=float), (len(events),)).copy()
    bad = (ds < D_MIN) | (ds > D_MAX) | np.isnan(ds)
    if np.any(bad):
        raise PhaseOutOfRange(f"phase-shift ratio outside [0, 0.25]: {ds[bad][0]!r}")
    if not 0.0 <= counter.prop_delay < 0.25 * Ts:
        raise ValueError("propagation delay must lie in [0, Ts/4)")
    on = np.empty(len(events))
    off = np.empty(len(events))
    for i, (ev, d) in enumerate(zip(events, ds)):
        on[i], off[i] = gate_interval(ev.t, d, Ts, counter)
    return GateSchedule(on, off, ds, Ts, events[-1].t + Ts)


def periodic_schedule(src: CoilSource, fs: float, D: float, n_cycles: int,
                      counter: CounterModel = EXACT) -> GateSchedule:
    """Constant-D schedule covering ``n_cycles`` sync periods from t = 0."""
    events = detect_zero_crossings(src, fs, n_cycles / fs)
    return gate_schedule(events, D, 1.0 / fs, counter)
