"""Output-voltage regulation through the phase-shift ratio D.

Averaged around an operating point the rectifier is a current source
``K_SMALL_SIGNAL * |I| * cos(2 pi D0) * d`` feeding ``R || Co``.  A PI
compensator whose zero cancels the ``R*Co`` pole turns the loop gain into
``2 pi fc / s``.  The discrete controller updates D once per switching period
at the sync edge.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .analytic import K_SMALL_SIGNAL, operating_point
from .circuit import CircuitParams, CoilSource, validate
from .errors import DegenerateOperatingPoint, OutOfRange
from .modulator import D_MAX, D_MIN, EXACT, CounterModel, clamp_phase_ratio
from .simulator import (
    SimConfig,
    TimeSeries,
    run_sync_cycles,
    state_at_sync,
    steady_state_at,
)

# -- transfer functions ------------------------------------------------------------


@dataclass(frozen=True)
class TransferFunction:
    """Rational function of s; coefficients are highest power first."""

    num: np.ndarray
    den: np.ndarray

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        return TransferFunction(np.polymul(self.num, other.num), np.polymul(self.den, other.den))

    def feedback(self) -> "TransferFunction":
        """Unity negative feedback around this loop gain."""
        return TransferFunction(self.num, np.polyadd(self.den, self.num))


def _tf(num, den) -> TransferFunction:
    return TransferFunction(np.atleast_1d(np.asarray(num, float)), np.atleast_1d(np.asarray(den, float)))


@dataclass(frozen=True)
class PlantModel:
    gain: float  # output current per unit D (A)
    pole_rc: float  # R * Co (s)
    Co: float

    @property
    def R(self) -> float:
        return self.pole_rc / self.Co

    @property
    def dc_gain(self) -> float:
        """Output voltage per unit D at DC (V)."""
        return self.gain * self.R

    @property
    def pole_hz(self) -> float:
        return 1.0 / (2.0 * math.pi * self.pole_rc)

    def tf(self) -> TransferFunction:
        return _tf([self.dc_gain], [self.pole_rc, 1.0])


def _check_d0(D0: float):
    if not D_MIN <= D0 <= D_MAX:
        raise OutOfRange(f"D0 must lie in [0, 0.25), got {D0!r}")
    if D0 >= D_MAX:
        raise DegenerateOperatingPoint("plant gain vanishes at D0 = 0.25")


def plant_tf(params: CircuitParams, ils_amp: float | None = None, D0: float = 0.0,
             R: float | None = None) -> PlantModel:
    """Linearised output voltage response to D around ``D0``."""
    _check_d0(D0)
    ils_amp = params.ils_amp if ils_amp is None else ils_amp
    R = params.R if R is None else R
    gain = K_SMALL_SIGNAL * ils_amp * math.cos(2.0 * math.pi * D0)
    return PlantModel(gain, R * params.Co, params.Co)


@dataclass(frozen=True)
class PiGains:
    kp: float  # unit D per V
    ki: float  # unit D per V*s
    d_min: float = D_MIN
    d_max: float = D_MAX

    def __post_init__(self):
        if not (self.kp > 0 and self.ki > 0):
            raise OutOfRange("kp and ki must be positive")

    def tf(self) -> TransferFunction:
        return _tf([self.kp, self.ki], [1.0, 0.0])


def pi_gains(fc: float, params: CircuitParams, ils_amp: float | None = None,
             D0: float = 0.0, R: float | None = None) -> PiGains:
    """Gains placing the loop crossover at ``fc`` with the zero on the load pole."""
    if not fc > 0:
        raise OutOfRange(f"fc must be positive, got {fc!r}")
    plant = plant_tf(params, ils_amp, D0, R)
    kp = 2.0 * math.pi * fc * plant.Co / plant.gain
    return PiGains(kp, kp / plant.pole_rc)


def closed_loop_tf(plant: PlantModel, gains: PiGains) -> TransferFunction:
    """Loop transfer compensator * plant, kept unreduced (no symbolic cancellation)."""
    return gains.tf() * plant.tf()


@dataclass
class FrequencyResponse:
    f_hz: np.ndarray
    mag_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        if len(self.f_hz) > 1 and not np.all(np.diff(self.f_hz) > 0):
            raise ValueError("frequencies must be strictly increasing")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["f_hz", "mag_db", "phase_deg"])
            for row in zip(self.f_hz, self.mag_db, self.phase_deg):
                w.writerow([repr(float(v)) for v in row])


def _check_grid(f_grid) -> np.ndarray:
    f = np.asarray(f_grid, dtype=float)
    if f.ndim != 1 or len(f) == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise ValueError("frequency grid must be a non-empty, positive, increasing list")
    return f


def bode(tf, f_grid) -> FrequencyResponse:
    f = _check_grid(f_grid)
    h = tf(2j * np.pi * f)
    return FrequencyResponse(f, 20.0 * np.log10(np.abs(h)), np.degrees(np.unwrap(np.angle(h))))


def log_grid(fmin: float, fmax: float, n: int) -> np.ndarray:
    if not (0 < fmin < fmax) or n < 2:
        raise ValueError("need 0 < fmin < fmax and at least 2 points")
    return np.logspace(math.log10(fmin), math.log10(fmax), n)


# -- discrete PI ---------------------------------------------------------------------


@dataclass(frozen=True)
class PiState:
    integrator: float = 0.0
    last_D: float = 0.0
    saturated: bool = False

    def __post_init__(self):
        if not D_MIN <= self.last_D <= D_MAX:
            raise OutOfRange(f"last_D must lie in [0, 0.25], got {self.last_D!r}")


def pi_step(state: PiState, gains: PiGains, vref: float, vo_meas: float,
            dt_ctrl: float) -> tuple[float, PiState]:
    """One controller update with conditional-integration anti-windup."""
    e = vref - vo_meas
    D, sat = clamp_phase_ratio(gains.kp * e + state.integrator)
    D = min(max(D, gains.d_min), gains.d_max)
    unwinds = (state.last_D >= gains.d_max and e < 0) or (state.last_D <= gains.d_min and e > 0)
    integ = state.integrator
    if not state.saturated or unwinds:
        integ += gains.ki * e * dt_ctrl
    return D, PiState(integ, D, sat)


def simulate_averaged_loop(plant: PlantModel, gains: PiGains, ils_amp: float,
                           vref, t_end: float, dt_ctrl: float, vo0: float = 0.0,
                           state: PiState = PiState()):
    """PI loop around the averaged (non-switching) output stage.

    ``vref`` is a constant or a callable of time.  The output stage is
    integrated exactly over each controller period with D held.
    Returns ``(t, vo, D)`` arrays sampled at the controller updates.
    """
    ref = vref if callable(vref) else (lambda t: vref)
    n = int(round(t_end / dt_ctrl))
    tau = plant.pole_rc
    decay = math.exp(-dt_ctrl / tau)
    t = np.arange(n) * dt_ctrl
    vo = np.empty(n)
    ds = np.empty(n)
    v = vo0
    for k in range(n):
        D, state = pi_step(state, gains, ref(t[k]), v, dt_ctrl)
        vo[k], ds[k] = v, D
        v_inf = operating_point(ils_amp, plant.R, D).vo
        v = v_inf + (v - v_inf) * decay
    return t, vo, ds


# -- closed-loop switching simulation ------------------------------------------------


@dataclass(frozen=True)
class LoadStep:
    t_step: float
    R_before: float  # math.inf for an open output
    R_after: float


@dataclass(frozen=True)
class SourceStep:
    t_step: float
    amp_before: float  # peak coil current (A)
    amp_after: float


@dataclass(frozen=True)
class ReferenceStep:
    t_step: float
    v_before: float
    v_after: float


@dataclass(frozen=True)
class Hold:
    t_step: float = 0.0


Scenario = Union[LoadStep, SourceStep, ReferenceStep, Hold]


@dataclass
class ClosedLoopRun:
    series: TimeSeries | None
    t_sync: np.ndarray
    vo_sync: np.ndarray
    D: np.ndarray
    vref: np.ndarray
    t_step: float  # absolute time of the disturbance

    def metrics(self, settle_window: float = 2e-3) -> "StepMetrics":
        return step_metrics(self.t_sync, self.vo_sync, self.vref, self.t_step, settle_window)


@dataclass(frozen=True)
class StepMetrics:
    max_deviation: float  # largest |vo - vref| after the step (V)
    max_deviation_pct: float  # relative to the final reference
    final_error: float  # mean vo - vref over the settle window (V)
    final_error_pct: float
    settling_time: float  # last time |vo - vref| exceeds 0.4 % of vref, after the step


def step_metrics(t, vo, vref, t_step, settle_window=2e-3) -> StepMetrics:
    t = np.asarray(t)
    err = np.asarray(vo) - np.asarray(vref)
    after = t >= t_step
    ref_final = float(vref[-1])
    dev = float(np.max(np.abs(err[after]))) if np.any(after) else 0.0
    tail = t >= t[-1] - settle_window
    fe = float(np.mean(err[tail]))
    band = 0.004 * abs(ref_final)
    outside = np.nonzero(after & (np.abs(err) > band))[0]
    settle = float(t[outside[-1]] - t_step) if len(outside) else 0.0
    scale = abs(ref_final) if ref_final else 1.0
    return StepMetrics(dev, 100 * dev / scale, fe, 100 * fe / scale, settle)


def _initial_conditions(scenario: Scenario, params: CircuitParams, vref0: float):
    """(R, amplitude) before the disturbance."""
    R, amp = params.R, params.ils_amp
    if isinstance(scenario, LoadStep):
        R = scenario.R_before
    if isinstance(scenario, SourceStep):
        amp = scenario.amp_before
    return R, amp


def equilibrium_phase(params: CircuitParams, vref: float, cfg: SimConfig = SimConfig(),
                      counter: CounterModel = EXACT) -> float:
    """Constant D at which the switching model settles at ``vref``.

    Falls back to the closed-form estimate when the target is out of reach.
    """
    def f(D):
        return steady_state_at(params, D, cfg, counter=counter).vo_avg - vref

    lo, hi = 0.0, D_MAX
    f_lo, f_hi = f(lo), f(hi)
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-7)


def simulate_closed_loop(params: CircuitParams, src: CoilSource | None, gains: PiGains,
                         scenario: Scenario, *, vref: float | None = None,
                         t_pre: float = 5e-3, t_post: float = 30e-3,
                         cfg: SimConfig = SimConfig(), counter: CounterModel = EXACT,
                         record: bool = True) -> ClosedLoopRun:
    """Switching simulation with the PI controller updating D every period.

    The run starts in the periodic steady state of the pre-disturbance
    conditions (regulated at ``vref``), lasts ``t_pre`` before the disturbance
    and ``t_post`` after it.  With an open output before a load step the
    start is the ``D = 0`` orbit with vo preset to the reference.
    """
    validate(params)
    dt = cfg.step(params.fs)
    vref0 = params.vo_nominal if vref is None else vref
    if isinstance(scenario, ReferenceStep):
        vref0 = scenario.v_before
    R0, amp0 = _initial_conditions(scenario, params, vref0)
    origin = 0.0 if src is None else src.phase_origin
    Ts = params.Ts

    open_start = math.isinf(R0)
    base = params.with_(R=params.R if open_start else R0, ils_amp=amp0)
    D0 = 0.0 if open_start else equilibrium_phase(base, vref0, cfg, counter)
    orbit = steady_state_at(base, D0, replace(cfg, record_stride=1), CoilSource(amp0, origin), counter)
    t0, x0 = state_at_sync(base, CoilSource(amp0, origin), orbit, dt)
    if open_start:
        x0[2] = vref0

    n_pre = int(round(t_pre / Ts))
    n_total = n_pre + int(round(t_post / Ts))
    t_step = t0 + n_pre * Ts

    load_steps: list[tuple[float, float]] = []
    G0 = 0.0 if open_start else 1.0 / R0
    run_src = CoilSource(amp0, origin)
    if isinstance(scenario, LoadStep):
        load_steps.append((t_step, 1.0 / scenario.R_after))
    elif isinstance(scenario, SourceStep):
        run_src = CoilSource(amp0, origin, (t_step, scenario.amp_after))

    def ref_at(t):
        if isinstance(scenario, ReferenceStep) and t >= t_step:
            return scenario.v_after
        return vref0

    state = PiState(D0, D0, False)
    vrefs = np.empty(n_total)

    def choose(k, ts, vo):
        nonlocal state
        r = ref_at(ts)
        vrefs[k] = r
        D, state = pi_step(state, gains, r, vo, Ts)
        return D

    run = run_sync_cycles(base, run_src, dt, x0, D0, n_total, choose, t_start=t0,
                          counter=counter, load_steps=load_steps, G=G0,
                          stride=cfg.record_stride if record else None)
    return ClosedLoopRun(run.series, run.t_sync, run.vo_sync, run.D, vrefs, t_step)


# -- frequency response from the switching model -------------------------------------


def _periodic_response(params, src, dt, D0, a, M, counter, t0):
    """Sync-edge output voltages of the M-cycle periodic response."""
    def sched(k, ts, vo):
        return D0 + a * math.sin(2.0 * math.pi * k / M)

    D_last = D0 + a * math.sin(2.0 * math.pi * (M - 1) / M)

    def run(x, source):
        return run_sync_cycles(params, source, dt, x, D_last, M, sched, t_start=t0, counter=counter)

    zero = np.zeros(3)
    c = run(zero, src).final
    quiet = CoilSource(0.0, src.phase_origin)
    phi = np.empty((2, 2))
    for j, idx in enumerate((1, 2)):
        e = zero.copy()
        e[idx] = 1.0
        phi[:, j] = run(e, quiet).final[1:]
    sol = np.linalg.solve(np.eye(2) - phi, c[1:])
    x = np.array([0.0, sol[0], sol[1]])
    res = run(x, src)
    return res.vo_sync, res.D, np.linalg.norm(res.final - x) / np.linalg.norm(x)


def numeric_frequency_response(params: CircuitParams, src: CoilSource | None, D0: float,
                               f_grid: Sequence[float], amplitude: float = 0.005,
                               cfg: SimConfig = SimConfig(),
                               counter: CounterModel = EXACT) -> FrequencyResponse:
    """Output-voltage response to a sinusoidal D perturbation, from the switching model.

    Each frequency is rounded to ``fs / M`` with integer M so the perturbation
    repeats after exactly M switching periods; the reported grid holds the
    rounded frequencies.  The periodic response is found as the fixed point of
    the M-period map and the output is correlated with the perturbation.
    """
    validate(params)
    f = _check_grid(f_grid)
    if not 0 < amplitude:
        raise OutOfRange("amplitude must be positive")
    if D0 - amplitude < 0 or D0 + amplitude > D_MAX:
        raise OutOfRange("D0 +/- amplitude must stay inside [0, 0.25]")
    src = params.coil_source() if src is None else src
    dt = cfg.step(params.fs)
    orbit = steady_state_at(params, D0, cfg, src, counter)
    t0, _ = state_at_sync(params, src, orbit, dt)
    f_out, mags, phases = [], [], []
    for fi in f:
        M = int(round(params.fs / fi))
        if M < 8:
            raise OutOfRange(f"{fi} Hz is too close to the switching frequency")
        vo, ds, _ = _periodic_response(params, src, dt, D0, amplitude, M, counter, t0)
        k = np.arange(M)
        w = np.exp(-2j * np.pi * k / M)
        h = np.sum(vo * w) / np.sum(ds * w)
        f_out.append(params.fs / M)
        mags.append(20.0 * math.log10(abs(h)))
        phases.append(math.degrees(np.angle(h)))
    return FrequencyResponse(np.array(f_out), np.array(mags), np.array(phases))
