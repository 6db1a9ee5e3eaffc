"""Closed-form steady-state waveforms and scalar laws of the rectifier.

The waveforms are approximations with three-digit constants.  They serve as
the reference the time-domain simulator is checked against, so everything
here is evaluated directly or by plain quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import simpson

from .circuit import CircuitParams
from .errors import OutOfRange

# Off-state voltage amplitude relative to vo.
K_AMP = 2.26
# Tank phase advance per switching period (rad); equals 2*pi*K_RES.
K_FREQ = 8.11
# Output-current gain: io = K_GAIN * |I_Ls| * sin(2*pi*D).
K_GAIN = 0.795
# Lf-Cf resonance as a multiple of fs.
K_RES = 1.29
# Linearised gain d(io)/dD at D = 0, i.e. K_GAIN * 2*pi rounded.
K_SMALL_SIGNAL = 5.0
# Output capacitor sizing factor: Co >= K_CO * Cf / ripple.
K_CO = 5.41


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
        raise OutOfRange(f"normalized time must lie in [0, 1), got {u!r}")
    return arr


def _check_phase(D):
    if not 0.0 <= D <= 0.25:
        raise OutOfRange(f"phase-shift ratio must lie in [0, 0.25], got {D!r}")


def _vcf_closed(u, vo):
    # valid on [0, 1]; u = 1 gives the left limit of the off interval
    return np.where(u < 0.5, 0.0, vo * (1.0 + K_AMP * np.cos(K_FREQ * (u - 0.75))))


def vcf_analytic(u, vo: float):
    """Switch voltage at normalized time ``u = t/Ts`` (gate-relative).

    Zero while the switch conducts (u < 0.5), a shifted cosine while it is off.
    """
    arr = _check_u(u)
    out = _vcf_closed(arr, vo)
    return float(out) if out.ndim == 0 else out


def ilf_analytic(u, params: CircuitParams, D: float, vo: float | None = None):
    """Filter-inductor current at normalized time ``u``.

    ``vo`` defaults to the output voltage predicted by :func:`operating_point`.
    """
    arr = _check_u(u)
    _check_phase(D)
    io, vo_eq = operating_point(params.ils_amp, params.R, D)
    if vo is None:
        vo = vo_eq
    y = params.admittance
    ramp = io - K_FREQ * vo * y * (arr - 0.25)
    ring = io + K_AMP * vo * y * np.sin(K_FREQ * (arr - 0.75))
    out = np.where(arr < 0.5, ramp, ring)
    return float(out) if out.ndim == 0 else out


def real_power(ils_amp: float, vo: float, D: float) -> float:
    _check_phase(D)
    return K_GAIN * ils_amp * vo * math.sin(2.0 * math.pi * D)


class OperatingPoint(NamedTuple):
    io: float
    vo: float


def operating_point(ils_amp: float, R: float, D: float) -> OperatingPoint:
    """Load-independent output current and the resulting output voltage."""
    if not R > 0:
        raise OutOfRange(f"R must be positive, got {R!r}")
    _check_phase(D)
    io = K_GAIN * ils_amp * math.sin(2.0 * math.pi * D)
    return OperatingPoint(io, io * R)


def phase_for_voltage(vo: float, ils_amp: float, R: float) -> float:
    """Invert :func:`operating_point`: the D that yields ``vo`` into ``R``."""
    s = vo / (K_GAIN * ils_amp * R)
    if not 0.0 <= s <= 1.0:
        raise OutOfRange(
            f"{vo} V into {R} ohm needs sin(2 pi D) = {s:.3f}; "
            f"at most {K_GAIN * ils_amp * R:.3f} V is reachable"
        )
    return math.asin(s) / (2.0 * math.pi)


# -- Fourier analysis --------------------------------------------------------

@dataclass(frozen=True)
class Harmonics:
    dc: float
    amplitudes: np.ndarray  # amplitudes[n-1] is the peak of harmonic n

    @property
    def fundamental(self) -> float:
        return float(self.amplitudes[0])


def fourier_series(u, y, n_max: int = 50) -> Harmonics:
    """Harmonic amplitudes of one period sampled on ``u`` in [0, 1].

    ``u`` must span the closed period (first sample at 0, last at 1) with an
    odd number of uniform samples; coefficients come from composite Simpson
    quadrature.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1 or len(u) < 3:
        raise ValueError("u and y must be 1-D arrays of equal length >= 3")
    span = u[-1] - u[0]
    x = (u - u[0]) / span
    dc = simpson(y, x=x)
    n = np.arange(1, n_max + 1)[:, None]
    arg = 2.0 * np.pi * n * x[None, :]
    a = 2.0 * simpson(y[None, :] * np.cos(arg), x=x, axis=1)
    b = 2.0 * simpson(y[None, :] * np.sin(arg), x=x, axis=1)
    return Harmonics(float(dc), np.hypot(a, b))


# Harmonic content below this fraction of the fundamental is quadrature noise.
_NOISE_FLOOR = 1e-12


def thd_db(h: Harmonics, n_max: int = 50) -> float:
    """20*log10 of harmonic RMS (n = 2..n_max) over the fundamental; DC excluded."""
    c1 = h.fundamental
    rest = h.amplitudes[1:n_max]
    distortion = math.sqrt(float(np.sum(rest * rest)))
    if distortion <= _NOISE_FLOOR * c1:
        return -math.inf
    return 20.0 * math.log10(distortion / c1)


def vcf_harmonics(n_samples: int = 8192, vo: float = 1.0, n_max: int = 50) -> Harmonics:
    if n_samples < 4096:
        raise ValueError("use at least 4096 samples per cycle")
    u = np.linspace(0.0, 1.0, n_samples + 1)
    return fourier_series(u, _vcf_closed(u, vo), n_max)


def thd_vcf(n_samples: int = 8192) -> float:
    """THD (dB) of the closed-form switch voltage, harmonics 2..50."""
    return thd_db(vcf_harmonics(n_samples), 50)


# -- consistency of the published constants -----------------------------------

@dataclass(frozen=True)
class ConstantCheck:
    name: str
    residual: float
    limit: float

    @property
    def ok(self) -> bool:
        return abs(self.residual) < self.limit


def constants_report() -> list[ConstantCheck]:
    """Cross-checks between the rounded constants of the waveform formulas."""
    return [
        ConstantCheck("tank phase = 2*pi*resonance ratio",
                      K_FREQ - 2.0 * math.pi * K_RES, 0.01),
        ConstantCheck("zero switch voltage at the off-interval edges",
                      1.0 + K_AMP * math.cos(K_FREQ / 4.0), 1e-3),
        ConstantCheck("small-signal gain = 2*pi*output gain",
                      K_SMALL_SIGNAL - K_GAIN * 2.0 * math.pi, 0.01),
    ]
