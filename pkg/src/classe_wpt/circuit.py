"""Circuit parameters and state, plus the receiver-coil current source.

The receiver coil with its series compensation is represented by an ideal
sinusoidal current source: with series-series compensation the coil current
amplitude and phase do not depend on the rectifier load, so the tank itself is
never integrated.  ``Ls`` and ``Cs`` are kept only as metadata.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonFiniteValue, NonPositiveValue


@dataclass(frozen=True)
class CircuitParams:
    Lf: float
    Cf: float
    Co: float
    R: float
    fs: float
    ils_amp: float  # peak amplitude of the coil current
    vo_nominal: float = 24.0
    Ls: float | None = None
    Cs: float | None = None

    @property
    def Ts(self) -> float:
        return 1.0 / self.fs

    @property
    def admittance(self) -> float:
        """Characteristic admittance sqrt(Cf/Lf) of the Lf-Cf tank."""
        return math.sqrt(self.Cf / self.Lf)

    @property
    def resonant_frequency(self) -> float:
        return 1.0 / (2.0 * math.pi * math.sqrt(self.Lf * self.Cf))

    def with_(self, **changes) -> "CircuitParams":
        return replace(self, **changes)

    def coil_source(self, phase_origin: float = 0.0) -> "CoilSource":
        return CoilSource(self.ils_amp, phase_origin)


# Values of the 200 kHz / 24 V / 16 W hardware prototype.  ils_amp is not
# reported; 1.0 A peak leaves headroom to reach 24 V into 36 ohm.
PROTOTYPE = CircuitParams(
    Lf=5.3e-6, Cf=76e-9, Co=3300e-6, R=36.0, fs=200e3, ils_amp=1.0,
    vo_nominal=24.0, Ls=164e-6, Cs=3.86e-9,
)


def validate(params: CircuitParams) -> CircuitParams:
    """Return ``params`` unchanged if every value is positive and finite.

    All offending fields are reported at once.
    """
    nonpositive = []
    nonfinite = []
    for f in fields(params):
        value = getattr(params, f.name)
        if value is None:
            continue
        if not value > 0:  # also catches NaN
            nonpositive.append(f.name)
        elif not math.isfinite(value):
            nonfinite.append(f.name)
    if nonpositive:
        raise NonPositiveValue(nonpositive)
    if nonfinite:
        raise NonFiniteValue(nonfinite)
    return params


@dataclass(frozen=True)
class CoilSource:
    """Receiver-coil current ``amplitude * sin(2*pi*fs*(t - phase_origin))``.

    ``amplitude_step`` is an optional ``(t_step, new_amplitude)`` pair; the
    phase is continuous across the step.
    """

    amplitude: float
    phase_origin: float = 0.0
    amplitude_step: tuple[float, float] | None = None

    def amplitude_at(self, t):
        if self.amplitude_step is None:
            if np.ndim(t):
                return np.full(np.shape(t), float(self.amplitude))
            return self.amplitude
        t_step, new_amp = self.amplitude_step
        if np.ndim(t):
            return np.where(np.asarray(t) >= t_step, new_amp, self.amplitude)
        return new_amp if t >= t_step else self.amplitude

    def breakpoints(self) -> tuple[float, ...]:
        return () if self.amplitude_step is None else (self.amplitude_step[0],)


def ils_at(src: CoilSource, fs: float, t):
    """Instantaneous coil current at time ``t`` (scalar or array)."""
    cycles = (np.asarray(t, dtype=float) - src.phase_origin) * fs
    # reduce to one period before taking the sine to keep the phase exact
    phase = 2.0 * np.pi * (cycles - np.floor(cycles))
    out = src.amplitude_at(t) * np.sin(phase)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ReceiverState:
    t: float = 0.0
    vcf: float = 0.0
    ilf: float = 0.0
    vo: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vcf, self.ilf, self.vo])


class SwitchMode(enum.IntEnum):
    MODE1 = 1  # switch on, Cf shorted
    MODE2 = 2  # switch off, Lf-Cf resonating


# -- key = value configuration files ---------------------------------------

_PARAM_KEYS = {
    "lf": "Lf", "cf": "Cf", "co": "Co", "r": "R", "fs": "fs",
    "ils_amp": "ils_amp", "ls": "Ls", "cs": "Cs", "vo_nominal": "vo_nominal",
}
_REQUIRED = ("lf", "cf", "co", "r", "fs", "ils_amp")
CONFIG_KEYS = frozenset(_PARAM_KEYS) | {"dt", "ss_tol", "fc", "kp", "ki"}


def parse_config(text: str) -> dict[str, float]:
    """Parse ``name = value`` lines; ``#`` starts a comment."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'name = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} is not a number: {value!r}") from None
    return values


def load_config(path) -> dict[str, float]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def params_from_config(values: dict[str, float]) -> CircuitParams:
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    kwargs = {_PARAM_KEYS[k]: v for k, v in values.items() if k in _PARAM_KEYS}
    return validate(CircuitParams(**kwargs))
