"""Sizing of the filter tank and the output capacitor.

The tank admittance ``Y = sqrt(Cf/Lf)`` is bounded by the coil current and
the lowest output voltage; the tank resonance is pinned at ``K_RES * fs``.
Each admissible ``Y`` therefore fixes one ``(Lf, Cf)`` pair.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .analytic import K_CO, K_RES
from .circuit import CircuitParams
from .errors import OutOfRange

# admittance band in units of ils_max / vo_min
Y_LOW = 2.5
Y_HIGH = 5.0


@dataclass(frozen=True)
class DesignSpec:
    ils_max: float  # peak coil current (A)
    vo_min: float
    fs: float
    ripple_pct: float  # x = 1 means 1 %

    def __post_init__(self):
        for name in ("ils_max", "vo_min", "fs", "ripple_pct"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise OutOfRange(f"{name} must be positive and finite, got {v!r}")
        if not self.ripple_pct < 100:
            raise OutOfRange(f"ripple_pct must lie in (0, 100), got {self.ripple_pct!r}")


@dataclass(frozen=True)
class DesignResult:
    Y: float
    Lf: float
    Cf: float
    Co_min: float
    band: tuple[float, float]


def admittance_band(spec: DesignSpec) -> tuple[float, float]:
    base = spec.ils_max / spec.vo_min
    return Y_LOW * base, Y_HIGH * base


def _omega(fs: float) -> float:
    return 2.0 * math.pi * K_RES * fs


def solve_lf_cf(Y: float, fs: float) -> tuple[float, float]:
    """Tank values with admittance ``Y`` resonating at ``K_RES * fs``."""
    if not (Y > 0 and fs > 0):
        raise OutOfRange("Y and fs must be positive")
    w = _omega(fs)
    return 1.0 / (Y * w), Y / w


def min_output_cap(Cf: float, ripple_pct: float) -> float:
    if not Cf > 0:
        raise OutOfRange(f"Cf must be positive, got {Cf!r}")
    if not 0 < ripple_pct < 100:
        raise OutOfRange(f"ripple_pct must lie in (0, 100), got {ripple_pct!r}")
    return K_CO * Cf / (ripple_pct / 100.0)


def _result(Y, spec, band):
    Lf, Cf = solve_lf_cf(Y, spec.fs)
    return DesignResult(Y, Lf, Cf, min_output_cap(Cf, spec.ripple_pct), band)


def feasible_region(spec: DesignSpec, n_points: int = 11) -> list[DesignResult]:
    """Designs at ``n_points`` admittances spread evenly across the band."""
    if n_points < 2:
        raise OutOfRange("n_points must be at least 2")
    band = admittance_band(spec)
    return [_result(float(Y), spec, band) for Y in np.linspace(*band, n_points)]


def recommended_co(region: list[DesignResult]) -> float:
    """Output capacitor sized for the largest Cf in the region."""
    return max(region, key=lambda d: d.Cf).Co_min


def choose_design(spec: DesignSpec, y_fraction: float = 0.5) -> DesignResult:
    """Design at ``Ymin + y_fraction * (Ymax - Ymin)``; 0.5 is the band midpoint."""
    if not 0.0 <= y_fraction <= 1.0:
        raise OutOfRange(f"y_fraction must lie in [0, 1], got {y_fraction!r}")
    lo, hi = admittance_band(spec)
    return _result(lo + y_fraction * (hi - lo), spec, (lo, hi))


@dataclass(frozen=True)
class ResonanceCheck:
    ratio: float  # tank resonance / fs
    deviation: float  # relative to K_RES
    in_band: bool | None  # None when no spec is given


def resonance_check(params: CircuitParams, spec: DesignSpec | None = None) -> ResonanceCheck:
    """How far an existing tank sits from the design rules.  Reports, never rejects."""
    ratio = params.resonant_frequency / params.fs
    in_band = None
    if spec is not None:
        lo, hi = admittance_band(spec)
        in_band = lo <= params.admittance <= hi
    return ResonanceCheck(ratio, ratio / K_RES - 1.0, in_band)


def params_for_design(base: CircuitParams, design: DesignResult) -> CircuitParams:
    return base.with_(Lf=design.Lf, Cf=design.Cf)


def write_design_csv(path, region: list[DesignResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Y", "Lf", "Cf", "Co_min"])
        for d in region:
            w.writerow([repr(d.Y), repr(d.Lf), repr(d.Cf), repr(d.Co_min)])
