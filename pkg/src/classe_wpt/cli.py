"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analytic, control, design, simulator
from .circuit import CircuitParams, load_config, params_from_config
from .errors import ConfigError, NoConvergence, NonFinite, OutOfRange
from .modulator import periodic_schedule

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("classe_wpt")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    params: CircuitParams
    sim: simulator.SimConfig
    fc: float = 100.0
    kp: float | None = None
    ki: float | None = None


def _positive(name):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"{name} must be positive, got {text!r}")
        return v
    return conv


def _phase(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--D must be a number or 'auto', got {text!r}") from None
    if not 0.0 <= v <= 0.25:
        raise argparse.ArgumentTypeError(f"--D must lie in [0, 0.25], got {text!r}")
    return v


def run_config(args) -> RunConfig:
    values = load_config(args.config)
    params = params_from_config(values)
    if getattr(args, "R", None) is not None:
        params = params.with_(R=args.R)
    sim = simulator.SimConfig(dt=values.get("dt"), ss_tolerance=values.get("ss_tol", 1e-6))
    try:
        sim.step(params.fs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fc = getattr(args, "fc", None) or values.get("fc", 100.0)
    return RunConfig(params, sim, fc, values.get("kp"), values.get("ki"))


def _gains(rc: RunConfig, params: CircuitParams, D0: float) -> control.PiGains:
    if rc.kp is not None and rc.ki is not None:
        return control.PiGains(rc.kp, rc.ki)
    return control.pi_gains(rc.fc, params, params.ils_amp, D0, params.R)


def _resolve_phase(D, params, sim) -> float:
    if D == "auto":
        return control.equilibrium_phase(params, params.vo_nominal, sim)
    return D


# -- design ---------------------------------------------------------------------------

def cmd_design(args) -> int:
    try:
        spec = design.DesignSpec(args.ils_max, args.vo_min, args.fs, args.ripple)
    except OutOfRange as exc:
        flag = {"ripple_pct": "--ripple", "ils_max": "--ils-max", "vo_min": "--vo-min", "fs": "--fs"}
        name = next((f for k, f in flag.items() if k in str(exc)), "")
        raise UsageError(f"{name}: {exc}".strip(": ")) from None
    if not 0 <= args.y_fraction <= 1:
        raise UsageError("--y-fraction must lie in [0, 1]")
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    region = design.feasible_region(spec, args.points)
    chosen = design.choose_design(spec, args.y_fraction)
    design.write_design_csv(args.out, region)
    lo, hi = chosen.band
    print(f"admittance band: {lo:.6g} .. {hi:.6g} S")
    print(f"chosen Y  = {chosen.Y:.6g} S")
    print(f"Lf        = {chosen.Lf:.6g} H")
    print(f"Cf        = {chosen.Cf:.6g} F")
    print(f"Co_min    = {design.recommended_co(region):.6g} F (largest Cf in region)")
    print(f"feasible region ({len(region)} points) written to {args.out}")
    return EXIT_OK


# -- steady -----------------------------------------------------------------------------

def cmd_steady(args) -> int:
    rc = run_config(args)
    p = rc.params
    D = _resolve_phase(args.D, p, rc.sim)
    orbit = simulator.steady_state_at(p, D, replace(rc.sim, record_stride=1))
    z = simulator.zvs_report(orbit, p)
    u = orbit.u
    thd = analytic.thd_db(analytic.fourier_series(u, orbit.series.vcf, 50), 50)
    orbit.series.to_csv(args.out)
    rows = [
        ("D", D), ("cycles", orbit.n_cycles),
        ("vo_avg", orbit.vo_avg), ("io_avg", orbit.io_avg), ("p_avg", orbit.p_avg),
        ("vcf_peak", orbit.vcf_peak), ("vcf_peak/vo_avg", orbit.vcf_peak / orbit.vo_avg if orbit.vo_avg else math.nan),
        ("zvs_on_voltage", z.on_voltage), ("zvs_off_voltage", z.off_voltage),
        ("zvs_ok", z.zvs_ok), ("vo_ripple_pp", orbit.vo_ripple_pp), ("thd_vcf_db", thd),
    ]
    for k, v in rows:
        print(f"{k:16s} {v:.6g}" if isinstance(v, float) else f"{k:16s} {v}")
    return EXIT_OK


# -- simulate ---------------------------------------------------------------------------

def _scenario(args, p: CircuitParams):
    if args.scenario == "load_step":
        return control.LoadStep(0.0, math.inf, p.R)
    if args.scenario == "source_step":
        return control.SourceStep(0.0, args.amp_before, args.amp_after)
    if args.scenario == "reference_step":
        return control.ReferenceStep(0.0, p.vo_nominal, args.vref_after)
    return control.Hold()


def cmd_simulate(args) -> int:
    rc = run_config(args)
    p = rc.params
    sim = replace(rc.sim, record_stride=args.stride)
    if args.scenario == "open_loop":
        D = _resolve_phase(args.D, p, rc.sim)
        n = int(round(args.t_post * p.fs))
        if n < 1:
            raise UsageError("--t-post must cover at least one switching period")
        src = p.coil_source()
        gate = periodic_schedule(src, p.fs, D, n)
        ts = simulator.run_transient(p, src, gate, sim)
        ts.to_csv(args.out)
        tail = ts.t >= ts.t[-1] - 2e-3
        print(f"open loop D = {D:.6g}: final vo = {ts.vo[-1]:.6g} V, mean over last 2 ms = "
              f"{float(np.mean(ts.vo[tail])):.6g} V")
        return EXIT_OK
    scen = _scenario(args, p)
    if isinstance(scen, control.SourceStep):
        pre = p.with_(ils_amp=scen.amp_before)
        if control.equilibrium_phase(pre, p.vo_nominal, rc.sim) >= 0.25:
            raise UsageError(f"{p.vo_nominal:g} V is out of reach at {scen.amp_before:g} A into "
                             f"{p.R:g} ohm before the step; raise --amp-before or use a larger --R")
    # gains are tuned at the operating point that follows the disturbance
    post = p
    if isinstance(scen, control.SourceStep):
        post = p.with_(ils_amp=scen.amp_after)
    vpost = scen.v_after if isinstance(scen, control.ReferenceStep) else p.vo_nominal
    D_post = control.equilibrium_phase(post, vpost, rc.sim)
    gains = _gains(rc, post, min(D_post, 0.2499))
    run = control.simulate_closed_loop(p, None, gains, scen, t_pre=args.t_pre,
                                       t_post=args.t_post, cfg=sim)
    run.series.to_csv(args.out)
    m = run.metrics()
    print(f"scenario         {args.scenario}")
    print(f"kp, ki           {gains.kp:.6g}, {gains.ki:.6g}")
    print(f"max deviation    {m.max_deviation:.6g} V ({m.max_deviation_pct:.3g} %)")
    print(f"final error      {m.final_error:.6g} V ({m.final_error_pct:.3g} %)")
    print(f"settling (0.4 %) {m.settling_time:.6g} s")
    return EXIT_OK


# -- bode -------------------------------------------------------------------------------

def _stem_path(out: str, suffix: str) -> Path:
    path = Path(out)
    return path.with_name(f"{path.stem}_{suffix}{path.suffix or '.csv'}")


def cmd_bode(args) -> int:
    rc = run_config(args)
    p = rc.params
    try:
        grid = control.log_grid(args.fmin, args.fmax, args.points)
    except ValueError as exc:
        raise UsageError(f"--fmin/--fmax/--points: {exc}") from None
    D0 = _resolve_phase(args.D, p, rc.sim)
    plant = control.plant_tf(p, p.ils_amp, D0)
    gains = _gains(rc, p, D0)
    loop = control.closed_loop_tf(plant, gains)
    pb = control.bode(plant.tf(), grid)
    lb = control.bode(loop, grid)
    pb.to_csv(_stem_path(args.out, "plant"))
    lb.to_csv(_stem_path(args.out, "loop"))
    i = int(np.argmin(np.abs(np.log(grid / rc.fc))))
    print(f"D0 = {D0:.6g}, plant DC gain = {plant.dc_gain:.6g} V/unit D, pole = {plant.pole_hz:.4g} Hz")
    print(f"loop gain at {grid[i]:.4g} Hz: {lb.mag_db[i]:.3f} dB")
    if args.numeric:
        freqs = [float(f) for f in args.numeric_freqs.split(",")]
        nb = control.numeric_frequency_response(p, None, D0, sorted(freqs), args.amplitude, rc.sim)
        nb.to_csv(_stem_path(args.out, "numeric"))
        ref = control.bode(plant.tf(), nb.f_hz)
        for f, m, ph, rm, rp in zip(nb.f_hz, nb.mag_db, nb.phase_deg, ref.mag_db, ref.phase_deg):
            print(f"numeric {f:9.4g} Hz: {m:8.3f} dB {ph:8.2f} deg (analytic {rm:8.3f} dB {rp:8.2f} deg)")
    return EXIT_OK


# -- sweep ------------------------------------------------------------------------------

SWEEP_FIELDS = ("value", "D", "vo_avg", "io_avg", "zvs_ok", "reg_error", "converged")


def _sweep_point(task):
    param, value, p, sim, D, closed = task
    if param == "R":
        p = p.with_(R=value)
    elif param == "ils":
        p = p.with_(ils_amp=value)
    else:
        D = value
    try:
        if closed:
            D = control.equilibrium_phase(p, p.vo_nominal, sim)
        orbit = simulator.steady_state_at(p, D, sim)
    except (NoConvergence, NonFinite) as exc:
        return (value, D, math.nan, math.nan, 0, math.nan, 0), str(exc)
    z = simulator.zvs_report(orbit, p)
    err = orbit.vo_avg - p.vo_nominal if closed else math.nan
    return (value, D, orbit.vo_avg, orbit.io_avg, int(z.zvs_ok), err, 1), None


def cmd_sweep(args) -> int:
    rc = run_config(args)
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    if args.param == "D" and args.closed_loop:
        raise UsageError("--closed-loop chooses D itself; sweep R or ils instead")
    values = [args.start] if args.steps == 1 else list(np.linspace(args.start, args.stop, args.steps))
    for v in values:
        if args.param == "D" and not 0 <= v <= 0.25:
            raise UsageError("--from/--to must lie in [0, 0.25] for a D sweep")
        if args.param != "D" and not v > 0:
            raise UsageError("--from/--to must be positive")
    D = None
    if not args.closed_loop and args.param != "D":
        if args.D is None:
            raise UsageError("--D is required for an open-loop R or ils sweep")
        D = _resolve_phase(args.D, rc.params, rc.sim)
    tasks = [(args.param, float(v), rc.params, rc.sim, D, args.closed_loop) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for row, _ in results:
            w.writerow([repr(float(x)) if isinstance(x, float) else str(x) for x in row])
    failed = [msg for _, msg in results if msg]
    for row, msg in results:
        print(f"{args.param}={row[0]:.6g}: vo={row[2]:.6g} V io={row[3]:.6g} A zvs_ok={row[4]}"
              + (f" reg_error={row[5]:.4g} V" if args.closed_loop else "")
              + (f" FAILED: {msg}" if msg else ""))
    if failed:
        print(f"{len(failed)} point(s) did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="classe-wpt",
                                 description="Phase-controlled class E rectifier toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="size Lf, Cf and Co")
    d.add_argument("--fs", type=_positive("--fs"), required=True)
    d.add_argument("--ils-max", type=_positive("--ils-max"), required=True)
    d.add_argument("--vo-min", type=_positive("--vo-min"), required=True)
    d.add_argument("--ripple", type=_positive("--ripple"), required=True, help="percent")
    d.add_argument("--y-fraction", type=float, default=0.5)
    d.add_argument("--points", type=int, default=11)
    d.add_argument("--out", default="design.csv")
    d.set_defaults(func=cmd_design)

    def with_config(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--R", type=_positive("--R"))
        sp.add_argument("--out", required=True)

    s = sub.add_parser("steady", help="periodic steady state at constant D")
    with_config(s)
    s.add_argument("--D", type=_phase, default="auto")
    s.set_defaults(func=cmd_steady)

    m = sub.add_parser("simulate", help="closed-loop or open-loop transient")
    with_config(m)
    m.add_argument("--scenario", required=True,
                   choices=["load_step", "source_step", "reference_step", "open_loop", "hold"])
    m.add_argument("--D", type=_phase, default="auto", help="open_loop only")
    m.add_argument("--fc", type=_positive("--fc"))
    m.add_argument("--t-pre", type=_positive("--t-pre"), default=5e-3)
    m.add_argument("--t-post", type=_positive("--t-post"), default=0.1)
    m.add_argument("--stride", type=int, default=100, help="record every n-th step")
    m.add_argument("--amp-before", type=_positive("--amp-before"), default=0.5)
    m.add_argument("--amp-after", type=_positive("--amp-after"), default=0.8)
    m.add_argument("--vref-after", type=_positive("--vref-after"), default=20.0)
    m.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bode", help="analytic and numeric frequency response")
    with_config(b)
    b.add_argument("--fmin", type=float, default=0.1)
    b.add_argument("--fmax", type=float, default=1e4)
    b.add_argument("--points", type=int, default=50)
    b.add_argument("--D", type=_phase, default="auto")
    b.add_argument("--fc", type=_positive("--fc"))
    b.add_argument("--numeric", action="store_true")
    b.add_argument("--numeric-freqs", default="10,40,100,400,1000")
    b.add_argument("--amplitude", type=_positive("--amplitude"), default=0.005)
    b.set_defaults(func=cmd_bode)

    w = sub.add_parser("sweep", help="steady state over a parameter range")
    with_config(w)
    w.add_argument("--param", choices=["R", "D", "ils"], required=True)
    w.add_argument("--from", dest="start", type=float, required=True)
    w.add_argument("--to", dest="stop", type=float, required=True)
    w.add_argument("--steps", type=int, required=True)
    w.add_argument("--D", type=_phase)
    w.add_argument("--closed-loop", action="store_true",
                   help="choose D per point so vo settles at vo_nominal")
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "stride", 1) < 1:
        ap.error("--stride must be at least 1")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoConvergence, NonFinite) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
