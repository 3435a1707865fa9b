"""Command-line front end.

Subcommands: ``design``, ``bode``, ``margins``, ``discretize``, ``simulate``
and ``reproduce``.  Exit status is 0 on success, 2 for invalid input and 3
for numerical failures (ill-conditioned designs, evaluation at a pole,
impossible pole placement).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .freq_analysis import bode_table, iter_rows, margins
from .glm_design import (
    DesignError,
    IllConditionedError,
    PolyBasisSpec,
    SinBasisSpec,
    design_poly,
    design_sin,
    to_highpass,
    tuning_hint,
)
from .jobconfig import ConfigError, build_job, plant_from_dict
from .loop_sim import simulate, step_metrics
from .plant_tools import (
    ContinuousTF,
    PlacementError,
    integrator_tf,
    motor_model,
    sim_plant,
    zoh_discretize,
)
from .ratfun import PoleEvaluationError, RationalTF, padded

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (IllConditionedError, PoleEvaluationError, PlacementError,
                  np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)
CONFIG_ERRORS = (DesignError, ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError)


# --- shared helpers -------------------------------------------------------------


def _fmt_row(label: str, values) -> str:
    return f"{label} = [" + " ".join(f"{v:8.4f}" for v in values) + " ]"


def _pairs(z) -> list:
    return [[float(np.real(p)), float(np.imag(p))] for p in np.atleast_1d(z)]


def _tf_json(h: RationalTF, **extra) -> dict:
    out = {"b": [float(x) for x in h.b.real], "a": [float(x) for x in h.a.real],
           "T": h.sample_period, "poles": _pairs(h.poles())}
    out.update(extra)
    return out


def _write_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(header: Sequence[str], rows, path: Optional[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _tf_from_json(doc: dict) -> RationalTF:
    try:
        return RationalTF.from_coeffs(doc["b"], doc["a"], doc.get("T"))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"filter JSON needs numeric 'b' and 'a' arrays ({exc})") from None


def _add_design_flags(p: argparse.ArgumentParser, required: bool) -> None:
    kind = p.add_mutually_exclusive_group(required=required)
    kind.add_argument("--poly", action="store_true", help="polynomial basis")
    kind.add_argument("--sin", action="store_true", help="sinusoidal basis")
    p.add_argument("-K", type=int, help="polynomial order")
    p.add_argument("-m", "--m-hat", type=float, default=0.0,
                   help="evaluation offset in samples (>0 lag, <0 lead)")
    p.add_argument("-s", "--sigma", type=float, help="fading-memory rate (negative)")
    p.add_argument("-d", "--deriv", type=int, default=0, help="derivative order")
    p.add_argument("--highpass", action="store_true",
                   help="return z^-m_hat - H(z) (integer m_hat > 0)")
    p.add_argument("--freqs", type=float, nargs="+", help="design frequencies, cycles/sample")
    p.add_argument("--gains", type=float, nargs="+", help="linear gain at each frequency")
    p.add_argument("--phases", type=float, nargs="+", help="phase at each frequency, degrees")


def _design_from_args(args, T: Optional[float]):
    """Return (design result, transfer function) for the design flags."""
    if args.sigma is None:
        raise ConfigError("--sigma/-s is required")
    if args.poly:
        if args.K is None:
            raise ConfigError("--poly needs -K")
        res = design_poly(PolyBasisSpec(args.K, args.sigma, args.m_hat, args.deriv), T)
        h = to_highpass(res.h, args.m_hat) if args.highpass else res.h
        return res, h
    if args.highpass:
        raise ConfigError("--highpass applies to polynomial designs only")
    if not args.freqs or not args.gains:
        raise ConfigError("--sin needs --freqs and --gains")
    phases = args.phases or [0.0] * len(args.freqs)
    spec = SinBasisSpec([2 * math.pi * f for f in args.freqs], args.gains,
                        [math.radians(p) for p in phases], args.sigma)
    res = design_sin(spec, T)
    return res, res.h


def _plant_from_args(args) -> RationalTF:
    if args.plant_b is not None or args.plant_a is not None:
        if args.plant_b is None or args.plant_a is None:
            raise ConfigError("--plant-b and --plant-a go together")
        return RationalTF.from_coeffs(args.plant_b, args.plant_a, args.T)
    if args.plant in ("motor", "sim4"):
        return plant_from_dict({"builtin": args.plant})
    return _tf_from_json(_load_json(args.plant))


# --- subcommands -------------------------------------------------------------------


def cmd_design(args) -> int:
    res, h = _design_from_args(args, args.T)
    if args.poly:
        hint = tuning_hint(args.m_hat, args.sigma)
        if hint:
            print(f"hint: {hint}", file=sys.stderr)
    b, a = padded(h)
    print(_fmt_row("b", b.real))
    print(_fmt_row("a", a.real))
    if args.output:
        _write_json(_tf_json(h, condition=res.condition_estimate), args.output)
    return EXIT_OK


def cmd_bode(args) -> int:
    if args.filter:
        h = _tf_from_json(_load_json(args.filter))
    elif args.b is not None:
        h = RationalTF.from_coeffs(args.b, args.a or [1.0])
    else:
        raise ConfigError("bode needs a filter JSON file or --b/--a coefficients")
    table = bode_table(h, args.points, args.spacing, args.f_min)
    _write_csv(["freq_cps", "mag_db", "mag_linear", "phase_deg"], iter_rows(table), args.output)
    if args.svg:
        from .plotting import bode_svg

        bode_svg(table, args.svg)
    return EXIT_OK


def cmd_margins(args) -> int:
    plant = _plant_from_args(args)
    T = plant.sample_period
    ge = None
    if args.filter:
        ge = _tf_from_json(_load_json(args.filter))
    elif args.poly or args.sin:
        _, ge = _design_from_args(args, T)
    if ge is not None:
        ge = RationalTF(ge.num, ge.den, T)
    if args.io_delay < 0:
        raise ConfigError("--io-delay must be non-negative")
    # built directly rather than through LoopConfig: margins do not need a
    # strictly proper plant, so a pure-gain loop is fine here
    ctrl = (ge if ge is not None else RationalTF.constant(1.0, T)) * args.ke
    if args.ki:
        integ = integrator_tf(args.ki, T or 1.0)
        ctrl = ctrl + RationalTF(integ.num, integ.den, T)
    L = ctrl * plant
    if args.io_delay:
        L = L * RationalTF.delay(2 * args.io_delay, T)
    rep = margins(L, T)
    if math.isinf(rep.gm_linear):
        print("GM  infinite (no phase crossover)")
    else:
        print(f"GM  {rep.gm_linear:.4f} ({rep.gm_db:.2f} dB) at {rep.gm_freq:.4f} cycles/sample")
    if rep.pm_deg is None:
        print("PM  infinite (no gain crossover)")
        print("DM  infinite")
    else:
        print(f"PM  {rep.pm_deg:.4f} deg at {rep.pm_freq:.4f} cycles/sample")
        secs = f" ({rep.dm_seconds:.4f} s)" if rep.dm_seconds is not None else ""
        print(f"DM  {rep.dm_samples:.4f} samples{secs} at {rep.pm_freq:.4f} cycles/sample")
    if rep.multiple_phase_crossovers or rep.multiple_gain_crossovers:
        print("note: several crossovers found; the smallest margins are reported")
    if args.output:
        d = rep.as_dict()
        if math.isinf(d["gm_linear"]):
            d["gm_linear"] = None
        _write_json(d, args.output)
    return EXIT_OK


def cmd_discretize(args) -> int:
    if args.builtin == "motor":
        g = motor_model()
    elif args.builtin == "sim4":
        g = zoh_discretize(sim_plant(), args.T or 0.05)
    else:
        if args.num is None or args.den is None or args.T is None:
            raise ConfigError("discretize needs --num, --den and -T, or --builtin")
        g = zoh_discretize(ContinuousTF.from_coeffs(args.num, args.den), args.T)
    b, a = padded(g)
    print(_fmt_row("b", b.real))
    print(_fmt_row("a", a.real))
    print("zeros = " + " ".join(f"{z:.4f}" for z in np.sort_complex(g.zeros())))
    print("poles = " + " ".join(f"{p:.4f}" for p in np.sort_complex(g.poles())))
    if args.output:
        _write_json(_tf_json(g, zeros=_pairs(g.zeros())), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    job = build_job(_load_json(args.config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = simulate(job.config, job.signals, job.length)
    dist = job.signals.disturbance
    metrics = step_metrics(trace, dist.omega if dist else None)

    trace_path = out_dir / job.outputs.get("trace", "trace.csv")
    _write_csv(["n", "t_seconds", "r", "e", "u", "c", "dq", "dr"], trace.rows(), str(trace_path))
    _write_json(metrics.as_dict(), str(out_dir / job.outputs.get("metrics", "metrics.json")))
    if "svg" in job.outputs:
        from .plotting import trace_svg

        trace_svg(trace, out_dir / job.outputs["svg"])
    for k, v in metrics.as_dict().items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .reproduce import format_table, run_all

    rows = run_all(parallel=not args.serial)
    print(format_table(rows))
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} rows passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopshape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design a lag/lead filter and print its coefficients")
    _add_design_flags(p, required=True)
    p.add_argument("-T", type=float, default=None, help="sample period in seconds")
    p.add_argument("-o", "--output", help="write coefficients as JSON ('-' for stdout)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("bode", help="tabulate a filter's frequency response")
    p.add_argument("filter", nargs="?", help="filter JSON produced by 'design'")
    p.add_argument("--b", type=float, nargs="+", help="numerator coefficients in z^-1")
    p.add_argument("--a", type=float, nargs="+", help="denominator coefficients in z^-1")
    p.add_argument("-n", "--points", type=int, default=512, help="grid size")
    p.add_argument("--spacing", choices=["linear", "log"], default="linear")
    p.add_argument("--f-min", type=float, default=1e-3, help="lowest frequency of a log grid")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.add_argument("--svg", help="also write a three-panel SVG plot")
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("margins", help="gain, phase and delay margins of a loop")
    p.add_argument("--plant", default="motor", help="'motor', 'sim4' or a plant JSON file")
    p.add_argument("--plant-b", type=float, nargs="+", help="inline plant numerator in z^-1")
    p.add_argument("--plant-a", type=float, nargs="+", help="inline plant denominator in z^-1")
    p.add_argument("-T", type=float, default=None, help="sample period for an inline plant")
    p.add_argument("--filter", help="compensator JSON produced by 'design'")
    _add_design_flags(p, required=False)
    p.add_argument("--ke", type=float, default=1.0, help="compensator gain K_e")
    p.add_argument("--ki", type=float, default=None, help="integral gain K_i")
    p.add_argument("--io-delay", type=int, default=0, help="delay (samples) on each side of the plant")
    p.add_argument("-o", "--output", help="write the report as JSON")
    p.set_defaults(func=cmd_margins)

    p = sub.add_parser("discretize", help="zero-order-hold discretization of an s-domain plant")
    p.add_argument("--num", type=float, nargs="+", help="numerator, ascending powers of s")
    p.add_argument("--den", type=float, nargs="+", help="denominator, ascending powers of s")
    p.add_argument("-T", type=float, default=None, help="sample period in seconds")
    p.add_argument("--builtin", choices=["motor", "sim4"])
    p.add_argument("-o", "--output", help="write the pulse transfer function as JSON")
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("simulate", help="run a closed-loop simulation job")
    p.add_argument("config", help="job configuration JSON")
    p.add_argument("--out-dir", default=".", help="directory for trace/metrics/plot files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="run the reference-result table")
    p.add_argument("--serial", action="store_true", help="run checks one after another")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
