"""Command-line experiment runner.

Subcommands: simulate, estimate, control, sweep, calibrate, bench.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import backend
from .control import ANGLE_GAINS, TORQUE_GAINS
from .errors import NumericalError, PamTwinError, ValidationError
from .harness import (
    Scenario,
    bench,
    compare_offline,
    estimation_metrics,
    generate_profile,
    run,
    sweep,
    sweep_report_to_csv,
)
from .params import PamParams, apply_overrides, load_config
from .pneumatics import OpenRateMap, calibrate_open_rate_map


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value parameter file")
    p.add_argument("--out", help="output path (trace CSV / report)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=130.0, help="run length (s)")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="param=value",
        help="parameter override, repeatable",
    )


def _params(args) -> PamParams:
    params = load_config(args.config) if args.config else PamParams()
    if args.overrides:
        params = apply_overrides(params, args.overrides)
    return params


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pamtwin",
        description="Antagonistic pneumatic-muscle joint twin: simulation, "
        "pressure-only estimation, sensor-less control.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="open-loop plant simulation")
    _add_common(p)
    p.add_argument("--mode", choices=["free", "locked"], default="free")
    p.add_argument("--profile", choices=["angle", "torque", "constant"], default="angle")

    p = sub.add_parser("estimate", help="simulate and run the pressure-only filter")
    _add_common(p)
    p.add_argument(
        "--mode",
        choices=["angle", "torque"],
        default="angle",
        help="angle: free joint; torque: joint clamped at 0 deg",
    )
    p.add_argument("--timing", action="store_true", help="record per-step wall-clock cost")
    p.add_argument("--metrics", help="also write estimation metrics to this path")
    p.add_argument(
        "--compare",
        action="store_true",
        help="also report the input-driven model-alone replay",
    )

    p = sub.add_parser("control", help="closed-loop sensor-less tracking")
    _add_common(p)
    p.add_argument("--mode", choices=["angle", "torque"], default="angle")
    p.add_argument(
        "--reference",
        help="piecewise-constant reference 't:value;t:value;...' "
        "(deg for angle, N*m for torque); default: a step sequence",
    )
    p.add_argument("--metrics", help="also write tracking metrics to this path")

    p = sub.add_parser("sweep", help="steady-state/rise-time parameter sweep")
    _add_common(p)
    p.add_argument("--param", required=True, help="Tp_coeff|mu_s|A_scale|k1|k2")
    p.add_argument("--values", required=True, help="comma-separated positive values")

    p = sub.add_parser("calibrate", help="fit an open-rate map from steady pressures")
    _add_common(p)
    p.add_argument(
        "--data",
        required=True,
        help="two-column file: voltage and measured steady pressure (Pa)",
    )
    p.add_argument("--grid", type=int, default=201, help="open-rate sweep grid size")

    p = sub.add_parser("bench", help="per-step estimator timing per backend")
    _add_common(p)
    p.add_argument(
        "--backend",
        choices=["auto", "python", "cython", "both"],
        default="both",
    )
    return ap


_DEFAULT_REFS = {
    "angle": [(0.0, 0.0), (5.0, 15.0), (25.0, 5.0), (45.0, 20.0), (65.0, 0.0)],
    "torque": [(0.0, 0.0), (5.0, 1.5), (20.0, -1.5), (35.0, 2.0), (50.0, 0.0)],
}


def _parse_reference(text: str) -> list:
    try:
        return [
            (float(t), float(v))
            for t, v in (item.split(":") for item in text.split(";") if item)
        ]
    except ValueError as exc:
        raise ValidationError(f"bad reference spec: {exc}") from exc


def _cmd_simulate(args) -> int:
    params = _params(args)
    scenario = generate_profile(
        kind=args.profile, duration=args.duration, seed=args.seed, params=params
    )
    scenario.mode = "open_loop"
    scenario.locked = scenario.locked or args.mode == "locked"
    trace, _ = run(scenario)
    if args.out:
        trace.to_csv(args.out)
        print(f"trace: {args.out} ({len(trace)} rows)")
    return 0


def _cmd_estimate(args) -> int:
    params = _params(args)
    scenario = generate_profile(
        kind=args.mode, duration=args.duration, seed=args.seed, params=params
    )
    scenario.mode = "estimate_online" if args.timing else "estimate_offline"
    scenario.collect_timing = args.timing
    trace, extras = run(scenario)
    metrics = extras["metrics"]
    text = metrics.to_text()
    print(text, end="")
    print(f"rejected_measurements = {extras['rejected']}")
    if args.compare:
        m_model, m_filter = compare_offline(trace, params, locked=scenario.locked)
        print("# model-alone replay")
        print(m_model.to_text(), end="")
    if args.out:
        trace.to_csv(args.out)
        print(f"trace: {args.out} ({len(trace)} rows)")
    if args.metrics:
        with open(args.metrics, "w") as fh:
            fh.write(text)
    return 0


def _cmd_control(args) -> int:
    params = _params(args)
    reference = (
        _parse_reference(args.reference) if args.reference else _DEFAULT_REFS[args.mode]
    )
    scenario = Scenario(
        mode=f"control_{args.mode}",
        duration=max(t for t, _ in reference),
        seed=args.seed,
        params=params,
        reference=reference,
    )
    trace, extras = run(scenario)
    refs = extras["reference"]
    import numpy as np

    truth = np.degrees(trace["psi"]) if args.mode == "angle" else trace["tau"]
    from .trace import Metrics

    m = Metrics()
    m.add("tracking", refs - truth, refs)
    text = m.to_text()
    print(text, end="")
    if args.out:
        trace.to_csv(args.out)
        print(f"trace: {args.out} ({len(trace)} rows)")
    if args.metrics:
        with open(args.metrics, "w") as fh:
            fh.write(text)
    return 0


def _cmd_sweep(args) -> int:
    params = _params(args)
    try:
        values = [float(v) for v in args.values.split(",") if v]
    except ValueError as exc:
        raise ValidationError(f"bad --values: {exc}") from exc
    report = sweep(args.param, values, params)
    for row in report["rows"]:
        print(
            f"{args.param}={row['value']:g}: psi_bar={row['psi_bar']:.6f} rad, "
            f"P_bar=({row['P1_bar']:.0f}, {row['P2_bar']:.0f}) Pa, "
            f"t90={row['rise_time_90']:.3f} s"
        )
    for key in ("steady_angle_nonincreasing", "rise_time_decreasing"):
        if key in report:
            print(f"{key} = {report[key]}")
    if args.out:
        sweep_report_to_csv(report, args.out)
        print(f"report: {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    params = _params(args)
    data = []
    with open(args.data) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            cols = body.split()
            if len(cols) != 2:
                raise ValidationError(f"{args.data}:{lineno}: expected 'voltage pressure'")
            data.append((float(cols[0]), float(cols[1])))
    table = calibrate_open_rate_map(data, params, grid=args.grid)
    for u, a in table.breakpoints:
        print(f"{u:.4f} -> {a:.6f}")
    if args.out:
        table.to_file(args.out)
        print(f"map: {args.out}")
    return 0


def _cmd_bench(args) -> int:
    params = _params(args)
    scenario = generate_profile(
        kind="angle", duration=args.duration, seed=args.seed, params=params
    )
    names = backend.available() if args.backend == "both" else (
        (backend.active(),) if args.backend == "auto" else (args.backend,)
    )
    report = bench(scenario, backends=names)
    print(json.dumps(report, indent=2))
    for name, stats in report["backends"].items():
        verdict = "within" if stats["within_budget"] else "OVER"
        print(
            f"{name}: mean {stats['mean_s'] * 1e3:.3f} ms, p99 {stats['p99_s'] * 1e3:.3f} ms "
            f"({verdict} {report['budget_s'] * 1e3:.1f} ms budget)"
        )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "control": _cmd_control,
    "sweep": _cmd_sweep,
    "calibrate": _cmd_calibrate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except PamTwinError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
