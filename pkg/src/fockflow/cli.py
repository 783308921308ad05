"""Command line entry point.

Subcommands: identities, kernel-sweep, unitarity-sweep, trace-sweep,
schrodinger-check, stationary-phase.  Exit code 0 only if every gate and
threshold passes.  FOCKFLOW_OUT sets the default output directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .harness import (
    Check,
    Scenario,
    load_scenario,
    emit_csv,
    emit_svg,
    evaluate_decay_thresholds,
    evaluate_kernel_thresholds,
    evaluate_schrodinger_thresholds,
    evaluate_trace_thresholds,
    evaluate_unitarity_thresholds,
    run_decay_sweep,
    run_identity_suite,
    run_kernel_sweep,
    run_schrodinger_check,
    run_stationary_phase_suite,
    run_trace_sweep,
    run_unitarity_sweep,
)


def _out_dir(args: argparse.Namespace) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("FOCKFLOW_OUT")
    return Path(env) if env else Path("out")


def _print_checks(checks: list[Check]) -> bool:
    ok = True
    for c in checks:
        print("%-38s %s  (%s)" % (c.name, "pass" if c.passed else "FAIL", c.detail))
        ok = ok and c.passed
    return ok


def _need_scenario(args: argparse.Namespace) -> Scenario:
    if not args.scenario:
        raise SystemExit("this subcommand requires --scenario <file>")
    return load_scenario(args.scenario)


def _svg_points(records, d: int) -> list[tuple[float, float]]:
    pts = []
    for r in records:
        if r.gated or r.rel_err <= 0:
            continue
        pts.append((float(np.log10(r.k)), float(np.log10(r.rel_err))))
    return pts


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fockflow",
                                     description="Quantized-flow asymptotics test bench")
    parser.add_argument("--scenario", help="scenario file (TOML or JSON)")
    parser.add_argument("--seed", type=int, default=0, help="seed for the sampling suites")
    parser.add_argument("--out", help="output directory (default $FOCKFLOW_OUT or ./out)")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads across levels")
    parser.add_argument("--svg", action="store_true", help="also emit SVG plots")
    parser.add_argument("--samples", type=int, default=1000,
                        help="sample count for identities / stationary-phase")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("identities", "kernel-sweep", "unitarity-sweep", "trace-sweep",
                 "schrodinger-check", "stationary-phase"):
        sub.add_parser(name)
    args = parser.parse_args(argv)
    out = _out_dir(args)
    ok = True

    if args.command == "identities":
        rep = run_identity_suite(args.seed, args.samples)
        print("\n".join(rep.lines()))
        ok = rep.passed

    elif args.command == "stationary-phase":
        rep = run_stationary_phase_suite(args.seed, args.samples)
        print("\n".join(rep.lines()))
        ok = rep.passed

    elif args.command == "kernel-sweep":
        sc = _need_scenario(args)
        result = run_kernel_sweep(sc, jobs=args.jobs)
        records = list(result.records)
        checks = evaluate_kernel_thresholds(sc, result)
        if sc.decay_delta is not None:
            decay = run_decay_sweep(sc, jobs=args.jobs)
            records += decay.records
            checks += evaluate_decay_thresholds(sc, decay)
        path = emit_csv(records, out / ("%s_kernel.csv" % sc.scenario_id))
        print("wrote %s" % path)
        if args.svg:
            for tag, fit in result.fits.items():
                sel = [r for r in result.records if r.quantity == "kernel[%s]" % tag]
                pts = _svg_points(sel, sc.d)
                if pts:
                    emit_svg(pts, fit, out / ("%s_kernel_%s.svg" % (sc.scenario_id, tag)),
                             title="kernel error, offset %s" % tag)
        ok = _print_checks(checks)

    elif args.command == "unitarity-sweep":
        sc = _need_scenario(args)
        result = run_unitarity_sweep(sc, jobs=args.jobs)
        path = emit_csv(result.records, out / ("%s_unitarity.csv" % sc.scenario_id))
        print("wrote %s (top band width %d)" % (path, result.band_width))
        if args.svg:
            for mode, fit in result.fits.items():
                sel = [r for r in result.records
                       if r.quantity == "unitarity_defect[%s]" % mode]
                pts = [(float(np.log10(r.k)), float(np.log10(abs(r.model))))
                       for r in sel if abs(r.model) > 0 and not r.gated]
                if pts:
                    emit_svg(pts, fit, out / ("%s_defect_%s.svg" % (sc.scenario_id, mode)),
                             title="unitarity defect, %s" % mode,
                             ylabel="log10 defect")
        ok = _print_checks(evaluate_unitarity_thresholds(sc, result))

    elif args.command == "trace-sweep":
        sc = _need_scenario(args)
        result = run_trace_sweep(sc, jobs=args.jobs)
        path = emit_csv(result.records, out / ("%s_trace.csv" % sc.scenario_id))
        print("wrote %s" % path)
        ok = _print_checks(evaluate_trace_thresholds(sc, result))

    elif args.command == "schrodinger-check":
        sc = _need_scenario(args)
        result = run_schrodinger_check(sc, jobs=args.jobs)
        path = emit_csv(result.records, out / ("%s_schrodinger.csv" % sc.scenario_id))
        print("wrote %s" % path)
        ok = _print_checks(evaluate_schrodinger_thresholds(sc, result))

    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
