"""Command-line entry point.

Exit codes: 0 success, 1 a step-size table row fell below its bound,
2 configuration error, 3 descent violated, 4 divergence detected,
5 a concurrent worker failed.
"""
from __future__ import annotations

import argparse
import sys
import time

from .engine import run
from .errors import ARockError, ConfigError, DescentViolated, DivergenceDetected, WorkerPanic
from .harness import ExperimentConfig, build_run, emit_trace, table2_report

EXIT_OK, EXIT_TABLE, EXIT_CONFIG, EXIT_DESCENT, EXIT_DIVERGED, EXIT_WORKER = 0, 1, 2, 3, 4, 5


def _parser():
    p = argparse.ArgumentParser(prog="arock", description="Asynchronous block-coordinate fixed-point runs.")
    p.add_argument("--config", help="key = value experiment file")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--mode", choices=("sim", "concurrent"), help="override run.mode")
    p.add_argument("--out", help="trace CSV path (overrides out.trace_path)")
    p.add_argument("--check-descent", action="store_true", help="verify expected Lyapunov descent every step")
    p.add_argument("--table2", action="store_true", help="print the step-size table and exit")
    p.add_argument("--m", type=int, default=100, help="number of blocks for --table2 (default 100)")
    return p


def cli_run(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.table2:
        text, rows = table2_report(args.m)
        print(text)
        bad = [r for r in rows if not r.holds]
        for r in bad:
            print(f"bound violated: {r.distribution} {r.parameter:g}: h={r.h:.12g} < {r.bound:.12g}",
                  file=sys.stderr)
        return EXIT_TABLE if bad else EXIT_OK
    if not args.config:
        print("error: --config is required unless --table2 is given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(
            **{"run.seed": args.seed, "run.mode": args.mode, "out.trace_path": args.out})
        if args.check_descent and cfg.get("run.mode") == "concurrent":
            raise ConfigError("--check-descent: only available in sim mode")
        rc = build_run(cfg, check_descent=args.check_descent)
        out = cfg.get("out.trace_path")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        trace = run(rc)
    except DescentViolated as exc:
        print(f"descent violated: {exc}", file=sys.stderr)
        return EXIT_DESCENT
    except DivergenceDetected as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        if exc.trace is not None and out:
            emit_trace(exc.trace, out, wall_time=rc.mode == "concurrent")
        return EXIT_DIVERGED
    except WorkerPanic as exc:
        print(f"worker failure: {exc}", file=sys.stderr)
        return EXIT_WORKER
    except ARockError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out:
        try:
            emit_trace(trace, out, wall_time=rc.mode == "concurrent")
        except OSError as exc:
            print(f"cannot write trace {out}: {exc.strerror}", file=sys.stderr)
            return EXIT_CONFIG
    print(f"updates={trace.updates} final_fpr={trace.final_fpr:.3e} "
          f"wall_time={time.perf_counter() - t0:.3f}s", file=sys.stderr)
    return EXIT_OK


def main():
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
