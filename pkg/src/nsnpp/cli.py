"""Command line entry point.

Exit codes: 0 success, 1 invariant failure (or failed verification),
2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import mms
from .config import ConfigError, load_config
from .driver import convergence, parse_sweep, run
from .schemes import StepFailure

logger = logging.getLogger("nsnpp")

MMS_TOL = 1e-6


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsnpp", description="Spectral SAV solver for the NSNPP system.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="override output_dir from the config")
    common.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one simulation")
    p.add_argument("config")

    p = sub.add_parser("convergence", parents=[common], help="sweep dt or N on a manufactured case")
    p.add_argument("config")
    p.add_argument("--sweep", required=True, help="dt=1e-1,1e-2,... or N=8,16,...")

    p = sub.add_parser("verify-mms", parents=[common], help="check a manufactured case's source terms")
    p.add_argument("case", choices=["example1", "example3"])
    p.add_argument("--time", type=float, default=0.5)
    p.add_argument("--N", type=int, default=128)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run(cfg, output_dir=args.output_dir, progress=not args.quiet)
    if res.failure is not None:
        print(f"FAILED: {res.failure}", file=sys.stderr)
        return 1
    s = res.state
    logger.info("finished %d steps to t=%.6g in %.2fs", s.step, s.t, res.wall_time)
    return 0


def _cmd_convergence(args) -> int:
    cfg = load_config(args.config)
    name, values = parse_sweep(args.sweep)
    try:
        table, _ = convergence(cfg, name, values, output_dir=args.output_dir)
    except StepFailure as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return 1
    rates = table.rates()
    for k, v in enumerate(table.values):
        cells = [f"{n}={table.errors[n][k]:.5e}" for n in table.errors]
        if k:
            cells += [f"rate_{n}={rates[n][k - 1]:.3f}" for n in table.errors]
        if not args.quiet:
            print(f"{name}={v}  " + "  ".join(cells))
    return 0


def _cmd_verify(args) -> int:
    from . import spectral as sp

    res = mms.residual_oracle(args.case, args.time, sp.lgl_rule(args.N))
    worst = max(res.values())
    if not args.quiet:
        print(json.dumps(res, indent=2))
    status = "ok" if worst <= MMS_TOL else "FAILED"
    print(f"{args.case}: max residual {worst:.3e} (tolerance {MMS_TOL:g}) {status}")
    return 0 if worst <= MMS_TOL else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "convergence": _cmd_convergence, "verify-mms": _cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
