"""Command-line entry point.

    datorus <command> [--config FILE] [--set key=value ...] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 a verification failed,
4 internal error.
"""
from __future__ import annotations

import argparse
import sys
import traceback

from .anosov import SpectrumError
from .config import ConfigError, RunConfig, load_config
from .runner import SECTIONS, run
from .surgery import SurgeryError

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_INTERNAL = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="datorus", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"build-verify": "build the modified map and check P1-P7",
             "chain": "box transition graphs, SCCs and quasi-attractor candidates",
             "semiconj": "semiconjugacy residual, collapse witness, class localization",
             "ergodic": "Lyapunov, cs-exponents, SRB, basin and entropy diagnostics",
             "full": "all of the above with a summary verdict table"}
    for name in SECTIONS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one configuration key")
        sp.add_argument("--out", help="output directory (default: config key 'output')")
        sp.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        sp.add_argument("--workers", type=int, help="worker threads (0: all cores)")
        sp.add_argument("--depths", help="shorthand for --set chain_depths=...")
        sp.add_argument("--no-surgery", action="store_true", help="run on the linear map")
        sp.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")
        sp.add_argument("-q", "--quiet", action="store_true")
    return p


def _overrides(args) -> list[str]:
    items = list(args.overrides)
    if args.seed is not None:
        items.append(f"seed={args.seed}")
    if args.workers is not None:
        items.append(f"workers={args.workers}")
    if args.depths:
        items.append(f"chain_depths={args.depths}")
    if args.no_surgery:
        items.append("surgery=false")
    if args.out:
        items.append(f"output={args.out}")
    return items


def print_summary(report: dict, stream=None) -> None:
    stream = stream or sys.stdout
    rows = report["verdicts"]
    width = max((len(r["id"]) for r in rows), default=4)
    for r in rows:
        print(f"{r['verdict']:<9} {r['id']:<{width}}  {r['claim']}", file=stream)
    s = report["summary"]
    print(" ".join(f"{k}={v}" for k, v in s.items()), file=stream)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.dump_config:
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
        report = run(args.command, cfg)
    except (ConfigError, SpectrumError, SurgeryError) as exc:
        print(f"configuration error [{type(exc).__module__.split('.')[-1]}]: {exc}",
              file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if not args.quiet:
        print_summary(report)
    return EXIT_FAIL if report["summary"]["FAIL"] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
