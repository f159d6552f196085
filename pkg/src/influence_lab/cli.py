"""Command-line entry point: ``influence-lab <command> --config <file>``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, harness
from .config import COMMANDS, load_config
from .errors import ConfigError, InfluenceLabError, NumericFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="influence-lab", description="Influence diagnostics experiments for GLMs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="experiment config file")
    ap.add_argument("--out", help="output CSV (default: [experiment] out, else stdout)")
    ap.add_argument("--seed", type=lambda s: int(s, 0), help="master seed, overrides the config")
    ap.add_argument("--threads", type=int, help="worker threads for repetitions")
    ap.add_argument("--gnuplot", help="also write a gnuplot script for the CSV here")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be at least 1")
        cfg = cfg.with_overrides(seed=args.seed, threads=args.threads)
        table = harness.run(args.command, cfg)
        text = harness.render_csv(table)
        out = args.out or cfg.out
        if out:
            Path(out).write_bytes(text.encode("utf-8"))
        else:
            sys.stdout.buffer.write(text.encode("utf-8"))
            sys.stdout.flush()
        script = args.gnuplot or cfg.gnuplot
        if script:
            Path(script).write_text(harness.gnuplot_script(args.command, out or "-"), encoding="utf-8")
    except NumericFailure as exc:
        print(f"influence-lab: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InfluenceLabError, OSError, ValueError) as exc:
        print(f"influence-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
