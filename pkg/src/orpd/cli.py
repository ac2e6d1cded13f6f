"""Command line: ``orpd solve`` for one case, ``orpd bench`` for a config-driven batch."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .pipeline import KIND_ORDER, RunConfig, emit_report, run_pipeline


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orpd", description="Conic relaxations and round-off for ORPD.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one case")
    s.add_argument("--case", required=True, help="MATPOWER file or bundled case name")
    s.add_argument("--kind", default="all", choices=[*KIND_ORDER, "all"])
    s.add_argument("--objective", default="cost", choices=["cost", "loss", "both"])
    s.add_argument("--chordal", action="store_true", help="clique-decompose V in SDR kinds")
    s.add_argument("--tol", type=float, default=1e-8, help="conic solver tolerance")
    s.add_argument("--time-limit", type=float, default=600.0, help="per-cell limit in seconds")
    s.add_argument("--out", help="output file (default: stdout)")
    s.add_argument("--format", default="json", choices=["json", "csv", "md"])

    b = sub.add_parser("bench", help="run a batch described by a YAML or JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="overrides the config's output path")
    b.add_argument("--format", choices=["json", "csv", "md"], help="overrides the config's format")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "solve":
            cfg = RunConfig(cases=[args.case], kinds=[args.kind], objectives=[args.objective],
                            chordal=args.chordal, tolerance=args.tol, time_limit=args.time_limit,
                            output=args.out, format=args.format).validate()
        else:
            cfg = RunConfig.from_file(args.config)
            if args.out:
                cfg.output = args.out
            if args.format:
                cfg.format = args.format
        report = run_pipeline(cfg)
        text = emit_report(report, cfg.format, cfg.output)
    except ConfigError as exc:
        print(f"orpd: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"orpd: cannot write report: {exc}", file=sys.stderr)
        return 2
    if cfg.output is None:
        sys.stdout.write(text)
    failed = sum(c.failed for c in report.cells)
    print(f"orpd: {len(report.cells)} cells, {failed} failed", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
