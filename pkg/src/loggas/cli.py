"""Command line entry point.

    loggas sample|dbm|parabolic|stats|verify --config FILE [--seed U64] [--workers N] [--assert]
    loggas replay MANIFEST
    loggas schema

Exit status: 0 on success, 1 when ``--assert`` is given and the run's
acceptance check fails, 2 for configuration errors, 3 when work units
failed (partial results written), 4 when a replay diverges.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import KINDS, OUTPUT_ENV, ExperimentConfig, describe_schema
from .errors import ConfigError, PartialResultsError, ReproducibilityError
from .rng import check_seed
from .runner import replay, run_experiment


def _u64(text: str) -> int:
    try:
        return check_seed(int(text, 0))
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loggas", description="Log-gas experiments.",
                                 epilog=f"Default output root: ${OUTPUT_ENV} (else ./loggas-runs).")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", required=True, help="key-value config file")
        sp.add_argument("--seed", type=_u64, help="override the master seed")
        sp.add_argument("--workers", type=int, help="override the worker count")
        sp.add_argument("--output", help="override the output directory")
        sp.add_argument("--assert", dest="check", action="store_true",
                        help="exit with status 1 unless the acceptance check passes")
    rp = sub.add_parser("replay", help="rerun a manifest and verify checksums")
    rp.add_argument("manifest")
    rp.add_argument("--output", help="directory for the rerun (default: temporary)")
    sub.add_parser("schema", help="list every config key")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "schema":
        print(describe_schema())
        return 0
    try:
        if args.command == "replay":
            rec = replay(args.manifest, args.output)
            print(f"replay matches: {len(rec.files)} files in {rec.directory}")
            return 0
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"config is for {cfg.kind!r}, command is {args.command!r}", "kind")
        kw = {}
        if args.seed is not None:
            kw["seed"] = args.seed
        if args.workers is not None:
            kw["workers"] = args.workers
        if args.output is not None:
            kw["output"] = args.output
        rec = run_experiment(cfg.replace(**kw) if kw else cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PartialResultsError as exc:
        print(f"partial results: {exc}; salvaged units {exc.salvaged}", file=sys.stderr)
        return 3
    except ReproducibilityError as exc:
        print(f"replay mismatch: {exc}: {', '.join(exc.divergent)}", file=sys.stderr)
        return 4
    print(json.dumps({"directory": str(rec.directory), "files": len(rec.files),
                      "satisfied": rec.satisfied}, sort_keys=True))
    if args.check and not rec.satisfied:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
