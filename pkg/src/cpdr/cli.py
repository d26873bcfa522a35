"""Command-line driver: ``cpdr {spd-bench,ising-mse,bounds,mitigate-csv}``.

Exit codes: 0 success, 2 invalid configuration or input, 3 a checked bound or
tolerance failed (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .mitigation.io import SchemaError, write_fit_json

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 2, 3

log = logging.getLogger("cpdr")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpdr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spd-bench": "SPD accuracy and cost against the statevector oracle",
        "ising-mse": "mitigation protocol comparison on the Ising benchmark",
        "bounds": "empirical truncation errors versus the analytic bounds",
        "mitigate-csv": "fit and apply CPDR to an external feature table",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path, help="JSON config file (defaults are used when omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
        p.add_argument("--jobs", type=int, help="worker processes (overrides the config)")
    return parser


def _write_rows(out: Path, name: str, rows, columns) -> Path:
    path = out / name
    ex.write_csv(path, rows, columns)
    return path


def _emit(command: str, payload, out: Path) -> list[Path]:
    """Write whatever a runner produced (possibly partial, on a violation)."""
    if command == "spd-bench":
        return [_write_rows(out, "spd_bench.csv", payload, ex.SPD_BENCH_COLUMNS)]
    if command == "bounds":
        return [_write_rows(out, "bounds.csv", payload, ex.BOUNDS_COLUMNS)]
    if command == "ising-mse":
        written = [
            _write_rows(out, "ising_mse.csv", payload.rows, ex.ISING_COLUMNS),
            _write_rows(out, "ising_mse_summary.csv", payload.summary, ex.ISING_SUMMARY_COLUMNS),
        ]
        for name, fit in sorted(payload.fits.items()):
            path = out / f"fit_{name}.json"
            write_fit_json(path, fit, name, list(fit.labels))
            written.append(path)
        return written
    path = out / "mitigate_report.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return [path]


RUNNERS = {
    "spd-bench": ex.run_spd_bench,
    "ising-mse": ex.run_ising_mse,
    "bounds": ex.run_bounds,
    "mitigate-csv": ex.run_mitigate_csv,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = ex.ExperimentConfig.load(args.command, args.config, args.seed, args.jobs)
        args.out.mkdir(parents=True, exist_ok=True)
        payload = RUNNERS[args.command](cfg)
    except ex.BoundViolation as exc:
        message, partial = exc.args
        for path in _emit(args.command, partial, args.out):
            log.info("wrote %s", path)
        print(f"cpdr {args.command}: check failed: {message}", file=sys.stderr)
        return EXIT_VIOLATION
    except (ex.ConfigError, SchemaError, ValueError, OSError) as exc:
        print(f"cpdr {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in _emit(args.command, payload, args.out):
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
