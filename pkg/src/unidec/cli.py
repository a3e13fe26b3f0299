"""Command-line entry point: ``unidec run|sweep|verify``.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical degeneracy. ``UNIDEC_SEED`` and ``UNIDEC_THREADS`` override the
config file; explicit flags override both.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, NumericalDegeneracy
from .harness import ExperimentConfig, exponent_sweep, load_config, resolve_threads, run_experiment
from .results import emit_gap_table, emit_results, results_csv, results_json

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DEGENERATE = 0, 1, 2, 3

log = logging.getLogger("unidec")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unidec", description="Universal vs ML decoding on Gaussian ISI channels.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", type=Path, required=needs_config, help="YAML experiment config")
        sp.add_argument("--seed", type=_u64, help="root seed (overrides UNIDEC_SEED and the config)")
        sp.add_argument("--out", type=Path, help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--trials", type=_positive)
        sp.add_argument("--threads", type=_positive, help="worker processes (overrides UNIDEC_THREADS)")

    common(sub.add_parser("run", help="single experiment at the config's n"))
    sw = sub.add_parser("sweep", help="experiment over n_list and delta_list")
    common(sw)
    sw.add_argument("--gap-out", type=Path, help="where to write the exponent-gap table")
    ver = sub.add_parser("verify", help="run the property self-checks")
    ver.add_argument("--seed", type=_u64)
    return p


def _seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("UNIDEC_SEED")
    if env is None:
        return None
    try:
        return _u64(env)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"UNIDEC_SEED must be an unsigned 64-bit integer, got {env!r}") from exc


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    seed = _seed(args)
    if seed is not None:
        changes["root_seed"] = seed
    if args.trials is not None:
        changes["trials"] = args.trials
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _emit(result, args) -> None:
    if args.out is None:
        sys.stdout.write(results_csv(result) if args.format == "csv" else results_json(result))
    else:
        emit_results(result, args.format, args.out)


def _cmd_run(args) -> int:
    cfg = _config(args)
    if cfg.n_list:
        cfg = dataclasses.replace(cfg, n_list=(), snr_db_list=())
    _emit(run_experiment(cfg, resolve_threads(args.threads)), args)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _config(args)
    threads = resolve_threads(args.threads)
    if len(cfg.n_list) >= 2:
        result, gaps = exponent_sweep(cfg, threads)
        gap_path = args.gap_out
        if gap_path is None and args.out is not None:
            gap_path = args.out.with_name(args.out.stem + "_gap.csv")
        if gap_path is not None:
            emit_gap_table(gaps, gap_path)
        for g in gaps:
            log.info("n=%d gap=%.4g [%.4g, %.4g]%s", g.n, g.gap, g.gap_lo, g.gap_hi, " (one-sided)" if g.one_sided else "")
    else:
        result = run_experiment(cfg, threads)
    _emit(result, args)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_checks

    seed = _seed(args)
    checks = run_checks(0 if seed is None else seed)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDegeneracy as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
