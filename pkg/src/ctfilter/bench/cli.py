"""Command line entry point: ``ctfilter {gain-eval,gain-bench,filter-run} --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..catalog import get_model
from ..errors import ConfigError
from . import runner
from .config import load_config

log = logging.getLogger("ctfilter")


def _common(parser):
    parser.add_argument("--config", required=True, help="YAML/JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the master seed (unsigned 64-bit)")
    parser.add_argument("--out", help="output CSV path (overrides config 'out')")
    parser.add_argument("--dump-coupling", action="store_true",
                        help="write each optimal-coupling plan as i,j,t_ij CSV next to the output")
    parser.add_argument("--workers", type=int, help="override the worker pool size")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="ctfilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gain-eval", "per-particle gains for one ensemble"),
        ("gain-bench", "Monte Carlo gain error table"),
        ("filter-run", "twin experiment time series"),
    ):
        _common(sub.add_parser(name, help=help_text))
    return parser


def _load(args):
    cfg = load_config(args.config)
    if cfg.kind != args.command:
        raise ConfigError(f"config kind {cfg.kind!r} does not match command {args.command!r}")
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    cfg = cfg.replace(**changes)
    if cfg.out is None:
        cfg = cfg.replace(out=f"{args.command}.csv")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"ctfilter: {exc}", file=sys.stderr)
        return 2

    out = Path(cfg.out)
    stem = str(out.with_suffix(""))
    if cfg.kind == "gain-eval":
        rows = runner.run_gain_eval(cfg, dump_coupling=stem if args.dump_coupling else None)
        runner.write_csv(out, runner.GAIN_EVAL_HEADER, rows)
    elif cfg.kind == "gain-bench":
        records = runner.run_gain_benchmark(cfg)
        runner.write_csv(out, runner.ERROR_HEADER, runner.error_rows(records))
        failed = sum(r.status != "ok" for r in records)
        if failed:
            log.warning("%d of %d cells failed; see the status column", failed, len(records))
    else:
        series, summary = runner.run_filter_experiment(cfg)
        d = get_model(cfg.model).model.dim_state
        runner.write_csv(out, runner.series_header(d), series)
        runner.write_csv(f"{stem}_summary.csv", runner.SUMMARY_HEADER, summary)
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
