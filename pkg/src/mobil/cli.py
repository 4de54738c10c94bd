"""`mobil-bench` command line: run / sweep / fit / verify.

Exit codes: 0 success, 1 usage or config error, 2 verification failure.
Output directory comes from --out-dir or the MOBIL_BENCH_OUT env var
(default ./runs); everything else is controlled by the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, parse_config_text
from .experiment import default_out_dir, fit_rate, run_experiment, sweep, write_svg
from .verify import SUITES, run_suite

USAGE_ERROR, VERIFY_FAILURE = 1, 2


def _load_config(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path!r}: {exc}"]) from exc
    return parse_config_text(text)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    csv_path = run_experiment(cfg, args.out_dir)
    print(csv_path)
    if args.svg:
        svg = write_svg(csv_path, args.svg_columns.split(","), csv_path.with_suffix(".svg"))
        print(svg)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if "=" not in args.vary:
        raise ConfigError([f"--vary expects key=v1,v2,..., got {args.vary!r}"])
    key, raw_values = args.vary.split("=", 1)
    values = [v for v in raw_values.split(",") if v]
    if not values:
        raise ConfigError([f"--vary {key}: empty value list"])
    paths = sweep(cfg, key.strip(), values, args.out_dir, workers=args.workers)
    for p in paths:
        print(p)
    return 0


def cmd_fit(args) -> int:
    try:
        fit = fit_rate(args.csv, args.column, args.nmin, args.nmax)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    print(json.dumps({
        "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
        "n_min": fit.n_min, "n_max": fit.n_max, "n_points": fit.n_points,
    }))
    return 0


def cmd_verify(args) -> int:
    report = run_suite(args.suite)
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    return 0 if report.passed else VERIFY_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobil-bench",
                                     description="Model-based online IL benchmark harness")
    parser.add_argument("--out-dir", default=None,
                        help=f"output directory (default $MOBIL_BENCH_OUT or {default_out_dir()})")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--svg", action="store_true", help="also write an SVG line chart")
    p_run.add_argument("--svg-columns", default="loss,avg_weighted_regret")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="fan a config template across values of one key")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--vary", required=True, metavar="key=v1,v2,...")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_fit = sub.add_parser("fit", help="log-log rate fit of a trace column")
    p_fit.add_argument("csv")
    p_fit.add_argument("--column", required=True)
    p_fit.add_argument("--nmin", type=int, default=1)
    p_fit.add_argument("--nmax", type=int, default=10**9)
    p_fit.set_defaults(fn=cmd_fit)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite", choices=sorted(SUITES))
    p_verify.add_argument("--json", default=None, help="also write a JSON report here")
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
