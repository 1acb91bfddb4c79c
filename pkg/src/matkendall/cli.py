"""Command-line entry point: ``matkendall {simulate,estimate,rank,rolling,bench}``.

Options may also come from ``--config FILE`` holding ``key = value`` lines
(keys are long option names, ``#`` starts a comment). Command-line flags win
over the file, which wins over built-in defaults. Every report starts with
the effective configuration as ``#`` comment lines.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numerical or degeneracy error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path
from typing import Sequence

from . import harness, mrts
from .errors import MatKendallError, ParameterError
from .tensor_io import FORMATS, MatrixSeries, load_series, save_series, write_table

log = logging.getLogger("matkendall")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# options that change how a run executes but never its results
_NOT_ECHOED = {"command", "config", "out", "threads", "verbose", "handler"}


class ConfigError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise ConfigError(message)


def _csv_list(text: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in _csv_list(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matkendall", description="Robust matrix factor models via matrix Kendall's tau.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0, help="master RNG seed (u64)")
    common.add_argument("--threads", type=_positive, default=1)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--config", type=Path, help="key = value option file")
    common.add_argument("-v", "--verbose", action="store_true")

    ranks = _Parser(add_help=False)
    ranks.add_argument("--kmax", type=_positive, default=mrts.DEFAULT_KMAX)
    ranks.add_argument("--ridge-c", dest="ridge_c", type=float, default=0.0)
    ranks.add_argument("--epsilon", type=float, default=mrts.DEFAULT_EPSILON)

    data = _Parser(add_help=False)
    data.add_argument("--input", type=Path, required=True)
    data.add_argument("--format", choices=FORMATS, default="long-csv")

    p = sub.add_parser("simulate", parents=[common, ranks], help="Monte-Carlo replications of a scenario")
    p.add_argument("--scenario", choices=("A", "B"), default="A")
    p.add_argument("--dist", default="normal", help="normal, t1, t2, t3, ...")
    p.add_argument("--T", type=_positive, default=50)
    p.add_argument("--p1", type=_positive, default=50)
    p.add_argument("--p2", type=_positive, default=50)
    p.add_argument("--k1", type=_positive, default=3)
    p.add_argument("--k2", type=_positive, default=3)
    p.add_argument("--reps", type=_positive, default=100)
    p.add_argument("--methods", type=_csv_list, default=("mrts", "apca"))
    p.add_argument("--fixed-loadings", dest="fixed_loadings", action="store_true",
                   help="draw R and C once for all replications")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common, ranks, data], help="fit one dataset")
    p.add_argument("--method", choices=mrts.METHODS, default="mrts")
    p.add_argument("--k1", type=_positive)
    p.add_argument("--k2", type=_positive)
    p.add_argument("--auto-rank", dest="auto_rank", action="store_true", help="select ranks by MKER")
    p.add_argument("--out-format", dest="out_format", choices=FORMATS, default="long-csv")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("rank", parents=[common, ranks, data], help="eigenvalue-ratio rank selection")
    p.add_argument("--methods", type=_csv_list, default=("mker", "apca"))
    p.set_defaults(handler=cmd_rank)

    p = sub.add_parser("rolling", parents=[common, data], help="rolling-window validation")
    p.add_argument("--window", type=_positive, required=True, help="training observations per window")
    p.add_argument("--block", type=_positive, default=12, help="test observations per window")
    p.add_argument("--k1", type=_positive, required=True)
    p.add_argument("--k2", type=_positive, required=True)
    p.add_argument("--method", choices=mrts.METHODS, default="mrts")
    p.set_defaults(handler=cmd_rolling)

    p = sub.add_parser("bench", parents=[common], help="time Kendall and MRTS over a grid")
    p.add_argument("--T-grid", dest="T_grid", type=_int_list, default=(100, 200))
    p.add_argument("--p-grid", dest="p_grid", type=_int_list, default=(20,))
    p.add_argument("--repeats", type=_positive, default=3)
    p.set_defaults(handler=cmd_bench)
    return parser


def read_config_file(path: Path) -> list[str]:
    """Turn ``key = value`` lines into option tokens (``--key value``)."""
    tokens: list[str] = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [flag, *shlex.split(value)]
    return tokens


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    pre = _Parser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv[1:])
    if known.config is not None and argv:
        argv = argv[:1] + read_config_file(known.config) + argv[1:]
    return parser.parse_args(argv)


def effective_config(args: argparse.Namespace) -> list[str]:
    lines = [f"matkendall {args.command}"]
    for key in sorted(vars(args)):
        if key in _NOT_ECHOED:
            continue
        value = getattr(args, key)
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, Path):
            value = value.as_posix()
        lines.append(f"{key} = {value}")
    return lines


def _prepare_out(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"--out {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_input(args: argparse.Namespace) -> None:
    if not args.input.is_file():
        raise FileNotFoundError(f"input file not found: {args.input}")


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = harness.SimulationConfig(
        scenario=args.scenario, dist=args.dist, T=args.T, p1=args.p1, p2=args.p2, k1=args.k1, k2=args.k2,
        reps=args.reps, methods=tuple(args.methods), kmax=args.kmax, ridge_c=args.ridge_c,
        epsilon=args.epsilon, fixed_loadings=args.fixed_loadings, seed=args.seed,
    )
    out = _prepare_out(args)
    rows = harness.run_simulation(cfg, threads=args.threads)
    header = effective_config(args)
    write_table(rows, out / "replications.csv", comments=header)
    write_table(harness.aggregate(rows, cfg.k1, cfg.k2), out / "aggregate.csv", comments=header)
    log.info("wrote %d replication rows to %s", len(rows), out)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    _check_input(args)
    if not args.auto_rank and (args.k1 is None or args.k2 is None):
        raise ConfigError("give both --k1 and --k2, or --auto-rank")
    series = load_series(args.input, args.format)
    k1 = None if args.auto_rank else args.k1
    k2 = None if args.auto_rank else args.k2
    result = harness.estimate(series, method=args.method, k1=k1, k2=k2, kmax=args.kmax, c=args.ridge_c,
                              epsilon=args.epsilon, threads=args.threads)
    fit = result.fit
    meta = dict(result.metadata, input=args.input.as_posix(), config=effective_config(args))
    # everything is computed before the first file is written
    out = _prepare_out(args)
    ext = "csv" if args.out_format == "long-csv" else "mkt"
    save_series(MatrixSeries(fit.loadings.R_hat), out / f"R_hat.{ext}", args.out_format)
    save_series(MatrixSeries(fit.loadings.C_hat), out / f"C_hat.{ext}", args.out_format)
    save_series(MatrixSeries(fit.factors), out / f"factors.{ext}", args.out_format)
    save_series(fit.common, out / f"common.{ext}", args.out_format)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    _check_input(args)
    series = load_series(args.input, args.format)
    rows = harness.rank_table(series, methods=args.methods, kmax=args.kmax, c=args.ridge_c,
                              epsilon=args.epsilon, threads=args.threads)
    out = _prepare_out(args)
    write_table(rows, out / "rank.csv", comments=effective_config(args))
    return EXIT_OK


def cmd_rolling(args: argparse.Namespace) -> int:
    _check_input(args)
    series = load_series(args.input, args.format)
    report = harness.rolling(series, window=args.window, block=args.block, k1=args.k1, k2=args.k2,
                             method=args.method, threads=args.threads)
    out = _prepare_out(args)
    write_table(harness.rolling_rows(report), out / "rolling.csv", comments=effective_config(args))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rows = harness.bench(args.T_grid, args.p_grid, repeats=args.repeats, seed=args.seed)
    out = _prepare_out(args)
    write_table(rows, out / "bench.csv", comments=effective_config(args))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"matkendall: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except MatKendallError as exc:
        print(f"matkendall {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC) else EXIT_NUMERIC
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"matkendall {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
