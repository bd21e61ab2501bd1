"""Command-line entry point: ``graphdau <command> --config CONFIG.json``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .data import DataError, save_dataset
from .denoiser import ParamError
from .experiment import (
    ConfigError,
    ExperimentConfig,
    build_dataset,
    emit_report,
    evaluate_params,
    load_params,
    run_many,
    transfer_eval,
)
from .graph import GraphError
from .spectral import SpectralError
from .training import NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("graphdau")


def _load_configs(args) -> list[ExperimentConfig]:
    if not args.config:
        raise ConfigError("--config is required")
    cfgs = []
    for i, path in enumerate(args.config):
        cfg = ExperimentConfig.load(path)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            out = Path(args.out)
            cfg = dataclasses.replace(cfg, out=str(out / cfg.name if len(args.config) > 1 else out))
        cfg.validate()
        cfgs.append(cfg)
    return cfgs


def _print_rows(rows) -> None:
    for r in rows:
        print(f"{r.experiment_id}\t{r.model}\t{r.split}\tRMSE {r.mean_rmse:.4f} ± {r.std_rmse:.4f}")


def cmd_gen_data(args) -> None:
    for cfg in _load_configs(args):
        path = save_dataset(build_dataset(cfg), Path(cfg.out) / "data")
        print(f"wrote dataset to {path}")


def cmd_train(args) -> None:
    cfgs = _load_configs(args)
    for cfg in cfgs:
        if cfg.model not in ("graphdau", "nestdau"):
            raise ConfigError(f"train needs model graphdau or nestdau, got {cfg.model!r}; use grid-search")
    _print_rows(run_many(cfgs, args.threads))


def cmd_grid_search(args) -> None:
    cfgs = _load_configs(args)
    for cfg in cfgs:
        if cfg.model in ("graphdau", "nestdau"):
            raise ConfigError(f"grid-search needs a baseline model, got {cfg.model!r}; use train")
    _print_rows(run_many(cfgs, args.threads))


def cmd_eval(args) -> None:
    params = load_params(args.params)
    for cfg in _load_configs(args):
        _print_rows([evaluate_params(params, cfg)])


def cmd_transfer(args) -> None:
    for cfg in _load_configs(args):
        _print_rows([transfer_eval(args.params, cfg)])


def cmd_report(args) -> None:
    root = args.metrics_dir or args.out
    if root is None:
        raise ConfigError("report needs a metrics directory (positional or --out)")
    rows = emit_report(root)
    print(f"summarised {len(rows)} rows into {Path(root) / 'summary.md'}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", nargs="+", metavar="JSON", help="experiment config file(s)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--threads", type=int, default=1, help="run several configs concurrently")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="graphdau", description="Unrolled ADMM graph signal restoration.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate and save a dataset bundle").set_defaults(
        func=cmd_gen_data)
    sub.add_parser("train", parents=[common], help="train GraphDAU / NestDAU").set_defaults(func=cmd_train)
    sub.add_parser("grid-search", parents=[common], help="tune a classical baseline").set_defaults(
        func=cmd_grid_search)
    for name, func, text in (("eval", cmd_eval, "evaluate stored parameters on the test split"),
                             ("transfer", cmd_transfer, "apply stored parameters to another graph")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--params", required=True, help="parameter JSON written by train or grid-search")
        sp.set_defaults(func=func)
    rp = sub.add_parser("report", parents=[common], help="summarise metrics.csv files below a directory")
    rp.add_argument("metrics_dir", nargs="?", default=None)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ParamError, DataError, GraphError, SpectralError, FileNotFoundError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
