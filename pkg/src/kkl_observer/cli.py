"""Command-line front end: ``kkl <subcommand> --config run.json --set key=value``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext

from . import pipeline
from .config import ConfigError, resolve
from .ode import IntegrationDivergence
from .training import TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BOUND = 0, 2, 3, 4

log = logging.getLogger("kkl_observer")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        out[key.strip()] = _parse_value(value)
    return out


def load_config(args):
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--config", str(exc)) from exc
    overrides = parse_overrides(args.set)
    if args.system:
        overrides["system"] = args.system
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    return resolve(file_cfg, overrides)


def _thread_limit(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _summary(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=float))


def run(args) -> int:
    cfg = load_config(args)
    cmd = args.command
    if cmd == "generate-data":
        meta = pipeline.cmd_generate_data(cfg)
        _summary({k: meta[k] for k in ("n_data", "n_pde", "k_star", "tau", "t_star_max")})
    elif cmd == "train-forward":
        pipeline.cmd_train_forward(cfg)
    elif cmd == "train-inverse":
        pipeline.cmd_train_inverse(cfg)
    elif cmd == "simulate":
        runs = pipeline.cmd_simulate(cfg, emit_plot_data=args.emit_plot_data, domain=args.domain)
        _summary({"runs": len(runs), "dir": str(pipeline._out(cfg) / pipeline.RUNS_DIR)})
    elif cmd == "evaluate":
        metrics, cert = pipeline.cmd_evaluate(cfg)
        _summary({"rmse": metrics["rmse"], "smape": metrics["smape"], "tail_rmse": metrics["tail"]["rmse"], "certificate_passed": cert["passed"]})
        if args.strict and not cert["passed"]:
            return EXIT_BOUND
    elif cmd == "bounds":
        cert = pipeline.cmd_bounds(cfg)
        _summary({"bounds": cert["bounds"], "passed": cert["passed"]})
        if args.strict and not cert["passed"]:
            return EXIT_BOUND
    elif cmd == "ablate":
        _summary(pipeline.cmd_ablate(cfg)["mean"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--system", help="benchmark name (overrides the config file)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. forward.epochs=3")
    common.add_argument("--output-dir", help="where artifacts are read and written")
    common.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kkl", description="Learned KKL observer pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate-data", parents=[common], help="simulate plant and filter, write S1")
    sub.add_parser("train-forward", parents=[common], help="fit the forward map on S1")
    sub.add_parser("train-inverse", parents=[common], help="fit the inverse map (builds S2 if needed)")
    p = sub.add_parser("simulate", parents=[common], help="run the observer on fresh initial states")
    p.add_argument("--emit-plot-data", action="store_true", help="per-state CSVs of the first run")
    p.add_argument("--domain", choices=["test", "ood"], default="test")
    p = sub.add_parser("evaluate", parents=[common], help="metrics and bound certificate")
    p.add_argument("--strict", action="store_true", help="exit 4 if a bound check fails")
    p = sub.add_parser("bounds", parents=[common], help="bound certificate only")
    p.add_argument("--strict", action="store_true")
    sub.add_parser("ablate", parents=[common], help="physics-informed vs supervised forward map")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.threads):
            return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationDivergence, TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
