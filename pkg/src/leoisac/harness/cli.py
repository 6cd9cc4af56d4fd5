"""Command-line entry point: ``leoisac run | list-presets | validate``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, ConfigError, from_mapping, load_config, preset
from .runner import run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

log = logging.getLogger("leoisac")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leoisac", description="Wideband LEO ISAC precoding "
                                     "experiments: EE curves, beampatterns and detection sweeps.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write result tables")
    run.add_argument("--config", help="flat YAML config file (optional when --scenario is given)")
    run.add_argument("--scenario", choices=PRESETS, help="preset to use as the base")
    run.add_argument("--seed", type=_u64, help="master seed (u64)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--paper-scale", action="store_true",
                     help="reference-table sizes (N_t up to 2304, M = 40); slow")

    sub.add_parser("list-presets", help="print the preset names")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("--config", required=True)
    return parser


def _resolve(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if args.config:
        cfg = load_config(args.config, args.scenario, args.paper_scale)
    elif args.scenario:
        cfg = preset(args.scenario, args.paper_scale)
    else:
        raise ConfigError("--config", "give a config file or --scenario")
    if overrides:
        values = cfg.to_dict()
        values.update(overrides)
        cfg = from_mapping(values)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list-presets":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.scenario} (config hash {cfg.config_hash()})")
            return EXIT_OK
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s with seed %d into %s", cfg.scenario, cfg.seed, cfg.out_dir)
    report = run_scenario(cfg)
    for name in report.files:
        print(name)
    if not report.converged:
        print("warning: at least one solver hit its iteration limit; results are flagged",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
