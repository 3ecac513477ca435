"""Command-line entry point.

Subcommands run the configured experiment up to a chosen stage:

    simulate   integrate the system and write trajectory/surface tables
    train-ae   ...then fit the autoencoder and save model + loss curve
    embed      ...then encode the ensemble into the latent space
    modes      full pipeline through mode extraction (alias of run)
    run        full pipeline
    synthetic  full pipeline for a planted-mode config

Exit codes: 0 on success, 2 for configuration problems, 3 for numeric
failures (the failing stage is named on stderr).
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_raw_config, parse_config_dict
from .pipeline import StageError, execute

_STOP_BY_COMMAND = {
    "simulate": "simulate",
    "train-ae": "train",
    "embed": "encode",
    "modes": "full",
    "run": "full",
    "synthetic": "full",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopdict",
        description="Koopman eigenpair dictionaries from trajectory data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate the configured system and write its tables"),
        ("train-ae", "simulate, then train the autoencoder"),
        ("embed", "simulate, train, and write the latent-space ensemble"),
        ("modes", "run the full pipeline through mode extraction"),
        ("run", "run the full pipeline"),
        ("synthetic", "run a planted-mode recovery experiment"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--out", help="output directory (overrides the config)")
        cmd.add_argument("--seed", type=int, help="global seed (overrides the config)")
        cmd.add_argument(
            "--modes", type=int, help="number of modes to extract (overrides the config)"
        )
        cmd.add_argument(
            "--width-scale",
            type=float,
            help="multiplier on autoencoder hidden-layer widths (overrides the config)",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    stop_after = _STOP_BY_COMMAND[args.command]

    try:
        raw = load_raw_config(args.config)
        if args.out is not None:
            raw["output_dir"] = args.out
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.modes is not None:
            raw["n_modes"] = args.modes
        if args.width_scale is not None:
            raw["width_scale"] = args.width_scale
        cfg = parse_config_dict(raw)

        if args.command == "synthetic" and cfg.system != "synthetic":
            raise ConfigError(
                f"the 'synthetic' command needs a synthetic config, got system {cfg.system!r}"
            )
        if cfg.system == "synthetic" and args.command in ("train-ae", "embed"):
            raise ConfigError(f"the synthetic system has no '{args.command}' stage")
        if cfg.ae_spec is None and args.command in ("train-ae", "embed"):
            raise ConfigError(
                f"'{args.command}' needs an autoencoder section, but the config has none"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = execute(cfg, stop_after)
    except StageError as exc:
        print(f"numeric failure in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 3

    print(f"wrote {len(result.paths)} files + manifest.json to {result.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
