"""Command-line entry point: ``giasec <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .experiments import ExperimentConfig, run

COMMANDS = {
    "case-study": "case_study",
    "sweep-secrecy": "secrecy_sweep",
    "sweep-transitory": "transitory_sweep",
    "sweep-tradeoff": "tradeoff_sweep",
    "region-map": "region_map",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giasec", description="Secure interference-alignment network studies.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in COMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind.replace('_', ' ')}")
        p.add_argument("--config", help="flat YAML config; defaults are used when omitted")
        p.add_argument("--seed", type=int, help="run with this single master seed")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    return parser


def load_config(command: str, path: Optional[str], seed: Optional[int]) -> ExperimentConfig:
    kind = COMMANDS[command]
    cfg = ExperimentConfig.from_yaml(path) if path else ExperimentConfig(kind)
    if cfg.kind != kind:
        raise ValueError(f"config kind {cfg.kind!r} does not match subcommand {command!r}")
    if seed is not None:
        cfg = cfg.with_(seeds=(seed,))
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("giasec: --workers must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.command, args.config, args.seed)
    except (OSError, ValueError, TypeError) as exc:
        print(f"giasec: {exc}", file=sys.stderr)
        return 2
    info = run(cfg, args.out, args.workers)
    result = info["result"]
    print(f"wrote {', '.join(info['outputs'])} and manifest.json to {info['out_dir']}")
    if result is not None and result.skipped:
        print(f"skipped {result.skipped} of {result.requested} topologies"
              + (" (flagged)" if result.flagged else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
