#!/usr/bin/env python3
"""Run every config in configs/ and write results under results/."""

import argparse
import time
from pathlib import Path

from giasec.experiments import ExperimentConfig, run

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="config stems to run, e.g. region_map case_study")
    args = ap.parse_args()
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        cfg = ExperimentConfig.from_yaml(path)
        t0 = time.perf_counter()
        info = run(cfg, ROOT / cfg.output_dir, args.workers)
        print(f"{path.stem:18s} {time.perf_counter() - t0:7.1f}s  -> {info['out_dir']}")


if __name__ == "__main__":
    main()
