#!/usr/bin/env python3
"""Report transitory widths per density from a transitory-sweep CSV."""

import sys
from collections import defaultdict

import numpy as np

from giasec.experiments import read_csv, transitory_width


def main(path):
    curves = defaultdict(list)
    for r in read_csv(path):
        curves[float(r["density"])].append((float(r["R"]), float(r["mean_sdof"])))
    widths = {}
    for lam, pts in sorted(curves.items()):
        R, s = map(np.array, zip(*pts))
        widths[lam] = transitory_width(R, s)
        print(f"lambda={lam:<6g} width={widths[lam]:.3f}")
    lams = sorted(widths)
    print(f"ratio sparse/dense: {widths[lams[0]] / widths[lams[-1]]:.2f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "results/transitory_sweep/transitory_sweep.csv")
