#!/usr/bin/env python3
"""Print strategy ordering and the GIA high-SNR slope from a secrecy-sweep CSV."""

import sys

import numpy as np

from giasec.experiments import rate_slope, read_csv


def main(path):
    rows = read_csv(path)
    curves = {}
    for r in rows:
        if r["cutoff"] == "1":
            curves.setdefault(r["strategy"], []).append((float(r["snr_db"]), float(r["mean_secrecy_rate"])))
    snr = np.array([s for s, _ in curves["GIA"]])
    print("SNR dB  " + "  ".join(f"{s:>7s}" for s in curves))
    for i, x in enumerate(snr):
        print(f"{x:6.0f}  " + "  ".join(f"{c[i][1]:7.3f}" for c in curves.values()))
    gia = np.array([v for _, v in curves["GIA"]])
    print(f"GIA slope 30-60 dB: {rate_slope(snr, gia, 30, 60):.3f} bits per 3 dB")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "results/secrecy_sweep/secrecy_sweep.csv")
