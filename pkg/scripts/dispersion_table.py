#!/usr/bin/env python3
"""Quick look at the linear band structure: gap edges and the mismatch for a few pump frequencies."""
import argparse

from jtwpa import tmm
from jtwpa.config import default_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--fs", type=float, default=6.7, help="signal frequency in GHz")
    args = p.parse_args()
    cfg = default_config("dispersion-report")
    disp = tmm.bloch_dispersion(cfg.line)
    for lo, hi in disp.stop_bands:
        print(f"stop band {lo / 1e9:8.3f} - {hi / 1e9:8.3f} GHz")
    for fp in cfg.sweep.fp:
        curve = tmm.phase_mismatch(disp, fp, args.fs * 1e9)
        print(f"fp={fp / 1e9:.2f} GHz fs={args.fs} GHz: coherence length {float(curve.xi[0]):.0f} cells, "
              f"p+i {float(curve.xi_pi[0]):.1f} cells")


if __name__ == "__main__":
    main()
