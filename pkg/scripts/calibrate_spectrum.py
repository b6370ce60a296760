"""Measure the spectrum estimator's slope on synthetic 1/f^alpha fields across sizes and seeds.

    python scripts/calibrate_spectrum.py --sides 32 64 224 --seeds 20
"""

import argparse

import numpy as np

from das.diagnostics import power_law_field, power_spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sides", type=int, nargs="*", default=[32, 64, 128, 224])
    ap.add_argument("--alphas", type=float, nargs="*", default=[0.0, 1.0, 2.0, 3.0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    print(f"{'side':>5} {'alpha':>6} {'mean':>8} {'std':>7} {'worst':>7}")
    for side in args.sides:
        for alpha in args.alphas:
            slopes = np.array([power_spectrum(power_law_field(side, alpha, s)).slope for s in range(args.seeds)])
            worst = np.max(np.abs(slopes + alpha))
            print(f"{side:>5} {alpha:>6.1f} {slopes.mean():>8.3f} {slopes.std():>7.3f} {worst:>7.3f}")


if __name__ == "__main__":
    main()
