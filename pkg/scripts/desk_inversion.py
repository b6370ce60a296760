"""Invert the toy embedding of each corpus photo at desk scale and print the final cosine.

    python scripts/desk_inversion.py --steps 200
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from das.encoders import ToyEncoder
from das.imageio import read_png
from das.optimizer import RunConfig
from das.tasks import fit_to, reconstruct

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
DESK = RunConfig(steps=200, learning_rate=2.0, resolutions=(1, 2, 4, 8, 16, 32, 48), shift_max=8,
                 noise_std=0.03, batch=8, out_size=32)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=DESK.steps)
    ap.add_argument("--lr", type=float, default=DESK.learning_rate)
    ap.add_argument("--noise-std", type=float, default=DESK.noise_std)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = replace(DESK, steps=args.steps, learning_rate=args.lr, noise_std=args.noise_std, seed=args.seed)
    enc = ToyEncoder(input_size=cfg.out_size)
    for path in sorted(DATA.glob("*.png")):
        t0 = time.perf_counter()
        trace, report = reconstruct([enc], fit_to(read_png(path), cfg.out_size), cfg)
        print(f"{path.stem:<10} start {trace.objectives[0]:.4f}  final {report.cosines['toy']:.4f}"
              f"  {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
