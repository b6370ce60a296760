"""Pixel / pixel+augment / multi-resolution ablation on each corpus photo's toy embedding.

    python scripts/run_ablation.py --photos camera rocket
"""

import argparse
from pathlib import Path

from das.diagnostics import ablation_report, format_ablation
from das.encoders import TargetSet, ToyEncoder
from das.imageio import read_png
from das.optimizer import EncoderObjective, RunConfig
from das.tasks import fit_to

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--photos", nargs="*", default=sorted(p.stem for p in DATA.glob("*.png")))
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=2.0)
    args = ap.parse_args()
    cfg = RunConfig(steps=args.steps, learning_rate=args.lr, resolutions=(1, 2, 4, 8, 16, 32, 48), shift_max=8,
                    noise_std=0.03, batch=8, out_size=32)
    enc = ToyEncoder(input_size=32)
    for name in args.photos:
        target = enc.embed(fit_to(read_png(DATA / f"{name}.png"), 32))
        rows = ablation_report(cfg, EncoderObjective([enc], [TargetSet.single(target)]))
        print(f"== {name}")
        print(format_ablation(rows))


if __name__ == "__main__":
    main()
