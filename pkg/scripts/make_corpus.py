"""Write the small PNG test corpus in tests/data from scikit-image's bundled photos.

    python scripts/make_corpus.py
"""

from pathlib import Path

import numpy as np
import skimage.data

from das.imageio import write_png
from das.tasks import fit_to

SIZE = 64
PHOTOS = {
    "astronaut": skimage.data.astronaut,
    "camera": skimage.data.camera,
    "coffee": skimage.data.coffee,
    "chelsea": skimage.data.chelsea,
    "rocket": skimage.data.rocket,
}


def main():
    out = Path(__file__).resolve().parents[1] / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    for name, load in PHOTOS.items():
        img = np.asarray(load(), dtype=np.float64) / 255.0
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        write_png(out / f"{name}.png", fit_to(img[..., :3], SIZE))
        print(out / f"{name}.png")


if __name__ == "__main__":
    main()
