"""8-bit PNG reading and writing on the [0, 1] scale."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

_SUPPORTED_MODES = {"RGB", "RGBA", "L", "LA", "P"}


def read_png(path: str | Path, square: bool = True) -> np.ndarray:
    """Decode to ``H x W x 3`` floats ``v/255``; alpha is dropped, non-square images are centre-cropped."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in _SUPPORTED_MODES:
                raise ValueError(f"{path}: unsupported PNG mode {mode!r} (8-bit RGB/RGBA/L expected)")
            if mode in ("RGBA", "LA") or (mode == "P" and "transparency" in im.info):
                log.warning("%s: dropping alpha channel", path)
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"{path}: cannot decode image ({exc})") from exc
    if square and rgb.shape[0] != rgb.shape[1]:
        h, w = rgb.shape[:2]
        m = min(h, w)
        log.info("%s: centre-cropping %dx%d to %dx%d", path, w, h, m, m)
        y0, x0 = (h - m) // 2, (w - m) // 2
        rgb = rgb[y0 : y0 + m, x0 : x0 + m]
    return rgb.astype(np.float64) / 255.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    """``round(v * 255)`` with halves rounded up, clamped to [0, 255]."""
    return np.clip(np.floor(np.asarray(image, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_png(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
