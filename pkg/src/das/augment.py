"""Random-shift and pixel-noise views of an oversized canvas, with the exact adjoint."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from das.rng import Stream


@dataclass(frozen=True)
class AugmentConfig:
    shift_max: int = 56
    noise_std: float = 0.2
    batch: int = 32
    out_size: int = 224
    # False: a single centred, noise-free view (the "no augmentation" ablation)
    enabled: bool = True

    def __post_init__(self):
        if self.shift_max < 0:
            raise ValueError("shift_max must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.out_size < 1:
            raise ValueError("out_size must be >= 1")

    @property
    def canvas_size(self) -> int:
        return self.out_size + 2 * self.shift_max

    @property
    def views_per_step(self) -> int:
        return self.batch if self.enabled else 1


@dataclass
class AugmentedView:
    image: np.ndarray
    shift: tuple[int, int]  # (dx, dy): column and row offset from the centred crop
    noise_tag: str


def crop(canvas: np.ndarray, out_size: int, shift: tuple[int, int]) -> np.ndarray:
    s = (canvas.shape[0] - out_size) // 2
    dx, dy = shift
    if abs(dx) > s or abs(dy) > s:
        raise ValueError(f"shift {shift} exceeds the canvas margin {s}")
    y0, x0 = s + dy, s + dx
    return canvas[y0 : y0 + out_size, x0 : x0 + out_size]


def center_crop(canvas: np.ndarray, out_size: int) -> np.ndarray:
    return crop(canvas, out_size, (0, 0)).copy()


def draw_shift(rng: Stream, view: int, shift_max: int) -> tuple[int, int]:
    """Integer (dx, dy) for view ``view``, uniform on ``[-shift_max, shift_max]^2``."""
    dx, dy = rng.child("shifts", view).integers(-shift_max, shift_max, 2)
    return int(dx), int(dy)


def sample_views(canvas: np.ndarray, cfg: AugmentConfig, rng: Stream) -> list[AugmentedView]:
    """Draw ``cfg.batch`` shifted, noised crops; view ``k`` uses sub-streams of ``rng`` keyed by ``k``."""
    if canvas.shape[:2] != (cfg.canvas_size, cfg.canvas_size):
        raise ValueError(
            f"canvas {canvas.shape[:2]} does not match out_size + 2*shift_max = {cfg.canvas_size}"
        )
    if not cfg.enabled:
        return [AugmentedView(center_crop(canvas, cfg.out_size), (0, 0), "none")]

    s = cfg.shift_max
    views = []
    for k in range(cfg.batch):
        dx, dy = draw_shift(rng, k, s)
        image = crop(canvas, cfg.out_size, (dx, dy)).copy()
        tag = "none"
        if cfg.noise_std > 0:
            noise_stream = rng.child("noise", k)
            image += cfg.noise_std * noise_stream.normal(image.size).reshape(image.shape)
            tag = repr(noise_stream)
        views.append(AugmentedView(image, (dx, dy), tag))
    return views


def scatter_adjoint(
    view_grads: Sequence[tuple[np.ndarray, tuple[int, int]]],
    canvas_size: int,
) -> np.ndarray:
    """Mean of the per-view gradients pasted back into their crop windows."""
    if not view_grads:
        raise ValueError("no view gradients given")
    out = None
    for grad, (dx, dy) in view_grads:
        n = grad.shape[0]
        s = (canvas_size - n) // 2
        if n + 2 * s != canvas_size:
            raise ValueError(f"view size {n} incompatible with canvas {canvas_size}")
        if abs(dx) > s or abs(dy) > s:
            raise ValueError(f"shift {(dx, dy)} exceeds the canvas margin {s}")
        if out is None:
            out = np.zeros((canvas_size, canvas_size) + grad.shape[2:])
        out[s + dy : s + dy + n, s + dx : s + dx + n] += grad
    return out / len(view_grads)
