"""Task drivers: generation, reconstruction, modification, style transfer, inpainting."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from das.augment import crop
from das.encoders import Encoder, Target, TargetSet, normalize
from das.optimizer import EncoderObjective, RunConfig, RunTrace, das_optimize, pixel_ascent
from das.pyramid import DEFAULT_CLAMP_EPS, area_downsample, decompose, resize_bilinear


@dataclass
class TargetSource:
    """An encoder-independent target: a prompt, a reference image or a raw embedding."""

    kind: str  # "text" | "image" | "embedding"
    value: object
    weight: float = 1.0
    label: str = ""

    @classmethod
    def text(cls, prompt: str, weight: float = 1.0) -> "TargetSource":
        return cls("text", prompt, weight, prompt)

    @classmethod
    def image(cls, image: np.ndarray, weight: float = 1.0, label: str = "image") -> "TargetSource":
        return cls("image", np.asarray(image, dtype=np.float64), weight, label)

    @classmethod
    def embedding(cls, vector: np.ndarray, weight: float = 1.0, label: str = "embedding") -> "TargetSource":
        return cls("embedding", np.asarray(vector, dtype=np.float64), weight, label)


# Prompt recipe used for the gallery generations: main prompt plus three modifiers.
GALLERY_MODIFIERS = (
    ("Optical Character Recognition", -0.3),
    ("octane render, unreal engine, ray tracing, volumetric lighting", 0.3),
    ("multiple exposure", -0.3),
)


def gallery_prompts(prompt: str) -> list[TargetSource]:
    return [TargetSource.text(prompt, 1.0)] + [TargetSource.text(t, w) for t, w in GALLERY_MODIFIERS]


def fit_to(image: np.ndarray, size: int) -> np.ndarray:
    """Centre-crop to a square, then resample to ``size`` (area-mean down, bilinear up)."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    m = min(h, w)
    y0, x0 = (h - m) // 2, (w - m) // 2
    image = image[y0 : y0 + m, x0 : x0 + m]
    if m > size:
        return area_downsample(image, size)
    return resize_bilinear(image, size)


def to_canvas(image: np.ndarray, cfg: RunConfig) -> np.ndarray:
    """Place an ``out_size`` image in the middle of the canvas, reflecting it into the margin."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape[:2] == (cfg.canvas_size, cfg.canvas_size):
        return image
    if image.shape[:2] != (cfg.out_size, cfg.out_size):
        raise ValueError(f"image {image.shape[:2]} matches neither out_size nor canvas size")
    s = cfg.shift_max
    if s == 0:
        return image.copy()
    return np.pad(image, ((s, s), (s, s), (0, 0)), mode="symmetric")


def resolve_targets(sources: Sequence[TargetSource], encoders: Sequence[Encoder]) -> list[TargetSet]:
    """Embed every source with every encoder (each encoder uses its own towers)."""
    if not sources:
        raise ValueError("no targets given")
    sets = []
    for enc in encoders:
        entries = []
        for src in sources:
            if src.kind == "text":
                u = enc.text_embed(src.value)
            elif src.kind == "image":
                u = enc.embed(fit_to(src.value, enc.input_size))
            elif src.kind == "embedding":
                u = normalize(src.value)
                if u.shape != (enc.dim,):
                    raise ValueError(f"embedding {src.label!r} has dim {u.size}, encoder {enc.name} has {enc.dim}")
            else:
                raise ValueError(f"unknown target kind {src.kind!r}")
            entries.append(Target(u, src.weight, src.label))
        sets.append(TargetSet(entries))
    return sets


def _check_encoders(encoders: Sequence[Encoder], cfg: RunConfig) -> None:
    if not encoders:
        raise ValueError("at least one encoder required")
    for enc in encoders:
        if enc.input_size != cfg.out_size:
            raise ValueError(f"encoder {enc.name} takes {enc.input_size}px input, config out_size is {cfg.out_size}")


def generate(encoders: Sequence[Encoder], sources: Sequence[TargetSource], cfg: RunConfig, **kwargs) -> RunTrace:
    _check_encoders(encoders, cfg)
    objective = EncoderObjective(encoders, resolve_targets(sources, encoders), cfg.reduction)
    return das_optimize(cfg, objective, **kwargs)


@dataclass
class ReconstructionReport:
    cosines: dict  # encoder name -> final cosine to the reference embedding
    input_dims: int
    embed_dim: int

    @property
    def compression_ratio(self) -> float:
        return self.input_dims / self.embed_dim

    @property
    def ratio_text(self) -> str:
        r = self.compression_ratio
        return f"{r:.0f}:1" if r == int(r) else f"{r:.1f}:1"


def compression_ratio(out_size: int, embed_dim: int, channels: int = 3) -> float:
    return out_size * out_size * channels / embed_dim


def reconstruct(
    encoders: Sequence[Encoder], reference: np.ndarray, cfg: RunConfig
) -> tuple[RunTrace, ReconstructionReport]:
    """Invert the reference image's embedding starting from a fresh pyramid."""
    trace = generate(encoders, [TargetSource.image(reference, 1.0, "reference")], cfg)
    report = ReconstructionReport(
        cosines={k.split(":", 1)[1]: v for k, v in trace.final_scores.items()},
        input_dims=cfg.out_size * cfg.out_size * 3,
        embed_dim=encoders[0].dim,
    )
    return trace, report


def modify(
    encoders: Sequence[Encoder],
    source: np.ndarray,
    sources: Sequence[TargetSource],
    cfg: RunConfig,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> RunTrace:
    """Start from ``source`` (decomposed into the pyramid) and ascend towards the targets."""
    _check_encoders(encoders, cfg)
    init = decompose(to_canvas(source, cfg), cfg.pyramid_resolutions, clamp_eps)
    objective = EncoderObjective(encoders, resolve_targets(sources, encoders), cfg.reduction)
    return das_optimize(cfg, objective, init=init)


def style_transfer_embed(
    encoders: Sequence[Encoder],
    content: np.ndarray,
    style: np.ndarray,
    cfg: RunConfig,
    style_weight: float = 1.0,
    content_weight: float = 0.0,
) -> RunTrace:
    """Move the content image towards the style image's embedding.

    ``content_weight`` adds the content image's own embedding as a second target.
    """
    sources = [TargetSource.image(style, style_weight, "style")]
    if content_weight:
        sources.append(TargetSource.image(content, content_weight, "content"))
    return modify(encoders, content, sources, cfg)


def gram(features: np.ndarray) -> np.ndarray:
    """``(1/HW) F F^T`` over spatial positions for ``(..., H, W, C)`` features."""
    h, w, c = features.shape[-3:]
    flat = features.reshape(features.shape[:-3] + (h * w, c))
    return np.einsum("...pc,...pd->...cd", flat, flat) / (h * w)


class GramObjective:
    """Negative feature-and-Gram style loss on an encoder's feature maps (higher is better).

    loss = content_weight * |F_0(x) - F_0(c)|^2 + sum_l w_l |G_l(x) - G_l(style)|^2

    Stage 0 is the finest stage. ``content`` may be a canvas-sized image, in
    which case each view is compared with the content window under the same
    shift; the Gram term needs no alignment.
    """

    def __init__(self, encoder: Encoder, content: np.ndarray, style: np.ndarray,
                 layer_weights: Sequence[float] = (1.0, 1.0), content_weight: float = 1.0):
        self.encoder = encoder
        s_maps, _ = encoder.feature_maps(style[None])
        if len(layer_weights) != len(s_maps):
            raise ValueError(f"{len(s_maps)} feature stages but {len(layer_weights)} layer weights")
        self.layer_weights = [float(w) for w in layer_weights]
        self.content_weight = float(content_weight)
        self.content = np.asarray(content, dtype=np.float64)
        self.style_grams = [gram(m[0]) for m in s_maps]
        self._content_cache: dict = {}

    def content_features(self, shift: tuple[int, int]) -> np.ndarray:
        if shift not in self._content_cache:
            n = self.encoder.input_size
            window = crop(self.content, n, shift) if self.content.shape[0] != n else self.content
            self._content_cache[shift] = self.encoder.feature_maps(window[None])[0][0][0]
        return self._content_cache[shift]

    def __call__(self, views, need_grad=True, shifts=None):
        if shifts is None:
            shifts = [(0, 0)] * len(views)
        maps, backward = self.encoder.feature_maps(views)
        content_diff = maps[0] - np.stack([self.content_features(tuple(s)) for s in shifts])
        gram_diffs = [gram(m) - g for m, g in zip(maps, self.style_grams)]
        content_loss = np.sum(content_diff**2, axis=(1, 2, 3))
        style_loss = sum(w * np.sum(d**2, axis=(1, 2)) for w, d in zip(self.layer_weights, gram_diffs))
        values = -(self.content_weight * content_loss + style_loss)
        scores = {"content": -content_loss, "style": -style_loss}
        if not need_grad:
            return values, None, scores
        # d|G - G_s|^2/dF = (4/HW) F (G - G_s) for symmetric G; sign flipped for ascent
        grads = []
        for i, (m, d, w) in enumerate(zip(maps, gram_diffs, self.layer_weights)):
            h, wd = m.shape[1:3]
            g = -w * 4.0 / (h * wd) * np.einsum("bhwc,bcd->bhwd", m, d)
            if i == 0:
                g = g - self.content_weight * 2.0 * content_diff
            grads.append(g)
        return values, backward(grads), scores


def style_transfer_gram(
    encoder: Encoder,
    content: np.ndarray,
    style: np.ndarray,
    cfg: RunConfig,
    layer_weights: Sequence[float] = (1.0, 1.0),
    content_weight: float = 1.0,
    variant: str = "das",
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> RunTrace:
    """Feature/Gram style transfer optimized over the pyramid (``das``) or raw pixels (``pixel``)."""
    if encoder.input_size != cfg.out_size:
        raise ValueError(f"encoder input {encoder.input_size} != out_size {cfg.out_size}")
    content = fit_to(content, cfg.out_size)
    style = fit_to(style, cfg.out_size)
    canvas = to_canvas(content, cfg)
    objective = GramObjective(encoder, canvas, style, layer_weights, content_weight)
    if variant == "das":
        init = decompose(canvas, cfg.pyramid_resolutions, clamp_eps)
        return das_optimize(cfg, objective, init=init)
    if variant == "pixel":
        init = decompose(canvas, (cfg.canvas_size,), clamp_eps)
        return pixel_ascent(cfg, objective, init=init)
    raise ValueError(f"unknown variant {variant!r}")


def canvas_mask(mask: np.ndarray, cfg: RunConfig) -> np.ndarray:
    """Bring an ``out_size`` mask to the canvas; the margin is free (1)."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 3:
        mask = mask[..., 0] if mask.shape[2] == 1 else mask.mean(axis=2)
    if mask.shape == (cfg.canvas_size, cfg.canvas_size):
        return mask[..., None]
    if mask.shape != (cfg.out_size, cfg.out_size):
        raise ValueError(f"mask {mask.shape} matches neither out_size nor canvas size")
    s = cfg.shift_max
    return np.pad(mask, s, mode="constant", constant_values=1.0)[..., None]


def inpaint(
    encoders: Sequence[Encoder],
    source: np.ndarray,
    mask: np.ndarray,
    sources: Sequence[TargetSource],
    cfg: RunConfig,
) -> RunTrace:
    """Fill the mask==1 region; pixels where mask==0 are copied from ``source`` unchanged."""
    src = to_canvas(source, cfg)
    m = canvas_mask(mask, cfg)
    return generate(encoders, sources, cfg, mask=m, source=src)
