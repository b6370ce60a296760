"""Gradient-ascent loop over pyramid components (and its raw-pixel baseline)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from das.augment import AugmentConfig, center_crop, sample_views, scatter_adjoint
from das.encoders import Encoder, TargetSet, ensemble_gradient, weighted_objective_grad
from das.pyramid import (
    PyramidImage,
    backprop_to_components,
    check_resolutions,
    compose_linear,
    default_resolutions,
    new_pyramid,
    squash,
)
from das.rng import Stream, root_stream


class NonFiniteGradient(FloatingPointError):
    def __init__(self, step: int, resolution: int, what: str = "gradient"):
        self.step = step
        self.resolution = resolution
        super().__init__(f"non-finite {what} at step {step}, component r={resolution}")


@dataclass(frozen=True)
class RunConfig:
    steps: int = 100
    learning_rate: float = 0.2
    resolutions: Optional[tuple[int, ...]] = None  # None: powers of two plus the canvas size
    shift_max: int = 56
    noise_std: float = 0.2
    batch: int = 32
    out_size: int = 224
    seed: int = 0
    init: str = "gaussian"
    init_sigma: float = 0.01
    augment: bool = True
    reduction: str = "mean"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.reduction not in ("mean", "normalized"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.resolutions is not None:
            object.__setattr__(self, "resolutions", check_resolutions(self.resolutions, self.canvas_size))
        self.augment_config  # validates shift/noise/batch/out_size

    @property
    def canvas_size(self) -> int:
        return self.out_size + 2 * self.shift_max

    @property
    def pyramid_resolutions(self) -> tuple[int, ...]:
        if self.resolutions is None:
            return tuple(default_resolutions(self.canvas_size))
        return self.resolutions

    @property
    def augment_config(self) -> AugmentConfig:
        return AugmentConfig(self.shift_max, self.noise_std, self.batch, self.out_size, self.augment)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolutions"] = list(self.pyramid_resolutions)
        return d


class Objective(Protocol):
    """Scores a batch of views; higher is better.

    ``shifts`` gives each view's crop offset on the canvas, for objectives
    that compare against a spatially aligned reference. Returns per-view
    values, per-view input gradients (``None`` when ``need_grad`` is false)
    and a dict of named per-view diagnostic scores.
    """

    def __call__(
        self, views: np.ndarray, need_grad: bool = True, shifts: Optional[Sequence[tuple[int, int]]] = None
    ) -> tuple[np.ndarray, Optional[np.ndarray], dict]:
        ...


class EncoderObjective:
    """Weighted cosine objective averaged over an encoder ensemble."""

    def __init__(self, encoders: Sequence[Encoder], targets: Sequence[TargetSet], reduction: str = "mean"):
        if not encoders:
            raise ValueError("at least one encoder required")
        if len(encoders) != len(targets):
            raise ValueError("one target set per encoder required")
        self.encoders = list(encoders)
        self.targets = list(targets)
        self.reduction = reduction

    def __call__(self, views, need_grad=True, shifts=None):
        if need_grad:
            grads, values = ensemble_gradient(self.encoders, views, self.targets, self.reduction)
        else:
            grads = None
            values = np.array([weighted_objective_grad(enc.forward(views)[0], t)[0]
                               for enc, t in zip(self.encoders, self.targets)])
        scores = {f"{i}:{enc.name}": values[i] for i, enc in enumerate(self.encoders)}
        return values.mean(axis=0), grads, scores


@dataclass
class StepRecord:
    step: int
    objective: float  # noise-free centre crop, before the update
    view_objective: float  # mean over augmented views
    encoder_scores: dict
    grad_norms: dict  # resolution -> L2 norm of the component gradient

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class RunTrace:
    config: RunConfig
    records: list[StepRecord] = field(default_factory=list)
    pyramid: Optional[PyramidImage] = None
    canvas: Optional[np.ndarray] = None
    image: Optional[np.ndarray] = None
    final_objective: float = float("nan")
    final_scores: dict = field(default_factory=dict)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")


def _composite(image: np.ndarray, mask: Optional[np.ndarray], source: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return image
    return mask * image + (1.0 - mask) * source


def check_mask(mask: np.ndarray, source: np.ndarray, canvas_size: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 2:
        mask = mask[..., None]
    if mask.shape[:2] != (canvas_size, canvas_size) or source.shape != (canvas_size, canvas_size, 3):
        raise ValueError(
            f"mask {mask.shape[:2]} and source {source.shape} must match the canvas ({canvas_size})"
        )
    if mask.min() < 0 or mask.max() > 1:
        raise ValueError("mask values must lie in [0, 1]")
    return mask


def evaluate(objective: Objective, image: np.ndarray, out_size: int) -> tuple[float, dict]:
    """Objective of the noise-free centre crop."""
    crop = center_crop(image, out_size)[None]
    values, _, scores = objective(crop, need_grad=False, shifts=[(0, 0)])
    return float(values[0]), {k: float(v[0]) for k, v in scores.items()}


def ascent_direction(
    p: PyramidImage,
    cfg: RunConfig,
    objective: Objective,
    rng: Stream,
    mask: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
    linear: Optional[np.ndarray] = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-component gradient of the mean view objective, and the per-view values."""
    if linear is None:
        linear = compose_linear(p)
    image = _composite(squash(linear), mask, source)
    views = sample_views(image, cfg.augment_config, rng)
    view_values, grads, _ = objective(np.stack([v.image for v in views]), shifts=[v.shift for v in views])
    canvas_grad = scatter_adjoint([(g, v.shift) for g, v in zip(grads, views)], cfg.canvas_size)
    if mask is not None:
        canvas_grad = canvas_grad * mask
    return backprop_to_components(canvas_grad, p, linear), view_values


def mean_view_objective(
    p: PyramidImage,
    cfg: RunConfig,
    objective: Objective,
    rng: Stream,
    mask: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
) -> float:
    """The quantity whose gradient :func:`ascent_direction` returns."""
    image = _composite(squash(compose_linear(p)), mask, source)
    views = sample_views(image, cfg.augment_config, rng)
    values, _, _ = objective(np.stack([v.image for v in views]), need_grad=False, shifts=[v.shift for v in views])
    return float(np.mean(values))


def das_step(
    p: PyramidImage,
    cfg: RunConfig,
    objective: Objective,
    rng: Stream,
    step: int = 0,
    mask: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
) -> tuple[PyramidImage, StepRecord]:
    """One ascent step ``P_r <- P_r + lr * g_r``. ``rng`` is the step's augmentation stream."""
    if p.canvas_size != cfg.canvas_size:
        raise ValueError(f"pyramid canvas {p.canvas_size} != config canvas {cfg.canvas_size}")
    linear = compose_linear(p)
    value, scores = evaluate(objective, _composite(squash(linear), mask, source), cfg.out_size)
    comp_grads, view_values = ascent_direction(p, cfg, objective, rng, mask, source, linear)

    new_comps = []
    for r, c, g in zip(p.resolutions, p.components, comp_grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(step, r)
        with np.errstate(over="ignore", invalid="ignore"):
            updated = c + cfg.learning_rate * g
        if not np.all(np.isfinite(updated)):
            raise NonFiniteGradient(step, r, what="component after update")
        new_comps.append(updated)

    record = StepRecord(
        step=step,
        objective=value,
        view_objective=float(np.mean(view_values)),
        encoder_scores=scores,
        grad_norms={str(r): float(np.linalg.norm(g)) for r, g in zip(p.resolutions, comp_grads)},
    )
    return PyramidImage(p.resolutions, new_comps, p.canvas_size), record


def das_optimize(
    cfg: RunConfig,
    objective: Objective,
    init: Optional[PyramidImage] = None,
    mask: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
    callback=None,
) -> RunTrace:
    """Run ``cfg.steps`` ascent steps from ``init`` (or a fresh pyramid)."""
    root = root_stream(cfg.seed)
    if init is None:
        p = new_pyramid(cfg.pyramid_resolutions, cfg.canvas_size, cfg.init, cfg.init_sigma, root.child("init"))
    else:
        if init.canvas_size != cfg.canvas_size:
            raise ValueError(f"initial pyramid canvas {init.canvas_size} != {cfg.canvas_size}")
        p = init.copy()
    if mask is not None:
        mask = check_mask(mask, source, cfg.canvas_size)

    aug = root.child("augment")
    trace = RunTrace(cfg)
    for step in range(cfg.steps):
        p, record = das_step(p, cfg, objective, aug.child(step), step, mask, source)
        trace.records.append(record)
        if callback is not None:
            callback(record)

    canvas = _composite(squash(compose_linear(p)), mask, source)
    trace.pyramid = p
    trace.canvas = canvas
    trace.image = center_crop(canvas, cfg.out_size)
    trace.final_objective, trace.final_scores = evaluate(objective, canvas, cfg.out_size)
    return trace


def pixel_ascent(
    cfg: RunConfig,
    objective: Objective,
    init: Optional[PyramidImage] = None,
    mask: Optional[np.ndarray] = None,
    source: Optional[np.ndarray] = None,
    callback=None,
) -> RunTrace:
    """Same loop with a single full-resolution component: plain tanh-pixel ascent."""
    cfg = replace(cfg, resolutions=(cfg.canvas_size,))
    if init is not None and init.resolutions != cfg.resolutions:
        raise ValueError("pixel ascent needs a single full-resolution initial component")
    return das_optimize(cfg, objective, init, mask, source, callback)
