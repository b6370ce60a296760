"""Multi-resolution image parameterization.

An image on an ``S x S`` canvas is written as

    image = 0.5 + 0.5 * tanh(sum_r upsample_S(P_r))

with one unbounded ``r x r x 3`` component ``P_r`` per resolution. Resizing is
a separable linear map, so every operator here is a pair of small dense
matrices and its adjoint is the transpose pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from das.rng import Stream, root_stream

DEFAULT_CLAMP_EPS = 1.0 / 512

# Largest/smallest float64 values strictly inside (0, 1) reachable by compose.
_PIXEL_LO = 2.0**-54
_PIXEL_HI = 1.0 - 2.0**-53


def default_resolutions(canvas_size: int) -> list[int]:
    """Powers of two below ``canvas_size``, then ``canvas_size`` itself."""
    out = []
    r = 1
    while r < canvas_size:
        out.append(r)
        r *= 2
    out.append(canvas_size)
    return out


def check_resolutions(resolutions: Sequence[int], canvas_size: int) -> tuple[int, ...]:
    res = tuple(int(r) for r in resolutions)
    if not res:
        raise ValueError("resolution list is empty")
    if canvas_size < 1:
        raise ValueError(f"canvas_size must be positive, got {canvas_size}")
    if any(r < 1 for r in res):
        raise ValueError(f"resolutions must be positive: {res}")
    if any(b <= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be unique and strictly increasing: {res}")
    if res[-1] > canvas_size:
        raise ValueError(f"resolution {res[-1]} exceeds canvas size {canvas_size}")
    return res


@dataclass
class PyramidImage:
    resolutions: tuple[int, ...]
    components: list[np.ndarray]
    canvas_size: int

    def __post_init__(self):
        self.resolutions = check_resolutions(self.resolutions, self.canvas_size)
        if len(self.components) != len(self.resolutions):
            raise ValueError("one component per resolution required")
        for r, c in zip(self.resolutions, self.components):
            if c.shape != (r, r, 3):
                raise ValueError(f"component at r={r} has shape {c.shape}, expected {(r, r, 3)}")

    def copy(self) -> "PyramidImage":
        return PyramidImage(self.resolutions, [c.copy() for c in self.components], self.canvas_size)

    def combine(self, a: float, other: "PyramidImage", b: float) -> "PyramidImage":
        """``a * self + b * other`` (same layout required)."""
        if other.resolutions != self.resolutions or other.canvas_size != self.canvas_size:
            raise ValueError("pyramid layouts differ")
        comps = [a * x + b * y for x, y in zip(self.components, other.components)]
        return PyramidImage(self.resolutions, comps, self.canvas_size)

    @property
    def num_parameters(self) -> int:
        return sum(3 * r * r for r in self.resolutions)


def new_pyramid(
    resolutions: Sequence[int],
    canvas_size: int,
    init: str = "gaussian",
    sigma: float = 0.01,
    seed: int | Stream = 0,
) -> PyramidImage:
    """Allocate a pyramid filled with zeros or i.i.d. N(0, sigma^2) values."""
    res = check_resolutions(resolutions, canvas_size)
    if init == "zeros":
        comps = [np.zeros((r, r, 3)) for r in res]
    elif init == "gaussian":
        stream = seed if isinstance(seed, Stream) else root_stream(seed).child("init")
        comps = [sigma * stream.child("component", r).normal(3 * r * r).reshape(r, r, 3) for r in res]
    else:
        raise ValueError(f"unknown init policy {init!r}")
    return PyramidImage(res, comps, canvas_size)


@lru_cache(maxsize=None)
def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Rows map an ``n_in`` signal to ``n_out`` samples (half-pixel centers, edge clamp)."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for d in range(n_out):
        xs = min(max((d + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        x0 = int(np.floor(xs))
        x1 = min(x0 + 1, n_in - 1)
        f = xs - x0
        m[d, x0] += 1.0 - f
        m[d, x1] += f
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Area-mean pooling weights: each output cell averages the input span it covers."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        lo, hi = o * scale, (o + 1) * scale
        for i in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            overlap = min(hi, i + 1) - max(lo, i)
            if overlap > 0:
                m[o, i] = overlap / scale
    m.setflags(write=False)
    return m


def _separable(grid: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # grid: (H, W) or (H, W, C); computes rows @ grid @ cols.T channel-wise
    out = np.tensordot(rows, grid, axes=(1, 0))
    out = np.tensordot(cols, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def _square_side(grid: np.ndarray) -> int:
    if grid.ndim not in (2, 3) or grid.shape[0] != grid.shape[1]:
        raise ValueError(f"expected a square grid, got shape {grid.shape}")
    return grid.shape[0]


def resize_bilinear(src: np.ndarray, out_size: int) -> np.ndarray:
    n = _square_side(src)
    if out_size < 1:
        raise ValueError("out_size must be >= 1")
    if out_size == n:
        return np.array(src, dtype=np.float64, copy=True)
    m = bilinear_matrix(n, out_size)
    return _separable(src, m, m)


def resize_adjoint(grad_out: np.ndarray, in_size: int) -> np.ndarray:
    """Transpose of :func:`resize_bilinear` from ``in_size`` to ``grad_out``'s size."""
    n = _square_side(grad_out)
    if in_size == n:
        return np.array(grad_out, dtype=np.float64, copy=True)
    m = bilinear_matrix(in_size, n)
    return _separable(grad_out, m.T, m.T)


def area_downsample(src: np.ndarray, out_size: int) -> np.ndarray:
    n = _square_side(src)
    if out_size == n:
        return np.array(src, dtype=np.float64, copy=True)
    m = area_matrix(n, out_size)
    return _separable(src, m, m)


def area_downsample_adjoint(grad_out: np.ndarray, in_size: int) -> np.ndarray:
    n = _square_side(grad_out)
    if in_size == n:
        return np.array(grad_out, dtype=np.float64, copy=True)
    m = area_matrix(in_size, n)
    return _separable(grad_out, m.T, m.T)


def _check_finite(p: PyramidImage) -> None:
    for r, c in zip(p.resolutions, p.components):
        if not np.all(np.isfinite(c)):
            raise ValueError(f"non-finite values in component r={r}")


def compose_linear(p: PyramidImage) -> np.ndarray:
    """Sum of all components upsampled to the canvas (pre-tanh field)."""
    _check_finite(p)
    s = p.canvas_size
    total = np.zeros((s, s, 3))
    for r, c in zip(p.resolutions, p.components):
        total += resize_bilinear(c, s)
    return total


def squash(linear: np.ndarray) -> np.ndarray:
    return np.clip(0.5 + 0.5 * np.tanh(linear), _PIXEL_LO, _PIXEL_HI)


def compose(p: PyramidImage) -> np.ndarray:
    """The ``S x S x 3`` image in (0, 1) represented by ``p``."""
    return squash(compose_linear(p))


def decompose(
    image: np.ndarray,
    resolutions: Sequence[int],
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> PyramidImage:
    """Find components whose composition reproduces ``image``.

    Residuals of the atanh field are assigned coarse to fine by area-mean
    pooling, so the finest level (which must equal the canvas) absorbs
    whatever the coarser levels miss.
    """
    image = np.asarray(image, dtype=np.float64)
    s = _square_side(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an S x S x 3 image, got {image.shape}")
    if not 0.0 < clamp_eps < 0.5:
        raise ValueError("clamp_eps must lie in (0, 0.5)")
    if not np.all(np.isfinite(image)) or image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    res = check_resolutions(resolutions, s)
    if res[-1] != s:
        raise ValueError(f"finest resolution {res[-1]} must equal the canvas size {s}")

    target = np.arctanh(2.0 * np.clip(image, clamp_eps, 1.0 - clamp_eps) - 1.0)
    approx = np.zeros_like(target)
    comps = []
    for r in res:
        comp = area_downsample(target - approx, r)
        comps.append(comp)
        approx += resize_bilinear(comp, s)
    return PyramidImage(res, comps, s)


def backprop_to_components(
    grad_image: np.ndarray,
    p: PyramidImage,
    linear: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Gradient w.r.t. each component given the gradient w.r.t. ``compose(p)``.

    ``linear`` may carry a precomputed ``compose_linear(p)``.
    """
    s = p.canvas_size
    if grad_image.shape != (s, s, 3):
        raise ValueError(f"gradient shape {grad_image.shape} does not match canvas {(s, s, 3)}")
    if linear is None:
        linear = compose_linear(p)
    t = np.tanh(linear)
    g = grad_image * 0.5 * (1.0 - t * t)
    return [resize_adjoint(g, r) for r in p.resolutions]
