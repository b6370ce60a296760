"""Differentiable image encoders and the weighted-cosine objective.

Encoders expose ``forward(images) -> (features, backward)`` on a batch of
``B x n x n x 3`` images. ``features`` are the raw (unnormalized) embeddings;
``backward(d_features)`` returns the gradient w.r.t. the images. Cosine
scores are scale-free, so normalizing before or after makes no difference to
the objective or its gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from das.pyramid import area_matrix
from das.rng import Stream

TOY_SEED = 0x0DA5

IMAGE_EMBED = "image_embed"
INPUT_GRAD = "image_embed_with_input_grad"
TEXT_EMBED = "text_embed"
FEATURE_MAPS = "feature_maps"


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def cosine_score(v: np.ndarray, u: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v.shape != u.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {u.shape}")
    nv, nu = np.linalg.norm(v), np.linalg.norm(u)
    if nv == 0 or nu == 0:
        raise ValueError("cosine of a zero-norm vector is undefined")
    return float(np.dot(v, u) / (nv * nu))


@dataclass
class Target:
    embedding: np.ndarray
    weight: float = 1.0
    label: str = ""

    def __post_init__(self):
        self.embedding = normalize(self.embedding)
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError(f"non-finite target embedding {self.label!r}")


@dataclass
class TargetSet:
    entries: list[Target] = field(default_factory=list)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("target set is empty")
        dims = {t.embedding.shape for t in self.entries}
        if len(dims) != 1:
            raise ValueError(f"target embeddings have mixed dimensions: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.entries[0].embedding.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([t.embedding for t in self.entries])

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.entries], dtype=np.float64)

    @classmethod
    def single(cls, embedding: np.ndarray, weight: float = 1.0, label: str = "") -> "TargetSet":
        return cls([Target(embedding, weight, label)])


def weighted_objective(v: np.ndarray, targets: TargetSet) -> float:
    """``sum_k w_k * cos(v, u_k)``; negative weights push away from a target."""
    return float(sum(t.weight * cosine_score(v, t.embedding) for t in targets.entries))


def weighted_objective_grad(features: np.ndarray, targets: TargetSet) -> tuple[np.ndarray, np.ndarray]:
    """Batched objective values and their gradient w.r.t. raw features ``(B, d)``."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != targets.dim:
        raise ValueError(f"feature dim {features.shape[1]} != target dim {targets.dim}")
    norm = np.linalg.norm(features, axis=1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("zero-norm embedding")
    vhat = features / norm
    cos = vhat @ targets.matrix.T  # (B, K)
    w = targets.weights
    values = cos @ w
    # d cos(v, u)/dv = (u - cos * vhat) / |v|
    direction = w @ targets.matrix  # sum_k w_k u_k
    grad = (direction[None, :] - values[:, None] * vhat) / norm
    return values, grad


Backward = Callable[[np.ndarray], np.ndarray]


class Encoder:
    """Base class. Subclasses set ``name``, ``dim``, ``input_size`` and ``capabilities``."""

    name: str = "encoder"
    dim: int
    input_size: int
    capabilities: frozenset = frozenset({IMAGE_EMBED, INPUT_GRAD})

    def forward(self, images: np.ndarray) -> tuple[np.ndarray, Backward]:
        raise NotImplementedError

    def _check_batch(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        n = self.input_size
        if images.shape[1:] != (n, n, 3):
            raise ValueError(f"{self.name} expects {n}x{n}x3 images, got {images.shape[1:]}")
        if not np.all(np.isfinite(images)):
            raise ValueError("non-finite pixel values")
        return images

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Unit-norm embedding of one image."""
        features, _ = self.forward(image[None] if image.ndim == 3 else image)
        return normalize(features[0])

    def objective_and_grad(self, images: np.ndarray, targets: TargetSet) -> tuple[np.ndarray, np.ndarray]:
        """Per-image objective values and input gradients for a batch."""
        if INPUT_GRAD not in self.capabilities:
            raise TypeError(f"encoder {self.name} does not provide input gradients")
        features, backward = self.forward(images)
        values, dfeat = weighted_objective_grad(features, targets)
        return values, backward(dfeat)

    def text_embed(self, prompt: str) -> np.ndarray:
        raise TypeError(f"encoder {self.name} has no text tower; use image or embedding targets")

    def feature_maps(self, images: np.ndarray) -> tuple[list[np.ndarray], Callable[[list[np.ndarray]], np.ndarray]]:
        raise TypeError(f"encoder {self.name} does not expose feature maps")


class ToyEncoder(Encoder):
    """Weight-free stand-in for an image encoder.

    pool to 32x32x3 -> flatten (y, x, c) -> fixed Gaussian matrix -> tanh -> L2 normalize.
    The matrix has N(0, 1/3072) entries drawn from ``Stream(seed)``.
    """

    capabilities = frozenset({IMAGE_EMBED, INPUT_GRAD, FEATURE_MAPS})
    pool_size = 32
    coarse_size = 8

    def __init__(self, seed: int = TOY_SEED, input_size: int = 224, dim: int = 512):
        self.seed = int(seed)
        self.input_size = int(input_size)
        self.dim = int(dim)
        self.name = f"toy:{self.seed:#x}" if self.seed != TOY_SEED else "toy"
        n_in = 3 * self.pool_size * self.pool_size
        self.weights = Stream(self.seed).normal(self.dim * n_in).reshape(self.dim, n_in) * np.sqrt(1.0 / n_in)
        self._pool = area_matrix(self.input_size, self.pool_size)
        self._coarse = area_matrix(self.pool_size, self.coarse_size)

    def __repr__(self) -> str:
        return f"ToyEncoder(seed={self.seed:#x}, input_size={self.input_size}, dim={self.dim})"

    def _pool_forward(self, images: np.ndarray) -> np.ndarray:
        return np.einsum("ih,bhwc,jw->bijc", self._pool, images, self._pool, optimize=True)

    def _pool_backward(self, grad: np.ndarray) -> np.ndarray:
        return np.einsum("ih,bijc,jw->bhwc", self._pool, grad, self._pool, optimize=True)

    def forward(self, images):
        images = self._check_batch(images)
        b = images.shape[0]
        x = self._pool_forward(images).reshape(b, -1)
        t = np.tanh(x @ self.weights.T)

        def backward(dt: np.ndarray) -> np.ndarray:
            dz = np.asarray(dt).reshape(b, self.dim) * (1.0 - t * t)
            dx = (dz @ self.weights).reshape(b, self.pool_size, self.pool_size, 3)
            return self._pool_backward(dx)

        return t, backward

    def feature_maps(self, images):
        """The 32x32x3 pooled stage and an 8x8x3 pooling of it, plus their joint adjoint."""
        images = self._check_batch(images)
        fine = self._pool_forward(images)
        c = self._coarse
        coarse = np.einsum("ih,bhwc,jw->bijc", c, fine, c, optimize=True)

        def backward(grads: list[np.ndarray]) -> np.ndarray:
            g_fine, g_coarse = grads
            total = g_fine + np.einsum("ih,bijc,jw->bhwc", c, g_coarse, c, optimize=True)
            return self._pool_backward(total)

        return [fine, coarse], backward


def ensemble_gradient(
    encoders: Sequence[Encoder],
    views: np.ndarray,
    targets: Sequence[TargetSet],
    reduction: str = "mean",
) -> tuple[np.ndarray, np.ndarray]:
    """Mean over encoders of each view's input gradient.

    Returns ``(grads, values)`` with ``grads`` shaped like ``views`` and
    ``values[i, b]`` the objective of encoder ``i`` on view ``b``. With
    ``reduction="normalized"`` each encoder's per-view gradient is scaled to
    unit L2 norm before averaging.
    """
    if len(encoders) != len(targets):
        raise ValueError("one target set per encoder required")
    if reduction not in ("mean", "normalized"):
        raise ValueError(f"unknown reduction {reduction!r}")
    views = np.asarray(views, dtype=np.float64)
    total = np.zeros_like(views)
    values = []
    for enc, tset in zip(encoders, targets):
        if INPUT_GRAD not in enc.capabilities:
            raise TypeError(f"encoder {enc.name} does not provide input gradients")
        val, grad = enc.objective_and_grad(views, tset)
        if reduction == "normalized":
            norms = np.sqrt(np.sum(grad * grad, axis=(1, 2, 3), keepdims=True))
            grad = np.divide(grad, norms, out=np.zeros_like(grad), where=norms > 0)
        total += grad
        values.append(val)
    return total / len(encoders), np.array(values)


def save_embedding(path: str | Path, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=np.float64).ravel()
    payload = {"dim": int(vector.shape[0]), "data": [float(x) for x in vector]}
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_embedding(path: str | Path) -> np.ndarray:
    """Read an embedding JSON file and return it normalized."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        dim = int(payload["dim"])
        data = np.asarray(payload["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed embedding file {path}: {exc}") from exc
    if data.shape != (dim,):
        raise ValueError(f"embedding file {path}: declared dim {dim}, found {data.size} values")
    return normalize(data)
