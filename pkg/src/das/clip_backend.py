"""Optional CLIP image/text encoder backed by ``transformers`` and ``torch``.

A weight directory is a standard Hugging Face checkpoint: ``config.json``
(which names the architecture), ``model.safetensors`` and tokenizer files,
optionally ``preprocessor_config.json`` for the channel mean/std. Geometric
preprocessing is the caller's job; this adapter only normalizes channels.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from das.encoders import IMAGE_EMBED, INPUT_GRAD, TEXT_EMBED, Encoder, normalize

# OpenAI CLIP preprocessing constants
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

WEIGHTS_ENV = "DAS_WEIGHTS_DIR"


def available() -> bool:
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
    except ImportError:
        return False
    return True


@dataclass(frozen=True)
class ClipModelSpec:
    weight_path: str
    architecture: str = "ViT-B/32"
    input_size: int = 224
    embed_dim: int = 512
    mean: Optional[tuple[float, float, float]] = None
    std: Optional[tuple[float, float, float]] = None
    dtype: str = "float32"
    device: str = "cpu"

    def resolved_path(self) -> Path:
        p = Path(self.weight_path).expanduser()
        if not p.is_absolute() and not p.exists() and os.environ.get(WEIGHTS_ENV):
            p = Path(os.environ[WEIGHTS_ENV]) / p
        return p


def _patch_size(tag: str) -> Optional[int]:
    m = re.search(r"/(\d+)$", tag)
    return int(m.group(1)) if m else None


def weights_checksum(path: str | Path) -> str:
    """sha256 over the checkpoint's weight files, in name order."""
    h = hashlib.sha256()
    for f in sorted(Path(path).glob("*.safetensors")) + sorted(Path(path).glob("*.bin")):
        h.update(f.name.encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


class ClipEncoder(Encoder):
    capabilities = frozenset({IMAGE_EMBED, INPUT_GRAD, TEXT_EMBED})

    def __init__(self, spec: ClipModelSpec, model, tokenizer, mean, std):
        import torch

        self.spec = spec
        self.model = model
        self.tokenizer = tokenizer
        self.dim = spec.embed_dim
        self.input_size = spec.input_size
        self.name = f"clip:{Path(spec.weight_path).name}"
        self._dtype = getattr(torch, spec.dtype)
        self._mean = torch.tensor(mean, dtype=self._dtype, device=spec.device).view(1, 3, 1, 1)
        self._std = torch.tensor(std, dtype=self._dtype, device=spec.device).view(1, 3, 1, 1)
        self.context_length = model.config.text_config.max_position_embeddings
        self.checksum = weights_checksum(spec.resolved_path())

    def __repr__(self) -> str:
        return f"ClipEncoder({self.spec.weight_path!r}, {self.spec.architecture})"

    @staticmethod
    def _features(out):
        return out if hasattr(out, "shape") else out.pooler_output

    def forward(self, images):
        import torch

        images = self._check_batch(images)
        x = torch.as_tensor(images, dtype=self._dtype, device=self.spec.device).permute(0, 3, 1, 2)
        x.requires_grad_(True)
        feats = self._features(self.model.get_image_features(pixel_values=(x - self._mean) / self._std))

        def backward(dfeat: np.ndarray) -> np.ndarray:
            g = torch.as_tensor(np.asarray(dfeat), dtype=feats.dtype, device=feats.device)
            (gx,) = torch.autograd.grad(feats, x, grad_outputs=g, retain_graph=True)
            return gx.permute(0, 2, 3, 1).detach().cpu().numpy().astype(np.float64)

        return feats.detach().cpu().numpy().astype(np.float64), backward

    def text_embed(self, prompt: str) -> np.ndarray:
        import torch

        ids = self.tokenizer(prompt)["input_ids"]
        if len(ids) > self.context_length:
            raise ValueError(f"prompt is {len(ids)} tokens, context holds {self.context_length}")
        with torch.no_grad():
            t = torch.tensor([ids], device=self.spec.device)
            feats = self._features(self.model.get_text_features(input_ids=t))
        return normalize(feats[0].cpu().numpy().astype(np.float64))


def load_clip(spec: ClipModelSpec) -> ClipEncoder:
    """Load a CLIP checkpoint and check it against ``spec``."""
    if not available():
        raise RuntimeError("the CLIP backend needs torch and transformers installed")
    import torch
    from transformers import CLIPModel, CLIPTokenizer

    path = spec.resolved_path()
    config_file = path / "config.json"
    if not config_file.is_file():
        raise FileNotFoundError(f"no CLIP checkpoint at {path} (config.json missing)")
    config = json.loads(config_file.read_text())
    if "CLIPModel" not in config.get("architectures", ["CLIPModel"]):
        raise ValueError(f"{path}: manifest names {config.get('architectures')}, expected CLIPModel")
    try:
        model = CLIPModel.from_pretrained(path, dtype=getattr(torch, spec.dtype))
        tokenizer = CLIPTokenizer.from_pretrained(path)
    except Exception as exc:  # noqa: BLE001 - safetensors and torch raise assorted types on bad archives
        raise ValueError(f"{path}: cannot load CLIP weights ({exc})") from exc
    model.to(spec.device).eval()
    for p in model.parameters():
        p.requires_grad_(False)

    vision = model.config.vision_config
    expected_patch = _patch_size(spec.architecture)
    if expected_patch is not None and vision.patch_size != expected_patch:
        raise ValueError(f"{path}: patch size {vision.patch_size} does not match {spec.architecture}")
    if vision.image_size != spec.input_size:
        raise ValueError(f"{path}: image size {vision.image_size} != declared input size {spec.input_size}")
    if model.config.projection_dim != spec.embed_dim:
        raise ValueError(f"{path}: embedding dim {model.config.projection_dim} != declared {spec.embed_dim}")

    mean, std = spec.mean, spec.std
    pre = path / "preprocessor_config.json"
    if (mean is None or std is None) and pre.is_file():
        cfg = json.loads(pre.read_text())
        mean = mean or tuple(cfg.get("image_mean", CLIP_MEAN))
        std = std or tuple(cfg.get("image_std", CLIP_STD))
    return ClipEncoder(spec, model, tokenizer, mean or CLIP_MEAN, std or CLIP_STD)
