"""Embedding backbones.

`clip-vit-b32` wraps the pre-trained vision-language model via transformers
(heavy deps, lazy-imported, downloads weights on first use). `hash` is a
deterministic stand-in that embeds content by seeding an RNG from its bytes;
it carries no semantics but exercises the full extraction pipeline offline,
and its output is byte-stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import warnings

import numpy as np

from .errors import FetchError, ParameterError


class HashBackbone:
    name = "hash"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _embed_bytes(self, blob: bytes) -> np.ndarray:
        digest = hashlib.sha256(blob).digest()
        seed = int.from_bytes(digest[:8], "little")
        gen = np.random.Generator(np.random.Philox(key=np.array(
            [seed, 0], dtype=np.uint64)))
        v = gen.standard_normal(self.dim)
        return (v / np.linalg.norm(v)).astype(np.float32)

    def encode_images(self, images) -> np.ndarray:
        return np.stack([self._embed_bytes(im.tobytes()) for im in images])

    def encode_texts(self, texts) -> np.ndarray:
        return np.stack([self._embed_bytes(t.encode("utf-8")) for t in texts])


class ClipBackbone:
    """Frozen CLIP; images are preprocessed with the model's own pipeline
    (deterministic resize + center crop at inference)."""

    name = "clip-vit-b32"
    model_id = "openai/clip-vit-base-patch32"

    def __init__(self, device: str | None = None, batch_size: int = 64):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as e:
            raise FetchError(
                "CLIP backbone needs torch and transformers: "
                "pip install 'tac-extractor[clip]'") from e
        self._torch = torch
        if device and device.startswith("cuda") and not torch.cuda.is_available():
            warnings.warn("CUDA requested but unavailable; falling back to CPU",
                          stacklevel=2)
            device = "cpu"
        self.device = device or ("cuda" if torch.cuda.is_available() else "cpu")
        self.batch_size = batch_size
        try:
            self.model = CLIPModel.from_pretrained(self.model_id).to(self.device)
            self.processor = CLIPProcessor.from_pretrained(self.model_id)
        except Exception as e:
            raise FetchError(
                f"could not fetch {self.model_id}; download it on a connected "
                f"machine with transformers' snapshot_download and point "
                f"HF_HOME at the cache ({e})") from e
        self.model.eval()
        self.dim = self.model.config.projection_dim

    def encode_images(self, images) -> np.ndarray:
        torch = self._torch
        out = []
        with torch.no_grad():
            for start in range(0, len(images), self.batch_size):
                batch = images[start:start + self.batch_size]
                inputs = self.processor(images=batch, return_tensors="pt")
                inputs = {k: v.to(self.device) for k, v in inputs.items()}
                feats = self.model.get_image_features(**inputs)
                out.append(feats.cpu().numpy())
        return np.concatenate(out).astype(np.float32)

    def encode_texts(self, texts) -> np.ndarray:
        torch = self._torch
        out = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                batch = list(texts[start:start + self.batch_size])
                inputs = self.processor(text=batch, return_tensors="pt",
                                        padding=True, truncation=True)
                inputs = {k: v.to(self.device) for k, v in inputs.items()}
                feats = self.model.get_text_features(**inputs)
                out.append(feats.cpu().numpy())
        return np.concatenate(out).astype(np.float32)


def get_backbone(name: str, device: str | None = None, dim: int = 64):
    if name == "hash":
        return HashBackbone(dim=dim)
    if name in ("clip-vit-b32", ClipBackbone.model_id):
        return ClipBackbone(device=device)
    raise ParameterError(f"unknown backbone {name!r}; "
                         "choose 'clip-vit-b32' or 'hash'")
