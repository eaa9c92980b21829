"""Write-once cache of provider embeddings.

A cache directory holds manifest.json plus two raw little-endian float32
payloads: text_embeddings.bin (num_labels x dim, row per label) and
image_embeddings.bin (num_images x dim, row per image id). Everything is
validated on load; the training loop never calls a provider directly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocabulary import HOIVocabulary

CACHE_FORMAT_VERSION = 1
TEXT_FILE = "text_embeddings.bin"
IMAGE_FILE = "image_embeddings.bin"


def _labels_digest(labels: list[str]) -> str:
    h = hashlib.sha256()
    for label in labels:
        h.update(label.encode())
        h.update(b"\x00")
    return h.hexdigest()


@dataclass
class EmbeddingCache:
    provider_id: str
    dim: int
    labels: list[str]
    image_ids: list[str]
    text: np.ndarray    # (num_labels, dim) float32
    image: np.ndarray   # (num_images, dim) float32

    def text_matrix(self) -> np.ndarray:
        """(dim, num_labels) layout used by the similarity op."""
        return self.text.T

    def image_vector(self, image_id: str) -> np.ndarray:
        return self.image[self.image_ids.index(image_id)]


def build_cache(annotations, vocabulary: HOIVocabulary, provider,
                out_dir: str | Path) -> EmbeddingCache:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = vocabulary.text_labels()
    text = np.ascontiguousarray(provider.text_embed(labels).T, dtype="<f4")
    image_ids = [ann.image_id for ann in annotations]
    image = np.stack([provider.image_embed(ann) for ann in annotations]).astype("<f4")
    if text.shape[1] != image.shape[1]:
        raise ValueError("provider returned inconsistent embedding widths")
    manifest = {
        "format_version": CACHE_FORMAT_VERSION,
        "provider_id": provider.provider_id,
        "dim": int(text.shape[1]),
        "labels_sha256": _labels_digest(labels),
        "num_labels": len(labels),
        "image_ids": image_ids,
        "files": {"text": TEXT_FILE, "image": IMAGE_FILE},
    }
    (out_dir / TEXT_FILE).write_bytes(text.tobytes())
    (out_dir / IMAGE_FILE).write_bytes(image.tobytes())
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return EmbeddingCache(provider_id=provider.provider_id, dim=manifest["dim"],
                          labels=labels, image_ids=image_ids, text=text, image=image)


def load_cache(cache_dir: str | Path, vocabulary: HOIVocabulary,
               expected_dim: int | None = None) -> EmbeddingCache:
    cache_dir = Path(cache_dir)
    with open(cache_dir / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != CACHE_FORMAT_VERSION:
        raise ValueError(f"unsupported cache format version: {manifest.get('format_version')!r}")
    labels = vocabulary.text_labels()
    if manifest["labels_sha256"] != _labels_digest(labels):
        raise ValueError("cache was built for a different label set")
    dim = manifest["dim"]
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"cache dim {dim} does not match expected {expected_dim}")
    text = np.frombuffer((cache_dir / manifest["files"]["text"]).read_bytes(),
                         dtype="<f4").reshape(manifest["num_labels"], dim)
    image_ids = manifest["image_ids"]
    image = np.frombuffer((cache_dir / manifest["files"]["image"]).read_bytes(),
                          dtype="<f4").reshape(len(image_ids), dim)
    return EmbeddingCache(provider_id=manifest["provider_id"], dim=dim,
                          labels=labels, image_ids=image_ids,
                          text=text.copy(), image=image.copy())
