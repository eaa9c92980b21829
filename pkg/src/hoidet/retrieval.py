"""Image-text retrieval of triplet candidates and similarity-based scoring.

An embedding provider maps the whole image and every composition label
to L2-normalized vectors; inner products between them give per-category
similarities from which candidates are drawn. A deterministic mock
provider stands in for a real image-text encoder: its image vectors are
noisy means of the ground-truth label vectors, so retrieval genuinely
ranks the right categories high without any network weights.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .vocabulary import HOIVocabulary


@dataclass
class CandidateSet:
    hoi_ids: np.ndarray        # (K,) int64, best first
    similarities: np.ndarray   # (K,) descending
    texts: list[str]


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def text_embed(self, labels: Sequence[str]) -> np.ndarray:
        """-> (D, N) with unit-norm columns."""

    def image_embed(self, annotation, image: np.ndarray | None = None) -> np.ndarray:
        """-> (D,) unit-norm vector for one image."""


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def _rng_for(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


class MockEmbeddingProvider:
    """Deterministic stand-in for a frozen image-text encoder.

    Text vectors are unit pseudo-random, keyed by (seed, label). Image
    vectors are the unit-normalized noisy mean of the text vectors of the
    image's ground-truth composition labels; images without any labels
    fall back to pure noise.
    """

    def __init__(self, vocabulary: HOIVocabulary, seed: int = 0,
                 noise: float = 0.1, dim: int = 64):
        self.vocabulary = vocabulary
        self.seed = seed
        self.noise = noise
        self.dim = dim
        self.provider_id = f"mock-seed{seed}-noise{noise}-d{dim}"
        self._labels = vocabulary.text_labels()

    def text_embed(self, labels: Sequence[str]) -> np.ndarray:
        columns = [
            _unit(_rng_for("text", self.seed, label).standard_normal(self.dim))
            for label in labels
        ]
        return np.stack(columns, axis=1).astype(np.float32)

    def image_embed(self, annotation, image: np.ndarray | None = None) -> np.ndarray:
        gt_ids = sorted({
            hoi_id
            for inst in annotation.instances
            for hoi_id in np.flatnonzero(inst.hoi_multi_hot)
        })
        rng = _rng_for("image", self.seed, annotation.image_id)
        noise_vec = _unit(rng.standard_normal(self.dim))
        if not gt_ids:
            return noise_vec.astype(np.float32)
        text = self.text_embed([self._labels[i] for i in gt_ids])
        vec = text.mean(axis=1) + self.noise * noise_vec
        return _unit(vec).astype(np.float32)


def compute_similarity(v_c: np.ndarray, t_c: np.ndarray) -> np.ndarray:
    """Inner products t_cᵀ v_c; both sides are provider-normalized."""
    if v_c.ndim != 1 or t_c.ndim != 2 or t_c.shape[0] != v_c.shape[0]:
        raise ValueError(
            f"shape mismatch: image {v_c.shape} vs text {t_c.shape}"
        )
    return t_c.T @ v_c


def select_candidates(m_sim: np.ndarray, k: int, labels: Sequence[str],
                      seen_mask: np.ndarray | None = None) -> CandidateSet:
    """The k most similar eligible categories, ties resolved to lower id."""
    m_sim = np.asarray(m_sim, dtype=np.float64)
    eligible = np.ones(m_sim.shape[0], dtype=bool) if seen_mask is None else np.asarray(seen_mask, dtype=bool)
    if k > int(eligible.sum()):
        raise ValueError(f"k={k} exceeds {int(eligible.sum())} eligible categories")
    keyed = np.where(eligible, m_sim, -np.inf)
    order = np.argsort(-keyed, kind="stable")[:k]
    return CandidateSet(
        hoi_ids=order.astype(np.int64),
        similarities=m_sim[order],
        texts=[labels[i] for i in order],
    )


def training_free_scores(m_sim: np.ndarray, r: int, mode: str = "softmax") -> np.ndarray:
    """Normalized similarity, kept only for the r best-ranked categories.

    softmax mode normalizes over every category; minmax rescales to [0, 1].
    Entries outside the top r are zeroed. Ties at the boundary resolve to
    the lower category id.
    """
    m_sim = np.asarray(m_sim, dtype=np.float64)
    n = m_sim.shape[0]
    if r > n:
        raise ValueError("r exceeds the number of categories")
    if mode == "softmax":
        shifted = m_sim - m_sim.max()
        normalized = np.exp(shifted) / np.exp(shifted).sum()
    elif mode == "minmax":
        span = m_sim.max() - m_sim.min()
        normalized = np.zeros_like(m_sim) if span == 0 else (m_sim - m_sim.min()) / span
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    keep = np.argsort(-m_sim, kind="stable")[:r]
    out = np.zeros(n, dtype=np.float64)
    out[keep] = normalized[keep]
    return out


def candidate_coverage(annotations, vocabulary: HOIVocabulary, provider,
                       k: int, seen_mask: np.ndarray | None = None) -> float:
    """Fraction of ground-truth composition labels found in per-image top-k sets."""
    if not annotations:
        raise ValueError("coverage needs at least one annotated image")
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = vocabulary.text_labels()
    t_c = provider.text_embed(labels)
    total = 0
    covered = 0
    for ann in annotations:
        v_c = provider.image_embed(ann)
        m_sim = compute_similarity(v_c, t_c)
        cand = select_candidates(m_sim, k, labels, seen_mask=seen_mask)
        chosen = set(cand.hoi_ids.tolist())
        for inst in ann.instances:
            for hoi_id in np.flatnonzero(inst.hoi_multi_hot):
                total += 1
                covered += int(hoi_id) in chosen
    if total == 0:
        raise ValueError("dataset has no ground-truth composition labels")
    return covered / total
