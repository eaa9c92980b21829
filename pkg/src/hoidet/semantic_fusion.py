"""Fusion of retrieved triplet candidates into one semantic query vector.

Verb, object, and whole-triplet word embeddings of the K retrieved
candidates are fused through a small attention block and reduced to a
single vector that seeds the interaction queries. All operations accept
an optional leading batch dimension; shapes below are written for the
single-instance case.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .vocabulary import HOIVocabulary


class WordEmbeddingTables(nn.Module):
    """Learnable verb / object / triplet embedding rows."""

    def __init__(self, num_verbs: int, num_objects: int, num_hoi: int, word_dim: int):
        super().__init__()
        self.verb_table = nn.Embedding(num_verbs, word_dim)
        self.object_table = nn.Embedding(num_objects, word_dim)
        self.hoi_table = nn.Embedding(num_hoi, word_dim)

    def load_rows(self, verb_rows: Tensor, object_rows: Tensor, hoi_rows: Tensor,
                  freeze: bool = False) -> None:
        with torch.no_grad():
            self.verb_table.weight.copy_(verb_rows)
            self.object_table.weight.copy_(object_rows)
            self.hoi_table.weight.copy_(hoi_rows)
        if freeze:
            for p in self.parameters():
                p.requires_grad_(False)


def two_layer_mlp(d_in: int, d_hidden: int, d_out: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(d_in, d_hidden), nn.GELU(), nn.Linear(d_hidden, d_out))


class SemanticFusion(nn.Module):
    """Attention-style fusion of K candidate embeddings into one vector."""

    def __init__(self, word_dim: int, channels: int,
                 attention_weight_shape: str = "vector", k_candidates: int = 0):
        super().__init__()
        self.mlp_vo = two_layer_mlp(2 * word_dim, word_dim, word_dim)
        self.mlp_hoi = two_layer_mlp(word_dim, word_dim, word_dim)
        self.mlp_out = two_layer_mlp(word_dim, word_dim, channels)
        if attention_weight_shape == "vector":
            self.attn_weight = nn.Parameter(torch.ones(word_dim))
        elif attention_weight_shape == "matrix":
            if k_candidates < 1:
                raise ValueError("matrix attention weights need the candidate count")
            self.attn_weight = nn.Parameter(torch.ones(k_candidates, word_dim))
        else:
            raise ValueError(f"unknown attention weight shape {attention_weight_shape!r}")

    def fuse_vo(self, t_verb: Tensor, t_obj: Tensor) -> Tensor:
        """(K, C_k) x 2 -> (K, C_k), verb-then-object concatenation."""
        return self.mlp_vo(torch.cat((t_verb, t_obj), dim=-1))

    def project_hoi(self, t_hoi: Tensor) -> Tensor:
        return self.mlp_hoi(t_hoi)

    def correlation(self, t_vo: Tensor, t_hoi_hat: Tensor) -> Tensor:
        """(w ⊙ t_vo) · t_hoi_hatᵀ -> (K, K)."""
        return (self.attn_weight * t_vo) @ t_hoi_hat.transpose(-2, -1)

    @staticmethod
    def reweight(corr: Tensor, t_vo: Tensor) -> Tensor:
        """Row-softmax the correlation, then mix the fused rows with it."""
        return torch.softmax(corr, dim=-1) @ t_vo

    @staticmethod
    def fuse_final(t_vo_hat: Tensor, t_hoi_hat: Tensor) -> Tensor:
        return t_vo_hat * t_hoi_hat

    def aggregate(self, fused: Tensor) -> Tensor:
        """Sum over the candidate axis, then project C_k -> C'."""
        return self.mlp_out(fused.sum(dim=-2))

    def forward(self, t_verb: Tensor, t_obj: Tensor, t_hoi: Tensor) -> Tensor:
        t_vo = self.fuse_vo(t_verb, t_obj)
        t_hoi_hat = self.project_hoi(t_hoi)
        corr = self.correlation(t_vo, t_hoi_hat)
        t_vo_hat = self.reweight(corr, t_vo)
        fused = self.fuse_final(t_vo_hat, t_hoi_hat)
        return self.aggregate(fused)


def embed_candidates(hoi_ids: Tensor, tables: WordEmbeddingTables,
                     vocabulary: HOIVocabulary) -> tuple[Tensor, Tensor, Tensor]:
    """Look up verb / object / triplet rows for candidate hoi ids (..., K)."""
    if hoi_ids.numel() and (hoi_ids.min() < 0 or hoi_ids.max() >= vocabulary.num_hoi):
        raise ValueError("candidate hoi id out of vocabulary range")
    device = tables.hoi_table.weight.device
    verb_index = torch.as_tensor(vocabulary.verb_index, device=device)
    object_index = torch.as_tensor(vocabulary.object_index, device=device)
    t_verb = tables.verb_table(verb_index[hoi_ids])
    t_obj = tables.object_table(object_index[hoi_ids])
    t_hoi = tables.hoi_table(hoi_ids)
    return t_verb, t_obj, t_hoi


def fuse_candidates(hoi_ids: Tensor, tables: WordEmbeddingTables,
                    fusion: SemanticFusion, vocabulary: HOIVocabulary) -> Tensor:
    """Full pipeline: candidate ids (..., K) -> semantic feature (..., C')."""
    t_verb, t_obj, t_hoi = embed_candidates(hoi_ids, tables, vocabulary)
    return fusion(t_verb, t_obj, t_hoi)
