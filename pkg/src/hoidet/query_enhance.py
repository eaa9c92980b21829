"""Object query enhancement.

Encoder tokens are scored by a per-token object classifier (fed a
gradient-stopped copy of the tokens), the best-scoring tokens are
selected, and their features are added elementwise to the initial object
queries. The classifier is trained with a cross-entropy loss whose
gradient must never reach encoder parameters; the selected features are
taken from the live tokens so the interaction losses do reach the
encoder through them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
from torch import Tensor, nn


@dataclass
class TokenObjectScores:
    logits: Tensor          # (B, H*W, num_objects + 1), background last
    detached_input: bool


@dataclass
class SelectedFeatures:
    indices: Tensor   # (B, N) token indices, best first
    features: Tensor  # (B, N, C')


class TokenObjectClassifier(nn.Module):
    """Linear per-token object classifier with a background class."""

    def __init__(self, channels: int, num_objects: int):
        super().__init__()
        self.linear = nn.Linear(channels, num_objects + 1)
        self.num_objects = num_objects

    def forward(self, enc_tokens: Tensor) -> TokenObjectScores:
        return score_tokens(enc_tokens, self.linear)


def score_tokens(enc_tokens: Tensor, classifier: nn.Linear) -> TokenObjectScores:
    """Score every encoder token; the classifier sees a detached copy."""
    logits = classifier(enc_tokens.detach())
    return TokenObjectScores(logits=logits, detached_input=True)


def selection_scores(scores: TokenObjectScores, mode: str = "max_logit") -> Tensor:
    """Per-token selection score over foreground classes only."""
    foreground = scores.logits[..., :-1]
    if mode == "max_logit":
        return foreground.max(dim=-1).values
    if mode == "softmax_max":
        return scores.logits.softmax(dim=-1)[..., :-1].max(dim=-1).values
    raise ValueError(f"unknown token selection mode {mode!r}")


def select_top_n(scores: TokenObjectScores, enc_tokens: Tensor, n: int,
                 mode: str = "max_logit") -> SelectedFeatures:
    """Pick the n best-scoring tokens, features from the live (non-detached) tokens.

    Ties break toward the lower token index.
    """
    per_token = selection_scores(scores, mode)
    num_tokens = per_token.shape[-1]
    if n > num_tokens:
        raise ValueError(f"cannot select {n} of {num_tokens} tokens")
    order = torch.argsort(-per_token, dim=-1, stable=True)[..., :n]
    gathered = torch.gather(
        enc_tokens, -2, order.unsqueeze(-1).expand(*order.shape, enc_tokens.shape[-1])
    )
    return SelectedFeatures(indices=order, features=gathered)


def enhance_object_queries(q_object_init: Tensor, selected: SelectedFeatures) -> Tensor:
    """Elementwise add: ranked feature k boosts object query k."""
    if q_object_init.shape[-2:] != selected.features.shape[-2:]:
        raise ValueError(
            f"selected features {tuple(selected.features.shape)} do not match "
            f"object queries {tuple(q_object_init.shape)}"
        )
    return q_object_init + selected.features


def classifier_targets(instances, height: int, width: int, num_objects: int) -> Tensor:
    """Per-token class targets for the token classifier.

    A token takes the class of the smallest groundInstance object box whose
    interior contains the token center; uncovered tokens get the
    background class (index num_objects). Boxes are normalized cxcywh.
    """
    from .backbone import token_centers

    centers = token_centers(height, width)  # (H*W, 2) as (x, y)
    targets = torch.full((height * width,), num_objects, dtype=torch.long)
    best_area = torch.full((height * width,), float("inf"))
    for inst in instances:
        cx, cy, w, h = inst.object_box
        if w <= 0 or h <= 0:
            warnings.warn(f"skipping degenerate object box {inst.object_box}")
            continue
        inside = (
            (centers[:, 0] >= cx - w / 2) & (centers[:, 0] <= cx + w / 2)
            & (centers[:, 1] >= cy - h / 2) & (centers[:, 1] <= cy + h / 2)
        )
        area = float(w) * float(h)
        take = inside & (area < best_area)
        targets[take] = inst.object_class
        best_area[take] = area
    return targets
