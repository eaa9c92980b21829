"""Prediction heads and score combination."""

from __future__ import annotations

import numpy as np
import torch
from torch import Tensor, nn

from .vocabulary import HOIVocabulary


class BoxHead(nn.Module):
    """3-layer feed-forward box regressor, sigmoid cxcywh output."""

    def __init__(self, channels: int):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(channels, channels), nn.ReLU(),
            nn.Linear(channels, channels), nn.ReLU(),
            nn.Linear(channels, 4),
        )

    def forward(self, features: Tensor) -> Tensor:
        return self.layers(features).sigmoid()


class PredictionHeads(nn.Module):
    """Box regressors plus object / interaction / verb classifiers.

    Classifier outputs here are raw logits; activations are applied by
    the probability helpers below so losses can stay on logits.
    """

    def __init__(self, channels: int, num_objects: int, num_hoi: int,
                 num_verbs: int, use_verb_head: bool = True):
        super().__init__()
        self.human_box = BoxHead(channels)
        self.object_box = BoxHead(channels)
        self.object_class = nn.Linear(channels, num_objects + 1)
        self.interaction_class = nn.Linear(channels, num_hoi)
        self.verb_class = nn.Linear(channels, num_verbs) if use_verb_head else None


def object_probabilities(object_logits: Tensor) -> Tensor:
    """Softmax with background; returns the foreground slice (sums to <= 1)."""
    return object_logits.softmax(dim=-1)[..., :-1]


def multilabel_probabilities(logits: Tensor) -> Tensor:
    return logits.sigmoid()


def combine_hoi(s_inter: np.ndarray, s_verb: np.ndarray | None, alpha: float,
                vocabulary: HOIVocabulary) -> np.ndarray:
    """Add alpha-weighted verb scores onto interaction scores per category.

    Verb scores broadcast through the composition table: category n picks
    up the score of its own verb. A missing verb stream leaves the
    interaction scores untouched.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    s_inter = np.asarray(s_inter, dtype=np.float64)
    if s_verb is None:
        return s_inter.copy()
    s_verb = np.asarray(s_verb, dtype=np.float64)
    return s_inter + alpha * s_verb[..., vocabulary.verb_index]


def combine_hoi_tensor(s_inter: Tensor, s_verb: Tensor | None, alpha: float,
                       verb_index: Tensor) -> Tensor:
    if s_verb is None:
        return s_inter
    return s_inter + alpha * s_verb[..., verb_index]
