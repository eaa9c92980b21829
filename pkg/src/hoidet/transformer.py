"""Pre-norm transformer encoder and decoder stacks.

Conventions follow the detection-transformer family: positional encodings
are added to queries and keys only (never to values), decoder queries are
content embeddings, and per-layer decoder outputs are kept for auxiliary
supervision. Cross-attention weights can be captured for visualization.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn


class FeedForward(nn.Module):
    def __init__(self, channels: int, hidden_scale: int, dropout: float):
        super().__init__()
        self.linear1 = nn.Linear(channels, channels * hidden_scale)
        self.linear2 = nn.Linear(channels * hidden_scale, channels)
        self.dropout = nn.Dropout(dropout)
        self.act = nn.GELU()

    def forward(self, x: Tensor) -> Tensor:
        return self.linear2(self.dropout(self.act(self.linear1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, channels: int, num_heads: int, hidden_scale: int, dropout: float):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(channels, num_heads, dropout=dropout,
                                               batch_first=True)
        self.norm1 = nn.LayerNorm(channels)
        self.norm2 = nn.LayerNorm(channels)
        self.ffn = FeedForward(channels, hidden_scale, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor, pos: Tensor) -> Tensor:
        y = self.norm1(x)
        qk = y + pos
        attn, _ = self.self_attn(qk, qk, y, need_weights=False)
        x = x + self.dropout(attn)
        y = self.norm2(x)
        return x + self.dropout(self.ffn(y))


class Encoder(nn.Module):
    """Refines flattened visual tokens; output shape equals input shape."""

    def __init__(self, channels: int, num_heads: int, num_layers: int,
                 hidden_scale: int = 4, dropout: float = 0.0):
        super().__init__()
        self.layers = nn.ModuleList(
            EncoderLayer(channels, num_heads, hidden_scale, dropout)
            for _ in range(num_layers)
        )

    def forward(self, tokens: Tensor, pos: Tensor) -> Tensor:
        if not torch.isfinite(tokens).all():
            raise ValueError("encoder input contains non-finite values")
        x = tokens
        for layer in self.layers:
            x = layer(x, pos)
        return x


class DecoderLayer(nn.Module):
    def __init__(self, channels: int, num_heads: int, hidden_scale: int, dropout: float):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(channels, num_heads, dropout=dropout,
                                               batch_first=True)
        self.cross_attn = nn.MultiheadAttention(channels, num_heads, dropout=dropout,
                                                batch_first=True)
        self.norm1 = nn.LayerNorm(channels)
        self.norm2 = nn.LayerNorm(channels)
        self.norm3 = nn.LayerNorm(channels)
        self.ffn = FeedForward(channels, hidden_scale, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor, memory: Tensor, mem_pos: Tensor,
                capture: bool = False) -> tuple[Tensor, Tensor | None]:
        y = self.norm1(x)
        attn, _ = self.self_attn(y, y, y, need_weights=False)
        x = x + self.dropout(attn)
        y = self.norm2(x)
        cross, weights = self.cross_attn(
            y, memory + mem_pos, memory,
            need_weights=capture, average_attn_weights=False,
        )
        x = x + self.dropout(cross)
        y = self.norm3(x)
        x = x + self.dropout(self.ffn(y))
        return x, weights


class Decoder(nn.Module):
    """Stack of decoder layers; keeps every layer's output for aux losses."""

    def __init__(self, channels: int, num_heads: int, num_layers: int,
                 hidden_scale: int = 4, dropout: float = 0.0):
        super().__init__()
        self.layers = nn.ModuleList(
            DecoderLayer(channels, num_heads, hidden_scale, dropout)
            for _ in range(num_layers)
        )

    def forward(self, queries: Tensor, memory: Tensor, mem_pos: Tensor,
                capture: bool = False) -> tuple[Tensor, list[Tensor] | None]:
        """queries (B, N, C') -> stacked per-layer outputs (L, B, N, C')."""
        x = queries
        outputs = []
        attn_maps: list[Tensor] = []
        for layer in self.layers:
            x, weights = layer(x, memory, mem_pos, capture=capture)
            outputs.append(x)
            if capture:
                attn_maps.append(weights)
        return torch.stack(outputs), attn_maps if capture else None


def instance_decode(decoder: Decoder, memory: Tensor, mem_pos: Tensor,
                    q_human: Tensor, q_object: Tensor,
                    capture: bool = False):
    """Run the paired human/object streams through one decoder.

    The two query sets are concatenated so self-attention ties query i of
    the human stream to query i of the object stream; outputs are split
    back per stream. Returns (v_human, v_object) of shape (L, B, N, C')
    and, when capture is set, per-layer cross-attention weights over the
    concatenated 2N queries.
    """
    if q_human.shape != q_object.shape:
        raise ValueError("human and object query sets must have identical shapes")
    n = q_human.shape[-2]
    joint = torch.cat((q_human, q_object), dim=-2)
    out, attn = decoder(joint, memory, mem_pos, capture=capture)
    return out[..., :n, :], out[..., n:, :], attn


def build_interaction_queries(v_human_last: Tensor, v_object_last: Tensor,
                              q_i: Tensor, mode: str = "mean3"):
    """Combine last-layer pair features with the repeated semantic vector.

    q_i is a per-image vector (B, C') broadcast across queries. mean3
    averages all three participants; mean2_plus averages the pair streams
    and adds the semantic term on top.
    """
    if q_i.dim() != 2 or q_i.shape[-1] != v_human_last.shape[-1]:
        raise ValueError("q_i must be (B, C') matching the decoder width")
    q_repeat = q_i[:, None, :].expand_as(v_human_last)
    if mode == "mean3":
        q_inter = (v_human_last + v_object_last + q_repeat) / 3.0
    elif mode == "mean2_plus":
        q_inter = (v_human_last + v_object_last) / 2.0 + q_repeat
    else:
        raise ValueError(f"unknown interaction query mode {mode!r}")
    return q_inter, q_repeat


def apply_skip(v_inter_layer: Tensor, q_repeat: Tensor) -> Tensor:
    """Skip connection feeding the interaction and verb classifiers."""
    return v_inter_layer + q_repeat
