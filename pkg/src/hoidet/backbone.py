"""Toy visual front end: strided patch embedding plus fixed 2-D sinusoidal positions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn


@dataclass
class FeatureMap:
    """Flattened per-token features and their positional encoding."""

    tokens: Tensor  # (H*W, C')
    pos: Tensor     # (H*W, C')
    height: int
    width: int

    def __post_init__(self):
        if self.tokens.shape != self.pos.shape:
            raise ValueError("tokens and pos must have identical shapes")
        if self.tokens.shape[0] != self.height * self.width:
            raise ValueError("token count does not match height * width")
        if not torch.isfinite(self.tokens).all() or not torch.isfinite(self.pos).all():
            raise ValueError("feature map contains non-finite entries")


@dataclass
class EncodedFeatures:
    tokens: Tensor  # (H*W, C')
    height: int
    width: int


def sinusoidal_positions(height: int, width: int, channels: int,
                         temperature: float = 10000.0,
                         dtype=torch.float32) -> Tensor:
    """Fixed 2-D sine/cosine grid encoding, flattened row-major to (H*W, C).

    Half the channels encode the y coordinate, half the x coordinate.
    """
    if channels % 4 != 0:
        raise ValueError("channels must be divisible by 4")
    half = channels // 2
    freq = torch.arange(half // 2, dtype=dtype)
    inv = 1.0 / temperature ** (2 * freq / half)
    ys = torch.arange(height, dtype=dtype)[:, None] * inv[None, :]  # (H, half/2)
    xs = torch.arange(width, dtype=dtype)[:, None] * inv[None, :]   # (W, half/2)

    def interleave(angles: Tensor) -> Tensor:
        return torch.stack((angles.sin(), angles.cos()), dim=-1).flatten(-2)

    pos_y = interleave(ys)[:, None, :].expand(height, width, half)
    pos_x = interleave(xs)[None, :, :].expand(height, width, half)
    return torch.cat((pos_y, pos_x), dim=-1).reshape(height * width, channels)


class PatchEmbedder(nn.Module):
    """Non-overlapping strided linear projection of image patches."""

    def __init__(self, channels: int, patch_size: int, image_channels: int = 3):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv2d(image_channels, channels, kernel_size=patch_size,
                              stride=patch_size)

    def forward(self, images: Tensor) -> tuple[Tensor, Tensor, int, int]:
        """images (B, C_img, H_img, W_img) -> tokens (B, H*W, C'), pos (H*W, C')."""
        if images.dim() != 4:
            raise ValueError("expected a batched image tensor (B, C, H, W)")
        _, _, h_img, w_img = images.shape
        if h_img % self.patch_size or w_img % self.patch_size:
            raise ValueError(
                f"image size {h_img}x{w_img} not divisible by patch size {self.patch_size}"
            )
        grid = self.proj(images)                    # (B, C', H, W)
        b, c, h, w = grid.shape
        tokens = grid.flatten(2).transpose(1, 2)    # (B, H*W, C')
        pos = sinusoidal_positions(h, w, c, dtype=tokens.dtype).to(tokens.device)
        return tokens, pos, h, w


def extract_features(image: Tensor, embedder: PatchEmbedder) -> FeatureMap:
    """Single-image wrapper around the embedder."""
    if image.dim() != 3:
        raise ValueError("expected a single image tensor (C, H, W)")
    tokens, pos, h, w = embedder(image[None])
    return FeatureMap(tokens=tokens[0], pos=pos, height=h, width=w)


def token_centers(height: int, width: int) -> Tensor:
    """Normalized (x, y) centers of the token grid cells, shape (H*W, 2)."""
    ys = (torch.arange(height, dtype=torch.float32) + 0.5) / height
    xs = (torch.arange(width, dtype=torch.float32) + 0.5) / width
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack((grid_x.flatten(), grid_y.flatten()), dim=-1)
