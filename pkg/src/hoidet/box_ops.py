"""Box geometry shared by post-processing, matching, and evaluation.

Boxes are normalized center format (cx, cy, w, h) unless a function says
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import Tensor


@dataclass(frozen=True)
class Box:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        values = (self.cx, self.cy, self.w, self.h)
        if not all(np.isfinite(values)):
            raise ValueError("box coordinates must be finite")
        if self.w < 0 or self.h < 0:
            raise ValueError("box width and height must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


def to_corners(boxes: np.ndarray) -> np.ndarray:
    """cxcywh -> xyxy, any leading shape."""
    boxes = np.asarray(boxes, dtype=np.float64)
    half = boxes[..., 2:] / 2
    return np.concatenate((boxes[..., :2] - half, boxes[..., :2] + half), axis=-1)


def iou(a, b) -> float:
    """IoU of two cxcywh boxes (Box instances or length-4 arrays)."""
    a = a.as_array() if isinstance(a, Box) else np.asarray(a, dtype=np.float64)
    b = b.as_array() if isinstance(b, Box) else np.asarray(b, dtype=np.float64)
    ax0, ay0, ax1, ay1 = to_corners(a)
    bx0, by0, bx1, by1 = to_corners(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) cxcywh arrays -> (n, m)."""
    ca = to_corners(np.asarray(a, dtype=np.float64))
    cb = to_corners(np.asarray(b, dtype=np.float64))
    lt = np.maximum(ca[:, None, :2], cb[None, :, :2])
    rb = np.minimum(ca[:, None, 2:], cb[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (ca[:, 2] - ca[:, 0]) * (ca[:, 3] - ca[:, 1])
    area_b = (cb[:, 2] - cb[:, 0]) * (cb[:, 3] - cb[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def torch_to_corners(boxes: Tensor) -> Tensor:
    half = boxes[..., 2:] / 2
    return torch.cat((boxes[..., :2] - half, boxes[..., :2] + half), dim=-1)


def generalized_iou(pred: Tensor, target: Tensor, eps: float = 1e-9) -> Tensor:
    """Elementwise GIoU of matching (n, 4) cxcywh tensors, differentiable."""
    p = torch_to_corners(pred)
    t = torch_to_corners(target)
    lt = torch.maximum(p[..., :2], t[..., :2])
    rb = torch.minimum(p[..., 2:], t[..., 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    area_p = (p[..., 2] - p[..., 0]) * (p[..., 3] - p[..., 1])
    area_t = (t[..., 2] - t[..., 0]) * (t[..., 3] - t[..., 1])
    union = area_p + area_t - inter
    iou_term = inter / (union + eps)
    hull_lt = torch.minimum(p[..., :2], t[..., :2])
    hull_rb = torch.maximum(p[..., 2:], t[..., 2:])
    hull_wh = (hull_rb - hull_lt).clamp(min=0)
    hull = hull_wh[..., 0] * hull_wh[..., 1]
    return iou_term - (hull - union) / (hull + eps)


def generalized_iou_pairwise(pred: Tensor, target: Tensor, eps: float = 1e-9) -> Tensor:
    """GIoU between every (n, 4) prediction and every (m, 4) target -> (n, m)."""
    return generalized_iou(pred[:, None, :], target[None, :, :], eps=eps)
