"""Ground-truth assignment: pair-wise matching cost plus the Hungarian solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment
from torch import Tensor

from .box_ops import generalized_iou_pairwise


@dataclass
class Assignment:
    """Injective query -> ground-truth pairing; unmatched queries are background."""

    pairs: list[tuple[int, int]]

    def query_indices(self) -> list[int]:
        return [q for q, _ in self.pairs]

    def gt_indices(self) -> list[int]:
        return [g for _, g in self.pairs]


def focal_class_cost(probs: Tensor, multi_hot: Tensor,
                     alpha: float = 0.25, gamma: float = 2.0,
                     eps: float = 1e-8) -> Tensor:
    """Focal-style matching cost between (n, C) probabilities and (m, C) targets.

    For each (prediction, target) pair the cost averages, over the
    target's positive labels, the focal positive term minus the focal
    negative term.
    """
    pos = alpha * (1 - probs) ** gamma * (-(probs + eps).log())
    neg = (1 - alpha) * probs ** gamma * (-(1 - probs + eps).log())
    per_label = pos - neg                      # (n, C)
    targets = multi_hot.to(per_label.dtype)    # (m, C)
    num_pos = targets.sum(dim=-1).clamp(min=1)
    return per_label @ targets.T / num_pos


@torch.no_grad()
def build_cost_matrix(pred_human_boxes: Tensor, pred_object_boxes: Tensor,
                      object_probs: Tensor, hoi_probs: Tensor,
                      gt_human_boxes: Tensor, gt_object_boxes: Tensor,
                      gt_object_class: Tensor, gt_hoi_multi_hot: Tensor,
                      lambda_box: float, lambda_iou: float,
                      lambda_class_object: float, lambda_class_interaction: float,
                      focal_alpha: float = 0.25, focal_gamma: float = 2.0) -> np.ndarray:
    """(num_queries, num_gts) matching cost for one image."""
    l1_h = torch.cdist(pred_human_boxes, gt_human_boxes, p=1)
    l1_o = torch.cdist(pred_object_boxes, gt_object_boxes, p=1)
    giou_h = 1 - generalized_iou_pairwise(pred_human_boxes, gt_human_boxes)
    giou_o = 1 - generalized_iou_pairwise(pred_object_boxes, gt_object_boxes)
    class_cost = -object_probs[:, gt_object_class]
    inter_cost = focal_class_cost(hoi_probs, gt_hoi_multi_hot,
                                  alpha=focal_alpha, gamma=focal_gamma)
    cost = (
        lambda_box * (l1_h + l1_o)
        + lambda_iou * (giou_h + giou_o)
        + lambda_class_object * class_cost
        + lambda_class_interaction * inter_cost
    )
    out = cost.cpu().numpy()
    if not np.isfinite(out).all():
        raise ValueError("cost matrix contains non-finite entries")
    return out


def hungarian(cost: np.ndarray) -> Assignment:
    """Globally minimal injective assignment of queries to ground truths."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    pairs = sorted(zip(rows.tolist(), cols.tolist()))
    return Assignment(pairs=pairs)
