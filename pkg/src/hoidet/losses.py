"""Training objective: matched box / class losses, token-classifier CE,
and the embedding distillation term.

Box and classification terms are evaluated per decoder layer (auxiliary
supervision); by default every layer reuses the assignment computed from
the final layer's predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .box_ops import generalized_iou
from .config import ModelConfig
from .matching import Assignment, build_cost_matrix, hungarian
from .query_enhance import classifier_targets
from .vocabulary import HOIVocabulary


@dataclass
class TargetSet:
    """Per-image ground truth in tensor form."""

    human_boxes: Tensor      # (G, 4)
    object_boxes: Tensor     # (G, 4)
    object_class: Tensor     # (G,) long
    verb_multi_hot: Tensor   # (G, num_verbs) float
    hoi_multi_hot: Tensor    # (G, num_hoi) float
    token_labels: Tensor | None = None  # (H*W,) long


def build_targets(annotations, vocabulary: HOIVocabulary,
                  grid_h: int | None = None, grid_w: int | None = None,
                  dtype=torch.float32) -> list[TargetSet]:
    def stack(arrays, width) -> Tensor:
        if not arrays:
            return torch.zeros(0, width, dtype=dtype)
        return torch.as_tensor(np.stack(arrays), dtype=dtype)

    targets = []
    for ann in annotations:
        insts = ann.instances
        token_labels = None
        if grid_h is not None and grid_w is not None:
            token_labels = classifier_targets(insts, grid_h, grid_w,
                                              vocabulary.num_objects)
        targets.append(TargetSet(
            human_boxes=stack([inst.human_box for inst in insts], 4),
            object_boxes=stack([inst.object_box for inst in insts], 4),
            object_class=torch.as_tensor(
                [inst.object_class for inst in insts], dtype=torch.long),
            verb_multi_hot=stack([inst.verb_multi_hot for inst in insts],
                                 vocabulary.num_verbs),
            hoi_multi_hot=stack([inst.hoi_multi_hot for inst in insts],
                                vocabulary.num_hoi),
            token_labels=token_labels,
        ))
    return targets


def sigmoid_focal_loss(logits: Tensor, targets: Tensor,
                       alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Elementwise focal binary loss on logits."""
    probs = logits.sigmoid()
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p_t = probs * targets + (1 - probs) * (1 - targets)
    loss = ce * (1 - p_t) ** gamma
    if alpha >= 0:
        loss = loss * (alpha * targets + (1 - alpha) * (1 - targets))
    return loss


def loss_boxes(pred_human: Tensor, pred_object: Tensor,
               gt_human: Tensor, gt_object: Tensor) -> tuple[Tensor, Tensor]:
    """Mean L1 and mean (1 - GIoU) over matched boxes of both streams."""
    if pred_human.shape[0] == 0:
        zero = pred_human.sum() * 0.0
        return zero, zero.clone()
    num = 2 * pred_human.shape[0]
    l1 = (F.l1_loss(pred_human, gt_human, reduction="none").sum()
          + F.l1_loss(pred_object, gt_object, reduction="none").sum()) / num
    giou = ((1 - generalized_iou(pred_human, gt_human)).sum()
            + (1 - generalized_iou(pred_object, gt_object)).sum()) / num
    return l1, giou


def loss_classification(object_logits: Tensor, hoi_logits: Tensor,
                        verb_logits: Tensor | None,
                        assignments: list[Assignment],
                        targets: list[TargetSet],
                        num_objects: int,
                        focal_alpha: float = 0.25, focal_gamma: float = 2.0,
                        interaction_loss: str = "focal",
                        background_weight: float = 1.0) -> tuple[Tensor, Tensor]:
    """Object CE (background for unmatched) and multi-label interaction loss.

    The verb stream, when present, is folded into the interaction term
    with equal weight. The multi-label term sums over classes and
    normalizes by the matched-pair count; the CE term can down-weight
    the background class. Inputs are stacked per image: (B, N_q, C).
    """
    b, n_q, _ = object_logits.shape
    device = object_logits.device
    obj_target = torch.full((b, n_q), num_objects, dtype=torch.long, device=device)
    hoi_target = torch.zeros_like(hoi_logits)
    verb_target = torch.zeros_like(verb_logits) if verb_logits is not None else None
    num_matched = 0
    for i, (assign, tgt) in enumerate(zip(assignments, targets)):
        for q, g in assign.pairs:
            obj_target[i, q] = tgt.object_class[g]
            hoi_target[i, q] = tgt.hoi_multi_hot[g]
            if verb_target is not None:
                verb_target[i, q] = tgt.verb_multi_hot[g]
            num_matched += 1
    class_weights = torch.ones(num_objects + 1, dtype=object_logits.dtype,
                               device=device)
    class_weights[num_objects] = background_weight
    l_c_o = F.cross_entropy(object_logits.flatten(0, 1), obj_target.flatten(),
                            weight=class_weights)
    denom = max(num_matched, 1)

    def multilabel(logits: Tensor, target: Tensor) -> Tensor:
        if interaction_loss == "focal":
            per = sigmoid_focal_loss(logits, target, alpha=focal_alpha, gamma=focal_gamma)
        else:
            per = F.binary_cross_entropy_with_logits(logits, target, reduction="none")
        return per.sum() / denom

    l_c_a = multilabel(hoi_logits, hoi_target)
    if verb_logits is not None:
        l_c_a = l_c_a + multilabel(verb_logits, verb_target)
    return l_c_o, l_c_a


def loss_token_ce(token_logits: Tensor, token_labels: Tensor) -> Tensor:
    """Mean cross-entropy over every encoder token."""
    return F.cross_entropy(token_logits.flatten(0, -2), token_labels.flatten())


def loss_kd(projected: Tensor, v_c: Tensor) -> Tensor:
    """L1 distance per image between pooled projections and the image embedding."""
    return (projected - v_c).abs().sum(dim=-1).mean()


def assign_batch(human_boxes: Tensor, object_boxes: Tensor,
                 object_logits: Tensor, hoi_logits: Tensor,
                 targets: list[TargetSet], cfg: ModelConfig) -> list[Assignment]:
    """Hungarian assignment per image from one layer's predictions."""
    assignments = []
    for i, tgt in enumerate(targets):
        if tgt.human_boxes.shape[0] == 0:
            assignments.append(Assignment(pairs=[]))
            continue
        cost = build_cost_matrix(
            human_boxes[i], object_boxes[i],
            object_logits[i].softmax(dim=-1), hoi_logits[i].sigmoid(),
            tgt.human_boxes, tgt.object_boxes, tgt.object_class, tgt.hoi_multi_hot,
            lambda_box=cfg.lambda_box, lambda_iou=cfg.lambda_iou,
            lambda_class_object=cfg.lambda_class_object,
            lambda_class_interaction=cfg.lambda_class_interaction,
            focal_alpha=cfg.focal_alpha, focal_gamma=cfg.focal_gamma,
        )
        assignments.append(hungarian(cost))
    return assignments


def total_loss(outputs, targets: list[TargetSet], cfg: ModelConfig,
               v_c: Tensor | None = None) -> dict[str, Tensor]:
    """Weighted sum over decoder layers plus token CE and distillation.

    outputs is a network ForwardOutputs; targets align with the batch.
    """
    num_layers = outputs.human_boxes.shape[0]
    final = num_layers - 1
    final_assign = assign_batch(
        outputs.human_boxes[final], outputs.object_boxes[final],
        outputs.object_logits[final], outputs.hoi_logits[final], targets, cfg)

    zero = outputs.human_boxes.sum() * 0.0
    parts = {"l_b": zero.clone(), "l_u": zero.clone(),
             "l_c_o": zero.clone(), "l_c_a": zero.clone()}
    for layer in range(num_layers):
        if cfg.aux_matching == "per_layer" and layer != final:
            assignments = assign_batch(
                outputs.human_boxes[layer], outputs.object_boxes[layer],
                outputs.object_logits[layer], outputs.hoi_logits[layer], targets, cfg)
        else:
            assignments = final_assign
        matched_ph, matched_po, matched_gh, matched_go = [], [], [], []
        for i, (assign, tgt) in enumerate(zip(assignments, targets)):
            if not assign.pairs:
                continue
            q_idx = torch.as_tensor(assign.query_indices())
            g_idx = torch.as_tensor(assign.gt_indices())
            matched_ph.append(outputs.human_boxes[layer, i, q_idx])
            matched_po.append(outputs.object_boxes[layer, i, q_idx])
            matched_gh.append(tgt.human_boxes[g_idx])
            matched_go.append(tgt.object_boxes[g_idx])
        if matched_ph:
            l_b, l_u = loss_boxes(torch.cat(matched_ph), torch.cat(matched_po),
                                  torch.cat(matched_gh), torch.cat(matched_go))
        else:
            l_b, l_u = zero.clone(), zero.clone()
        verb_layer = outputs.verb_logits[layer] if outputs.verb_logits is not None else None
        l_c_o, l_c_a = loss_classification(
            outputs.object_logits[layer], outputs.hoi_logits[layer], verb_layer,
            assignments, targets, cfg.num_objects,
            focal_alpha=cfg.focal_alpha, focal_gamma=cfg.focal_gamma,
            interaction_loss=cfg.interaction_loss,
            background_weight=cfg.object_background_weight)
        parts["l_b"] = parts["l_b"] + l_b
        parts["l_u"] = parts["l_u"] + l_u
        parts["l_c_o"] = parts["l_c_o"] + l_c_o
        parts["l_c_a"] = parts["l_c_a"] + l_c_a

    l_ce = zero.clone()
    if outputs.token_logits is not None:
        token_labels = torch.stack([t.token_labels for t in targets])
        l_ce = loss_token_ce(outputs.token_logits, token_labels)

    l_kd = zero.clone()
    if v_c is not None and outputs.pooled_embedding is not None:
        l_kd = loss_kd(outputs.pooled_embedding, v_c)

    total = (
        cfg.lambda_box * parts["l_b"]
        + cfg.lambda_iou * parts["l_u"]
        + cfg.lambda_class_object * parts["l_c_o"]
        + cfg.lambda_class_interaction * parts["l_c_a"]
        + l_ce
        + cfg.lambda_kd * l_kd
    )
    return {
        "total": total,
        "l_b": parts["l_b"], "l_u": parts["l_u"],
        "l_c_o": parts["l_c_o"], "l_c_a": parts["l_c_a"],
        "l_ce": l_ce, "l_kd": l_kd,
    }
