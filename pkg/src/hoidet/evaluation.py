"""Detection-quality evaluation: per-category average precision in the
all-images ("default") and object-aware ("known object") settings, with
the rare / non-rare split taken from training-set instance counts.

A predicted triplet is a true positive when its category is exact and
both its human and object boxes overlap an unclaimed ground-truth pair
above the IoU threshold; matching is greedy in score order and
one-to-one, so duplicates count as false positives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .box_ops import Box, iou
from .data import Annotation
from .postprocess import ImageDetections
from .vocabulary import HOIVocabulary

__all__ = ["Box", "iou", "match_predictions", "average_precision",
           "evaluate", "evaluate_object_detection", "EvalResult"]


@dataclass
class EvalResult:
    map_full: float
    map_rare: float
    map_nonrare: float
    per_category_ap: np.ndarray  # (num_hoi,), NaN where no ground truth exists
    setting: str

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "map_full": self.map_full,
            "map_rare": self.map_rare,
            "map_nonrare": self.map_nonrare,
            "per_category_ap": [
                None if np.isnan(ap) else float(ap) for ap in self.per_category_ap
            ],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def match_predictions(predictions, gt_pairs, iou_threshold: float = 0.5) -> list[bool]:
    """Greedy one-to-one matching within one image and one category.

    predictions: list of (score, human_box, object_box); gt_pairs: list of
    (human_box, object_box). Returns a TP flag per prediction, in
    descending score order (ties keep input order). A prediction claims
    the unclaimed ground truth with the highest min(IoU_h, IoU_o), and
    only if that minimum exceeds the threshold.
    """
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i][0], i))
    claimed = [False] * len(gt_pairs)
    flags = []
    for i in order:
        _, h_box, o_box = predictions[i]
        best_j, best_overlap = -1, iou_threshold
        for j, (gt_h, gt_o) in enumerate(gt_pairs):
            if claimed[j]:
                continue
            overlap = min(iou(h_box, gt_h), iou(o_box, gt_o))
            if overlap > best_overlap:
                best_j, best_overlap = j, overlap
        if best_j >= 0:
            claimed[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags, scores, num_positives: int) -> float:
    """All-point interpolated AP from pooled TP flags and scores."""
    if num_positives <= 0:
        return float("nan")
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if flags.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = np.cumsum(flags[order])
    fp = np.cumsum(~flags[order])
    recall = tp / num_positives
    precision = tp / np.maximum(tp + fp, 1)
    # envelope from the right, integrate over recall steps
    recall = np.concatenate(([0.0], recall, [recall[-1]]))
    precision = np.concatenate(([0.0], precision, [0.0]))
    for i in range(precision.size - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


def _category_pools(annotations: list[Annotation], vocabulary: HOIVocabulary):
    """Per-category ground-truth pairs per image, plus object presence."""
    gt: dict[int, dict[str, list]] = {n: {} for n in range(vocabulary.num_hoi)}
    objects_in_image: dict[str, set[int]] = {}
    for ann in annotations:
        objects_in_image[ann.image_id] = {
            inst.object_class for inst in ann.instances}
        for inst in ann.instances:
            for hoi_id in np.flatnonzero(inst.hoi_multi_hot):
                gt[int(hoi_id)].setdefault(ann.image_id, []).append(
                    (inst.human_box, inst.object_box))
    return gt, objects_in_image


def evaluate(annotations: list[Annotation], detections: list[ImageDetections],
             vocabulary: HOIVocabulary, setting: str = "default",
             train_counts: np.ndarray | None = None, rare_threshold: int = 10,
             iou_threshold: float = 0.5) -> EvalResult:
    """Mean AP over categories with ground truth, per evaluation setting.

    default pools every test image; known_object restricts each
    category's pool to images whose ground truth contains that category's
    object class. The rare split needs per-category training-set counts.
    """
    if setting not in ("default", "known_object"):
        raise ValueError(f"unknown evaluation setting {setting!r}")
    image_ids = {ann.image_id for ann in annotations}
    for det in detections:
        if det.image_id not in image_ids:
            raise ValueError(f"detections reference unknown image {det.image_id!r}")
    gt, objects_in_image = _category_pools(annotations, vocabulary)

    per_image_dets: dict[int, dict[str, list]] = {}
    for det in detections:
        for t in det.triplets:
            per_image_dets.setdefault(t.hoi_id, {}).setdefault(
                det.image_id, []).append((t.score, t.human_box, t.object_box))

    ap = np.full(vocabulary.num_hoi, np.nan)
    for n in range(vocabulary.num_hoi):
        if setting == "known_object":
            target_object = vocabulary.object_of(n)
            pool = {iid for iid in image_ids if target_object in objects_in_image[iid]}
        else:
            pool = image_ids
        num_positives = sum(len(pairs) for iid, pairs in gt[n].items() if iid in pool)
        if num_positives == 0:
            continue
        flags: list[bool] = []
        scores: list[float] = []
        for iid in sorted(pool):
            preds = per_image_dets.get(n, {}).get(iid, [])
            if not preds:
                continue
            image_flags = match_predictions(preds, gt[n].get(iid, []),
                                            iou_threshold=iou_threshold)
            order = sorted(range(len(preds)), key=lambda i: (-preds[i][0], i))
            flags.extend(image_flags)
            scores.extend(preds[i][0] for i in order)
        ap[n] = average_precision(flags, scores, num_positives)

    def mean_over(ids) -> float:
        vals = ap[list(ids)]
        vals = vals[~np.isnan(vals)]
        return float(vals.mean()) if vals.size else float("nan")

    all_ids = range(vocabulary.num_hoi)
    if train_counts is None:
        map_rare = map_nonrare = float("nan")
    else:
        train_counts = np.asarray(train_counts)
        rare_ids = [n for n in all_ids if train_counts[n] < rare_threshold]
        nonrare_ids = [n for n in all_ids if train_counts[n] >= rare_threshold]
        map_rare = mean_over(rare_ids)
        map_nonrare = mean_over(nonrare_ids)
    return EvalResult(
        map_full=mean_over(all_ids),
        map_rare=map_rare,
        map_nonrare=map_nonrare,
        per_category_ap=ap,
        setting=setting,
    )


def evaluate_object_detection(annotations: list[Annotation],
                              detections: list[ImageDetections],
                              vocabulary: HOIVocabulary,
                              iou_threshold: float = 0.5) -> float:
    """Plain object mAP over the object boxes carried by the triplets."""
    gt: dict[int, dict[str, list]] = {m: {} for m in range(vocabulary.num_objects)}
    for ann in annotations:
        for inst in ann.instances:
            gt[inst.object_class].setdefault(ann.image_id, []).append(inst.object_box)
    per_class_dets: dict[int, dict[str, list]] = {}
    for det in detections:
        for t in det.triplets:
            per_class_dets.setdefault(t.object_id, {}).setdefault(
                det.image_id, []).append((t.score, t.object_box))

    aps = []
    for m in range(vocabulary.num_objects):
        num_positives = sum(len(v) for v in gt[m].values())
        if num_positives == 0:
            continue
        flags: list[bool] = []
        scores: list[float] = []
        for iid in sorted({i for d in (gt[m], per_class_dets.get(m, {})) for i in d}):
            preds = per_class_dets.get(m, {}).get(iid, [])
            if not preds:
                continue
            order = sorted(range(len(preds)), key=lambda i: (-preds[i][0], i))
            claimed = [False] * len(gt[m].get(iid, []))
            boxes = gt[m].get(iid, [])
            for i in order:
                score, box = preds[i]
                best_j, best_overlap = -1, iou_threshold
                for j, gt_box in enumerate(boxes):
                    if claimed[j]:
                        continue
                    overlap = iou(box, gt_box)
                    if overlap > best_overlap:
                        best_j, best_overlap = j, overlap
                if best_j >= 0:
                    claimed[best_j] = True
                flags.append(best_j >= 0)
                scores.append(score)
        aps.append(average_precision(flags, scores, num_positives))
    return float(np.mean(aps)) if aps else 0.0
