"""Composite scoring, triplet NMS, and the detection output format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .box_ops import iou
from .vocabulary import HOIVocabulary


@dataclass
class TripletPrediction:
    """Per-query prediction with all score stages attached."""

    human_box: np.ndarray          # (4,) cxcywh
    object_box: np.ndarray
    object_scores: np.ndarray      # (num_objects,)
    interaction_scores: np.ndarray # (num_hoi,)
    verb_scores: np.ndarray | None # (num_verbs,)
    hoi_scores: np.ndarray         # (num_hoi,) combined verb+interaction
    final_scores: np.ndarray       # (num_hoi,) ranking score, may exceed 1
    query_index: int


@dataclass
class Detection:
    """One flattened triplet as written to the output file."""

    hoi_id: int
    verb_id: int
    object_id: int
    score: float
    human_box: np.ndarray
    object_box: np.ndarray
    query_index: int = -1


@dataclass
class ImageDetections:
    image_id: str
    triplets: list[Detection] = field(default_factory=list)


def final_scores(s_hoi: np.ndarray, s_object: np.ndarray,
                 s_tf: np.ndarray | None, vocabulary: HOIVocabulary,
                 mode: str = "as_printed") -> np.ndarray:
    """Composite per-category ranking score.

    as_printed adds the squared object score of the category's object
    class plus the similarity bonus; product multiplies the squared
    object score into the hoi score instead of adding it.
    """
    s_hoi = np.asarray(s_hoi, dtype=np.float64)
    s_object = np.asarray(s_object, dtype=np.float64)
    obj_term = s_object[..., vocabulary.object_index] ** 2
    bonus = 0.0 if s_tf is None else np.asarray(s_tf, dtype=np.float64)
    if mode == "as_printed":
        return s_hoi + obj_term + bonus
    if mode == "product":
        return s_hoi * obj_term + bonus
    raise ValueError(f"unknown score combination mode {mode!r}")


def triplet_nms(detections: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy suppression among same-category triplets.

    A kept triplet suppresses a later one only when the categories match
    and BOTH the human and the object boxes overlap above the threshold.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou threshold must lie in (0, 1]")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: list[Detection] = []
    for i in order:
        cand = detections[i]
        suppressed = any(
            kept_det.hoi_id == cand.hoi_id
            and iou(kept_det.human_box, cand.human_box) > iou_threshold
            and iou(kept_det.object_box, cand.object_box) > iou_threshold
            for kept_det in kept
        )
        if not suppressed:
            kept.append(cand)
    return kept


def top_k_triplets(predictions: list[TripletPrediction], k_out: int,
                   vocabulary: HOIVocabulary, nms_iou: float = 0.5) -> list[Detection]:
    """Flatten the query x category score grid, keep the k best, then NMS."""
    if not predictions:
        return []
    scores = np.stack([p.final_scores for p in predictions])  # (N_q, num_hoi)
    flat = scores.reshape(-1)
    k = min(k_out, flat.shape[0])
    order = np.argsort(-flat, kind="stable")[:k]
    num_hoi = scores.shape[1]
    detections = []
    for idx in order:
        q, hoi_id = divmod(int(idx), num_hoi)
        pred = predictions[q]
        detections.append(Detection(
            hoi_id=hoi_id,
            verb_id=vocabulary.verb_of(hoi_id),
            object_id=vocabulary.object_of(hoi_id),
            score=float(flat[idx]),
            human_box=pred.human_box,
            object_box=pred.object_box,
            query_index=pred.query_index,
        ))
    return triplet_nms(detections, nms_iou)


def write_detections(results: list[ImageDetections], path: str | Path) -> None:
    """JSON-lines, one record per image."""
    with open(path, "w") as f:
        for image in results:
            record = {
                "image_id": image.image_id,
                "triplets": [
                    {
                        "hoi_id": det.hoi_id,
                        "verb_id": det.verb_id,
                        "object_id": det.object_id,
                        "score": det.score,
                        "h_box": [float(x) for x in det.human_box],
                        "o_box": [float(x) for x in det.object_box],
                    }
                    for det in image.triplets
                ],
            }
            f.write(json.dumps(record) + "\n")


def read_detections(path: str | Path) -> list[ImageDetections]:
    results = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            results.append(ImageDetections(
                image_id=record["image_id"],
                triplets=[
                    Detection(
                        hoi_id=t["hoi_id"], verb_id=t["verb_id"],
                        object_id=t["object_id"], score=t["score"],
                        human_box=np.asarray(t["h_box"], dtype=np.float64),
                        object_box=np.asarray(t["o_box"], dtype=np.float64),
                    )
                    for t in record["triplets"]
                ],
            ))
    return results
