"""Glue between datasets, the embedding cache, and the model: candidate
selection per image, batched inference, and detection assembly."""

from __future__ import annotations

import numpy as np
import torch

from .config import ModelConfig
from .data import Annotation, Dataset
from .embedding_cache import EmbeddingCache
from .heads import combine_hoi, multilabel_probabilities, object_probabilities
from .network import HOIDetector
from .postprocess import (ImageDetections, TripletPrediction, final_scores,
                          top_k_triplets)
from .retrieval import compute_similarity, select_candidates, training_free_scores


def images_to_tensor(dataset: Dataset, annotations: list[Annotation]) -> torch.Tensor:
    return torch.stack([
        torch.from_numpy(dataset.images[ann.image_id]) for ann in annotations
    ])


def similarity_for(cache: EmbeddingCache, annotation: Annotation) -> np.ndarray:
    return compute_similarity(cache.image_vector(annotation.image_id),
                              cache.text_matrix())


def candidate_ids_for(cache: EmbeddingCache, annotation: Annotation,
                      cfg: ModelConfig, vocabulary, training: bool) -> np.ndarray:
    """Top-k candidate category ids; the seen mask applies only in training."""
    m_sim = similarity_for(cache, annotation)
    mask = vocabulary.seen_mask() if training else None
    cand = select_candidates(m_sim, cfg.k_candidates, cache.labels, seen_mask=mask)
    return cand.hoi_ids


def candidate_batch(cache: EmbeddingCache, annotations: list[Annotation],
                    cfg: ModelConfig, vocabulary, training: bool) -> torch.Tensor:
    ids = [candidate_ids_for(cache, ann, cfg, vocabulary, training)
           for ann in annotations]
    return torch.as_tensor(np.stack(ids), dtype=torch.long)


def predictions_for_image(outputs, image_index: int, cfg: ModelConfig,
                          vocabulary, s_tf: np.ndarray | None) -> list[TripletPrediction]:
    """Per-query predictions from the final decoder layer of one image."""
    i = image_index
    s_o = object_probabilities(outputs.object_logits[-1, i]).numpy()
    s_inter = multilabel_probabilities(outputs.hoi_logits[-1, i]).numpy()
    s_verb = (multilabel_probabilities(outputs.verb_logits[-1, i]).numpy()
              if outputs.verb_logits is not None else None)
    h_boxes = outputs.human_boxes[-1, i].numpy()
    o_boxes = outputs.object_boxes[-1, i].numpy()
    preds = []
    for q in range(s_o.shape[0]):
        s_hoi = combine_hoi(s_inter[q], None if s_verb is None else s_verb[q],
                            cfg.alpha, vocabulary)
        final = final_scores(s_hoi, s_o[q], s_tf, vocabulary, mode=cfg.score_combine)
        preds.append(TripletPrediction(
            human_box=h_boxes[q], object_box=o_boxes[q],
            object_scores=s_o[q], interaction_scores=s_inter[q],
            verb_scores=None if s_verb is None else s_verb[q],
            hoi_scores=s_hoi, final_scores=final, query_index=q,
        ))
    return preds


@torch.no_grad()
def run_inference(model: HOIDetector, dataset: Dataset,
                  annotations: list[Annotation] | None = None,
                  cache: EmbeddingCache | None = None,
                  batch_size: int = 16) -> list[ImageDetections]:
    """Detections for every image, final-layer predictions only."""
    cfg = model.cfg
    vocabulary = model.vocabulary
    annotations = dataset.annotations if annotations is None else annotations
    model.eval()
    results = []
    for start in range(0, len(annotations), batch_size):
        batch = annotations[start:start + batch_size]
        images = images_to_tensor(dataset, batch)
        cand = None
        if cfg.use_semantic_enhancement and cache is not None:
            cand = candidate_batch(cache, batch, cfg, vocabulary, training=False)
        outputs = model(images, candidate_ids=cand)
        for i, ann in enumerate(batch):
            s_tf = None
            if cfg.use_training_free and cache is not None:
                m_sim = similarity_for(cache, ann)
                s_tf = training_free_scores(m_sim, cfg.r_training_free,
                                            mode=cfg.training_free_norm)
            preds = predictions_for_image(outputs, i, cfg, vocabulary, s_tf)
            triplets = top_k_triplets(preds, cfg.top_out, vocabulary,
                                      nms_iou=cfg.nms_iou)
            results.append(ImageDetections(image_id=ann.image_id, triplets=triplets))
    return results
