"""Optimization loop, step logging, and the component-toggle ablation runner."""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .data import Dataset, hoi_instance_counts
from .embedding_cache import EmbeddingCache
from .evaluation import EvalResult, evaluate
from .losses import build_targets, total_loss
from .network import HOIDetector, build_model
from .pipeline import candidate_batch, images_to_tensor, run_inference


def train(model: HOIDetector, dataset: Dataset, cache: EmbeddingCache,
          train_cfg: TrainConfig, log_path: str | Path | None = None,
          eval_annotations=None) -> dict:
    """Run up to train_cfg.steps optimizer steps; early-stops once the
    evaluated mAP reaches train_cfg.target_map (when set)."""
    cfg = model.cfg
    vocabulary = model.vocabulary
    annotations = dataset.annotations
    eval_annotations = annotations if eval_annotations is None else eval_annotations
    grid = dataset.images[annotations[0].image_id].shape[-1] // cfg.patch_size

    targets = build_targets(annotations, vocabulary, grid_h=grid, grid_w=grid)
    all_images = images_to_tensor(dataset, annotations)
    candidates = None
    if cfg.use_semantic_enhancement:
        candidates = candidate_batch(cache, annotations, cfg, vocabulary, training=True)
    v_c_all = torch.as_tensor(np.stack([
        cache.image_vector(ann.image_id) for ann in annotations
    ]), dtype=torch.float32)

    optimizer = torch.optim.AdamW(
        [p for p in model.parameters() if p.requires_grad],
        lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng(train_cfg.seed)
    order = rng.permutation(len(annotations))
    cursor = 0
    history = {"evals": [], "steps_run": 0, "final_map": float("nan")}
    log_file = open(log_path, "w") if log_path is not None else None
    started = time.time()

    def next_batch():
        nonlocal order, cursor
        if cursor + train_cfg.batch_size > len(order):
            order = rng.permutation(len(annotations))
            cursor = 0
        idx = order[cursor:cursor + train_cfg.batch_size]
        cursor += train_cfg.batch_size
        return idx

    def evaluate_now() -> float:
        detections = run_inference(model, dataset, eval_annotations, cache)
        counts = hoi_instance_counts(annotations, vocabulary)
        result = evaluate(eval_annotations, detections, vocabulary,
                          setting="default", train_counts=counts)
        model.train()
        return result.map_full

    model.train()
    step = 0
    for step in range(1, train_cfg.steps + 1):
        if train_cfg.lr_drop_step and step == train_cfg.lr_drop_step:
            for group in optimizer.param_groups:
                group["lr"] *= 0.1
        idx = next_batch()
        images = all_images[idx]
        batch_targets = [targets[i] for i in idx]
        cand = candidates[idx] if candidates is not None else None
        outputs = model(images, candidate_ids=cand)
        losses = total_loss(outputs, batch_targets, cfg, v_c=v_c_all[idx])
        optimizer.zero_grad()
        losses["total"].backward()
        if train_cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
        optimizer.step()
        if log_file is not None:
            record = {"step": step, "lr": optimizer.param_groups[0]["lr"]}
            record.update({k: float(v.detach()) for k, v in losses.items()})
            log_file.write(json.dumps(record) + "\n")
        if train_cfg.eval_every and step % train_cfg.eval_every == 0:
            map_full = evaluate_now()
            history["evals"].append({"step": step, "map_full": map_full})
            if train_cfg.target_map > 0 and map_full >= train_cfg.target_map:
                break

    history["steps_run"] = step
    history["seconds"] = time.time() - started
    if history["evals"] and history["evals"][-1]["step"] == step:
        history["final_map"] = history["evals"][-1]["map_full"]
    else:
        history["final_map"] = evaluate_now()
        history["evals"].append({"step": step, "map_full": history["final_map"]})
    if log_file is not None:
        log_file.close()
    model.eval()
    return history


def evaluate_model(model: HOIDetector, dataset: Dataset, cache: EmbeddingCache,
                   annotations=None, train_annotations=None,
                   setting: str = "default") -> EvalResult:
    annotations = dataset.annotations if annotations is None else annotations
    train_annotations = annotations if train_annotations is None else train_annotations
    detections = run_inference(model, dataset, annotations, cache)
    counts = hoi_instance_counts(train_annotations, model.vocabulary)
    return evaluate(annotations, detections, model.vocabulary,
                    setting=setting, train_counts=counts)


ABLATION_AXES = ("use_verb_head", "use_object_enhancement", "use_semantic_enhancement")


def run_ablation(dataset: Dataset, cache: EmbeddingCache, model_cfg: ModelConfig,
                 train_cfg: TrainConfig, provider=None,
                 out_path: str | Path | None = None) -> list[dict]:
    """Train all eight component-toggle combinations, report their metrics.

    Rows run from no-components to all-components; each row records the
    toggles and the evaluated default-setting metrics.
    """
    rows = []
    for bits in range(8):
        toggles = {axis: bool(bits >> i & 1) for i, axis in enumerate(ABLATION_AXES)}
        cfg = replace(model_cfg, **toggles)
        model = build_model(cfg, dataset.vocabulary, provider=provider)
        train(model, dataset, cache, train_cfg)
        result = evaluate_model(model, dataset, cache)
        row = dict(toggles)
        row.update({
            "map_full": result.map_full,
            "map_rare": result.map_rare,
            "map_nonrare": result.map_nonrare,
        })
        rows.append(row)
    if out_path is not None:
        with open(out_path, "w") as f:
            json.dump(rows, f, indent=2)
    return rows
