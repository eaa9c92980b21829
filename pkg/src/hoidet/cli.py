"""Command-line entry points: gen, cache, train, eval, infer, coverage, selftest."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (ConfigError, RunConfig, apply_overrides, load_run_config,
                     save_resolved)
from .data import hoi_instance_counts, load_dataset
from .embedding_cache import build_cache, load_cache
from .evaluation import evaluate
from .checkpoint import load_checkpoint, save_checkpoint
from .network import build_model
from .pipeline import run_inference
from .postprocess import read_detections, write_detections
from .retrieval import MockEmbeddingProvider, candidate_coverage
from .synthetic import generate_synthetic_dataset
from .training import evaluate_model, train


def _resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    return apply_overrides(cfg, args.set or [])


def _snapshot(cfg: RunConfig, out_dir: Path, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved(cfg, out_dir / "resolved_config.json")
    with open(out_dir / "run_seed.json", "w") as f:
        json.dump({"seed": seed}, f)


def _provider_for(cfg: RunConfig, vocabulary) -> MockEmbeddingProvider:
    return MockEmbeddingProvider(vocabulary, seed=cfg.provider.seed,
                                 noise=cfg.provider.noise, dim=cfg.provider.dim)


def cmd_gen(args) -> int:
    cfg = _resolve_config(args)
    if args.seed is not None:
        cfg.world.seed = args.seed
    out_dir = Path(args.out)
    _snapshot(cfg, out_dir, cfg.world.seed)
    dataset = generate_synthetic_dataset(cfg.world)
    from .data import save_dataset

    save_dataset(dataset, out_dir)
    print(f"wrote {len(dataset.annotations)} images to {out_dir}")
    return 0


def cmd_cache(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    out_dir = Path(args.out)
    _snapshot(cfg, out_dir, cfg.provider.seed)
    provider = _provider_for(cfg, dataset.vocabulary)
    cache = build_cache(dataset.annotations, dataset.vocabulary, provider, out_dir)
    print(f"cached {len(cache.image_ids)} image and {len(cache.labels)} label "
          f"embeddings (dim {cache.dim}) in {out_dir}")
    return 0


def _world_model_config(cfg: RunConfig, vocabulary) -> RunConfig:
    """Align label-space sizes of the model section with a loaded vocabulary."""
    import dataclasses

    model = dataclasses.replace(
        cfg.model, num_verbs=vocabulary.num_verbs,
        num_objects=vocabulary.num_objects, num_hoi=vocabulary.num_hoi,
        k_candidates=min(cfg.model.k_candidates, vocabulary.num_hoi),
        r_training_free=min(cfg.model.r_training_free, vocabulary.num_hoi),
        embed_dim=cfg.provider.dim)
    return dataclasses.replace(cfg, model=model)


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    cfg = _world_model_config(cfg, dataset.vocabulary)
    if args.seed is not None:
        cfg.model.seed = args.seed
        cfg.train.seed = args.seed
    out_dir = Path(args.out)
    _snapshot(cfg, out_dir, cfg.model.seed)
    cache = load_cache(args.cache, dataset.vocabulary, expected_dim=cfg.provider.dim)
    provider = _provider_for(cfg, dataset.vocabulary)
    model = build_model(cfg.model, dataset.vocabulary, provider=provider)
    history = train(model, dataset, cache, cfg.train,
                    log_path=out_dir / "train_log.jsonl")
    save_checkpoint(model, out_dir / "weights.bin")
    result = evaluate_model(model, dataset, cache)
    result.save(out_dir / "train_eval.json")
    with open(out_dir / "history.json", "w") as f:
        json.dump(history, f, indent=2)
    print(f"trained {history['steps_run']} steps, "
          f"train-set mAP {result.map_full:.4f}; weights in {out_dir}")
    return 0


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    model = load_checkpoint(args.checkpoint, dataset.vocabulary)
    cache = load_cache(args.cache, dataset.vocabulary,
                       expected_dim=model.cfg.embed_dim)
    detections = run_inference(model, dataset, cache=cache)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _snapshot(cfg, out.parent, model.cfg.seed)
    write_detections(detections, out)
    print(f"wrote detections for {len(detections)} images to {out}")
    return 0


def cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    detections = read_detections(args.detections)
    train_counts = None
    if args.train_data:
        train_dataset = load_dataset(args.train_data)
        train_counts = hoi_instance_counts(train_dataset.annotations,
                                           dataset.vocabulary)
    result = evaluate(dataset.annotations, detections, dataset.vocabulary,
                      setting=args.setting, train_counts=train_counts)
    result.save(args.out)
    print(f"{args.setting}: mAP full {result.map_full:.4f} "
          f"rare {result.map_rare:.4f} non-rare {result.map_nonrare:.4f}")
    return 0


def _parse_k_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in spec.split(",")]


def cmd_coverage(args) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    provider = _provider_for(cfg, dataset.vocabulary)
    ks = _parse_k_range(args.k)
    rows = [(k, candidate_coverage(dataset.annotations, dataset.vocabulary,
                                   provider, k)) for k in ks]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _snapshot(cfg, out.parent, cfg.provider.seed)
    with open(out, "w") as f:
        f.write("K,coverage\n")
        for k, cov in rows:
            f.write(f"{k},{cov:.6f}\n")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot([k for k, _ in rows], [c for _, c in rows], marker="o")
        ax.set_xlabel("K")
        ax.set_ylabel("candidate coverage")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
    print(f"coverage over K={ks[0]}..{ks[-1]} written to {out}")
    return 0


def cmd_selftest(args) -> int:
    from .selfcheck import run_all

    results = run_all(fast=args.fast)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed += not res.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoidet",
        description="Desk-scale human-object interaction detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config entry")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("cache", help="build the embedding cache for a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cache)

    p = sub.add_parser("train", help="train a model on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run inference and write detections")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a detections file against a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--setting", choices=["default", "known_object"],
                   default="default")
    p.add_argument("--train-data", default=None,
                   help="dataset whose instance counts define the rare split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("coverage", help="candidate coverage curve as CSV")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="1..16", help="range like 1..32 or list 1,2,4")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="optional PNG path")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("selftest", help="run the invariant suites")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
