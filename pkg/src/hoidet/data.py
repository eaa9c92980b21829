"""Annotation schema and dataset I/O.

One split is a directory of per-image .npy arrays plus a single
annotations JSON. Boxes are normalized cxcywh throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vocabulary import HOIVocabulary

ANNOTATION_FORMAT_VERSION = 1


@dataclass
class GroundTruthInstance:
    human_box: np.ndarray        # (4,) cxcywh in [0, 1]
    object_box: np.ndarray       # (4,)
    object_class: int
    verb_ids: list[int]
    verb_multi_hot: np.ndarray   # (num_verbs,) bool
    hoi_multi_hot: np.ndarray    # (num_hoi,) bool

    @classmethod
    def build(cls, human_box, object_box, object_class: int, verb_ids: list[int],
              vocabulary: HOIVocabulary) -> "GroundTruthInstance":
        verb_hot = np.zeros(vocabulary.num_verbs, dtype=bool)
        verb_hot[list(verb_ids)] = True
        return cls(
            human_box=np.asarray(human_box, dtype=np.float32),
            object_box=np.asarray(object_box, dtype=np.float32),
            object_class=int(object_class),
            verb_ids=sorted(int(v) for v in verb_ids),
            verb_multi_hot=verb_hot,
            hoi_multi_hot=vocabulary.hoi_multi_hot(object_class, list(verb_ids)),
        )


@dataclass
class Annotation:
    image_id: str
    width: int
    height: int
    instances: list[GroundTruthInstance] = field(default_factory=list)


@dataclass
class Dataset:
    vocabulary: HOIVocabulary
    annotations: list[Annotation]
    images: dict[str, np.ndarray]  # image_id -> (3, H, W) float32

    def __len__(self) -> int:
        return len(self.annotations)

    def image_for(self, annotation: Annotation) -> np.ndarray:
        return self.images[annotation.image_id]


def _validate_box(box, image_id: str) -> None:
    arr = np.asarray(box, dtype=np.float64)
    if arr.shape != (4,):
        raise ValueError(f"{image_id}: box must have 4 entries")
    if not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 1:
        raise ValueError(f"{image_id}: box {arr.tolist()} outside [0, 1]")


def annotations_to_dict(annotations: list[Annotation], vocabulary_ref: str) -> dict:
    return {
        "format_version": ANNOTATION_FORMAT_VERSION,
        "vocabulary_ref": vocabulary_ref,
        "images": [
            {
                "image_id": ann.image_id,
                "width": ann.width,
                "height": ann.height,
                "instances": [
                    {
                        "h_box": [float(x) for x in inst.human_box],
                        "o_box": [float(x) for x in inst.object_box],
                        "object_class": inst.object_class,
                        "verb_ids": list(inst.verb_ids),
                    }
                    for inst in ann.instances
                ],
            }
            for ann in annotations
        ],
    }


def annotations_from_dict(data: dict, vocabulary: HOIVocabulary) -> list[Annotation]:
    version = data.get("format_version")
    if version != ANNOTATION_FORMAT_VERSION:
        raise ValueError(f"unsupported annotation format version: {version!r}")
    annotations = []
    for rec in data["images"]:
        instances = []
        for inst in rec["instances"]:
            _validate_box(inst["h_box"], rec["image_id"])
            _validate_box(inst["o_box"], rec["image_id"])
            if not 0 <= inst["object_class"] < vocabulary.num_objects:
                raise ValueError(f"{rec['image_id']}: object class out of range")
            for v in inst["verb_ids"]:
                if not 0 <= v < vocabulary.num_verbs:
                    raise ValueError(f"{rec['image_id']}: verb id out of range")
            instances.append(GroundTruthInstance.build(
                inst["h_box"], inst["o_box"], inst["object_class"],
                inst["verb_ids"], vocabulary,
            ))
        annotations.append(Annotation(
            image_id=rec["image_id"], width=rec["width"], height=rec["height"],
            instances=instances,
        ))
    return annotations


def save_annotations(annotations: list[Annotation], path: str | Path,
                     vocabulary_ref: str = "vocabulary.json") -> None:
    with open(path, "w") as f:
        json.dump(annotations_to_dict(annotations, vocabulary_ref), f, indent=2)


def load_annotations(path: str | Path, vocabulary: HOIVocabulary) -> list[Annotation]:
    with open(path) as f:
        return annotations_from_dict(json.load(f), vocabulary)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    dataset.vocabulary.save(out_dir / "vocabulary.json")
    save_annotations(dataset.annotations, out_dir / "annotations.json")
    for image_id, image in dataset.images.items():
        np.save(images_dir / f"{image_id}.npy", image.astype(np.float32))


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    vocabulary = HOIVocabulary.load(root / "vocabulary.json")
    annotations = load_annotations(root / "annotations.json", vocabulary)
    images = {
        ann.image_id: np.load(root / "images" / f"{ann.image_id}.npy")
        for ann in annotations
    }
    return Dataset(vocabulary=vocabulary, annotations=annotations, images=images)


def hoi_instance_counts(annotations: list[Annotation], vocabulary: HOIVocabulary) -> np.ndarray:
    """Per-category ground-truth instance counts (one count per set label bit)."""
    counts = np.zeros(vocabulary.num_hoi, dtype=np.int64)
    for ann in annotations:
        for inst in ann.instances:
            counts += inst.hoi_multi_hot.astype(np.int64)
    return counts
