"""Synthetic interaction scenes with exact annotations.

Each scene pairs a person glyph (red channel) with an object glyph
(green/blue channels, color keyed to the object class). The verb of a
pair is encoded purely by the spatial relation between the two glyphs:
verb 0 places the object above the person, verb 1 overlaps the two, and
the remaining verbs sweep the directions of a ring. Recognizing the verb
therefore requires relational reasoning, not just appearance. Rendering
is additive per channel so overlapping glyphs keep both color
signatures, and boxes are derived from the rasterized pixel rectangles,
making annotations exact by construction.
"""

from __future__ import annotations

import math

import numpy as np

from .config import SyntheticWorldConfig
from .data import Annotation, Dataset, GroundTruthInstance
from .vocabulary import HOIVocabulary, ObjectCategory, Verb

PERSON_SIZE = (0.22, 0.38)   # glyph side, fraction of image size
OBJECT_SIZE = (0.16, 0.28)
PLACEMENT_TRIES = 64


def build_synthetic_vocabulary(num_verbs: int, num_objects: int,
                               compositions: int, seed: int = 0) -> HOIVocabulary:
    """Mechanical names; composition table covers verbs and objects evenly."""
    if compositions > num_verbs * num_objects:
        raise ValueError("more compositions requested than (verb, object) pairs exist")
    verbs = [Verb(v, f"act-{v}", f"acting-{v}") for v in range(num_verbs)]
    objects = [
        ObjectCategory(o, f"item-{o}" if o % 2 == 0 else f"thing-{o}")
        for o in range(num_objects)
    ]
    rng = np.random.default_rng(seed)
    pool = [(v, o) for v in range(num_verbs) for o in range(num_objects)]
    pool = [pool[i] for i in rng.permutation(len(pool))]
    chosen: list[tuple[int, int]] = []
    verb_used = np.zeros(num_verbs, dtype=np.int64)
    obj_used = np.zeros(num_objects, dtype=np.int64)
    while len(chosen) < compositions:
        best = min(range(len(pool)),
                   key=lambda i: (verb_used[pool[i][0]] + obj_used[pool[i][1]], i))
        v, o = pool.pop(best)
        chosen.append((v, o))
        verb_used[v] += 1
        obj_used[o] += 1
    chosen.sort()
    return HOIVocabulary(verbs=verbs, objects=objects, compositions=chosen)


def object_color(object_class: int) -> tuple[float, float]:
    """Distinct-ish (green, blue) intensities per class."""
    g = 0.35 + 0.65 * ((object_class * 0.6180339887) % 1.0)
    b = 0.35 + 0.65 * ((object_class * 0.3819660113 + 0.5) % 1.0)
    return g, b


def _relation_offset(verb_id: int, num_verbs: int, gap: float) -> tuple[float, float]:
    """Center-to-center offset (dx, dy) in pixels implied by a verb."""
    if verb_id == 1 and num_verbs > 1:
        return 0.0, 0.0  # overlapping
    angle = -math.pi / 2 + 2 * math.pi * verb_id / num_verbs
    return gap * math.cos(angle), gap * math.sin(angle)


def _pixel_rect(cx: float, cy: float, w: int, h: int, size: int):
    x0 = int(round(cx - w / 2))
    y0 = int(round(cy - h / 2))
    return x0, y0, x0 + w, y0 + h


def _rect_in_bounds(rect, size: int) -> bool:
    x0, y0, x1, y1 = rect
    return 0 <= x0 and 0 <= y0 and x1 <= size and y1 <= size


def _rect_to_box(rect, size: int) -> np.ndarray:
    x0, y0, x1, y1 = rect
    return np.array([
        (x0 + x1) / 2 / size, (y0 + y1) / 2 / size,
        (x1 - x0) / size, (y1 - y0) / size,
    ], dtype=np.float32)


def generate_synthetic_dataset(cfg: SyntheticWorldConfig,
                               vocabulary: HOIVocabulary | None = None) -> Dataset:
    """Render cfg.num_images scenes; fully reproducible per seed."""
    if vocabulary is None:
        vocabulary = build_synthetic_vocabulary(
            cfg.num_verbs, cfg.num_objects, cfg.compositions, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    size = cfg.image_size
    annotations: list[Annotation] = []
    images: dict[str, np.ndarray] = {}
    for idx in range(cfg.num_images):
        image_id = f"img{idx:05d}"
        image = (cfg.noise * rng.standard_normal((3, size, size))).astype(np.float32)
        instances: list[GroundTruthInstance] = []
        num_pairs = int(rng.integers(1, cfg.max_pairs_per_image + 1))
        for _ in range(num_pairs):
            hoi_id = int(rng.integers(vocabulary.num_hoi))
            verb_id, object_class = vocabulary.compositions[hoi_id]
            pw = int(rng.integers(round(PERSON_SIZE[0] * size), round(PERSON_SIZE[1] * size) + 1))
            ph = int(rng.integers(round(PERSON_SIZE[0] * size), round(PERSON_SIZE[1] * size) + 1))
            ow = int(rng.integers(round(OBJECT_SIZE[0] * size), round(OBJECT_SIZE[1] * size) + 1))
            oh = int(rng.integers(round(OBJECT_SIZE[0] * size), round(OBJECT_SIZE[1] * size) + 1))
            placed = None
            for _ in range(PLACEMENT_TRIES):
                pcx = rng.uniform(pw / 2, size - pw / 2)
                pcy = rng.uniform(ph / 2, size - ph / 2)
                gap = (max(pw, ph) + max(ow, oh)) / 2 * rng.uniform(1.05, 1.3)
                dx, dy = _relation_offset(verb_id, vocabulary.num_verbs, gap)
                jitter = rng.uniform(-1.5, 1.5, size=2)
                person_rect = _pixel_rect(pcx, pcy, pw, ph, size)
                object_rect = _pixel_rect(pcx + dx + jitter[0], pcy + dy + jitter[1],
                                          ow, oh, size)
                if _rect_in_bounds(person_rect, size) and _rect_in_bounds(object_rect, size):
                    placed = (person_rect, object_rect)
                    break
            if placed is None:
                raise RuntimeError(
                    f"could not place a pair for verb {verb_id} in a {size}px image"
                )
            person_rect, object_rect = placed
            px0, py0, px1, py1 = person_rect
            ox0, oy0, ox1, oy1 = object_rect
            image[0, py0:py1, px0:px1] += 1.0
            g, b = object_color(object_class)
            image[1, oy0:oy1, ox0:ox1] += g
            image[2, oy0:oy1, ox0:ox1] += b
            instances.append(GroundTruthInstance.build(
                human_box=_rect_to_box(person_rect, size),
                object_box=_rect_to_box(object_rect, size),
                object_class=object_class,
                verb_ids=[verb_id],
                vocabulary=vocabulary,
            ))
        annotations.append(Annotation(image_id=image_id, width=size, height=size,
                                      instances=instances))
        images[image_id] = image
    return Dataset(vocabulary=vocabulary, annotations=annotations, images=images)
