"""Label space for human-object interaction triplets.

A vocabulary fixes the verb list, the object list, and the valid
(verb, object) compositions, each composition carrying a dense hoi_id.
Verb entries store an explicit gerund surface form because verb names
are irregular and we never auto-conjugate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

VOWELS = "aeiou"

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Verb:
    id: int
    name: str
    gerund: str


@dataclass(frozen=True)
class ObjectCategory:
    id: int
    name: str


@dataclass
class HOIVocabulary:
    """Verbs, objects, and the dense table of valid compositions."""

    verbs: list[Verb]
    objects: list[ObjectCategory]
    compositions: list[tuple[int, int]]  # hoi_id -> (verb_id, object_id)
    seen_ids: list[int] = field(default_factory=list)  # empty means all seen

    def __post_init__(self):
        if len(set(self.compositions)) != len(self.compositions):
            raise ValueError("duplicate (verb, object) compositions")
        for verb_id, object_id in self.compositions:
            if not 0 <= verb_id < len(self.verbs):
                raise ValueError(f"composition references unknown verb {verb_id}")
            if not 0 <= object_id < len(self.objects):
                raise ValueError(f"composition references unknown object {object_id}")
        for hoi_id in self.seen_ids:
            if not 0 <= hoi_id < len(self.compositions):
                raise ValueError(f"seen id {hoi_id} out of range")

    @property
    def num_verbs(self) -> int:
        return len(self.verbs)

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def num_hoi(self) -> int:
        return len(self.compositions)

    def verb_of(self, hoi_id: int) -> int:
        return self.compositions[hoi_id][0]

    def object_of(self, hoi_id: int) -> int:
        return self.compositions[hoi_id][1]

    def hoi_id_of(self, verb_id: int, object_id: int) -> int:
        try:
            return self.compositions.index((verb_id, object_id))
        except ValueError:
            raise KeyError(f"no composition for verb {verb_id}, object {object_id}")

    @property
    def verb_index(self) -> np.ndarray:
        """verb_id per hoi category, shape (num_hoi,)."""
        return np.array([v for v, _ in self.compositions], dtype=np.int64)

    @property
    def object_index(self) -> np.ndarray:
        """object_id per hoi category, shape (num_hoi,)."""
        return np.array([o for _, o in self.compositions], dtype=np.int64)

    def seen_mask(self) -> np.ndarray:
        """Boolean (num_hoi,) mask; all True when no seen restriction is set."""
        if not self.seen_ids:
            return np.ones(self.num_hoi, dtype=bool)
        mask = np.zeros(self.num_hoi, dtype=bool)
        mask[self.seen_ids] = True
        return mask

    def hoi_multi_hot(self, object_class: int, verb_ids: list[int]) -> np.ndarray:
        """Multi-hot over hoi categories implied by an object class and verb set."""
        hot = np.zeros(self.num_hoi, dtype=bool)
        for hoi_id, (v, o) in enumerate(self.compositions):
            if o == object_class and v in verb_ids:
                hot[hoi_id] = True
        return hot

    def text_labels(self) -> list[str]:
        return [
            render_text_label(self.verbs[v], self.objects[o])
            for v, o in self.compositions
        ]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "verbs": [{"id": v.id, "name": v.name, "gerund": v.gerund} for v in self.verbs],
            "objects": [{"id": o.id, "name": o.name} for o in self.objects],
            "hoi": [
                {"id": i, "verb_id": v, "object_id": o}
                for i, (v, o) in enumerate(self.compositions)
            ],
            "seen": list(self.seen_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HOIVocabulary":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary format version: {version!r}")
        verbs = sorted((Verb(d["id"], d["name"], d["gerund"]) for d in data["verbs"]),
                       key=lambda v: v.id)
        objects = sorted((ObjectCategory(d["id"], d["name"]) for d in data["objects"]),
                         key=lambda o: o.id)
        if [v.id for v in verbs] != list(range(len(verbs))):
            raise ValueError("verb ids must be dense 0..n-1")
        if [o.id for o in objects] != list(range(len(objects))):
            raise ValueError("object ids must be dense 0..n-1")
        hoi = sorted(data["hoi"], key=lambda d: d["id"])
        if [d["id"] for d in hoi] != list(range(len(hoi))):
            raise ValueError("hoi ids must be dense 0..n-1")
        compositions = [(d["verb_id"], d["object_id"]) for d in hoi]
        return cls(verbs, objects, compositions, seen_ids=list(data.get("seen", [])))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path) -> "HOIVocabulary":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def article_for(noun: str) -> str:
    return "an" if noun[:1].lower() in VOWELS else "a"


def render_text_label(verb: Verb, obj: ObjectCategory) -> str:
    """Prompt for one composition: "A photo of a person <gerund> a/an <object>"."""
    if not verb.gerund:
        raise ValueError(f"verb {verb.name!r} has no gerund surface form")
    if not obj.name:
        raise ValueError("object name is empty")
    return f"A photo of a person {verb.gerund} {article_for(obj.name)} {obj.name}"


def word_prompt(word: str) -> str:
    """Single-word prompt used to seed the learnable embedding tables."""
    return f"a photo of a {word}"
