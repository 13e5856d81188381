"""Scene-graph containers for ground truth and predictions.

Predicate ids are zero-based everywhere. A relation's score vector has
``P + 1`` entries: index 0 is the no-relation probability and index ``p + 1``
is the probability of predicate ``p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from psgeval.errors import ValidationError
from psgeval.masks import RleMask, rle_decode


class Node(NamedTuple):
    class_id: int
    mask: RleMask


class Triplet(NamedTuple):
    subject: int
    predicate: int
    object: int


class PredictedMask(NamedTuple):
    class_id: int
    confidence: float
    mask: RleMask


class Relation(NamedTuple):
    subject: int
    object: int
    scores: tuple

    @property
    def no_relation(self) -> float:
        return self.scores[0]

    @property
    def predicate_scores(self) -> tuple:
        return self.scores[1:]


@dataclass(frozen=True)
class DatasetHeader:
    predicates: tuple
    classes: tuple
    width: int = 0
    height: int = 0

    def __post_init__(self):
        object.__setattr__(self, "predicates", tuple(self.predicates))
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.predicates) < 1:
            raise ValidationError("header needs at least one predicate")
        if len(set(self.predicates)) != len(self.predicates):
            raise ValidationError("predicate names are not unique")
        if len(set(self.classes)) != len(self.classes):
            raise ValidationError("class names are not unique")

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    @property
    def num_classes(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class GroundTruthGraph:
    image_id: str
    width: int
    height: int
    nodes: tuple = field(default=())
    triplets: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(Node(*n) for n in self.nodes))
        object.__setattr__(self, "triplets", tuple(Triplet(*t) for t in self.triplets))

    @property
    def masks(self) -> list:
        return [n.mask for n in self.nodes]

    def validate(self, header: DatasetHeader | None = None):
        n = len(self.nodes)
        where = f"image {self.image_id!r}"
        for i, node in enumerate(self.nodes):
            if (node.mask.width, node.mask.height) != (self.width, self.height):
                raise ValidationError(f"{where}: node {i} mask size differs from image size")
            if header is not None and not 0 <= node.class_id < header.num_classes:
                raise ValidationError(f"{where}: node {i} has class id {node.class_id} out of range")
        if n > 1:
            dense = np.stack([rle_decode(node.mask).ravel() for node in self.nodes]).astype(np.int32)
            overlap = dense @ dense.T
            np.fill_diagonal(overlap, 0)
            hits = np.argwhere(overlap > 0)
            if len(hits):
                i, j = hits[0]
                raise ValidationError(
                    f"{where}: ground-truth nodes {int(i)} and {int(j)} overlap by {int(overlap[i, j])} pixels"
                )
        seen = set()
        for idx, t in enumerate(self.triplets):
            if not (0 <= t.subject < n and 0 <= t.object < n):
                raise ValidationError(f"{where}: triplet {idx} references a node out of range")
            if t.subject == t.object:
                raise ValidationError(f"{where}: triplet {idx} relates node {t.subject} to itself")
            if header is not None and not 0 <= t.predicate < header.num_predicates:
                raise ValidationError(f"{where}: triplet {idx} has predicate id {t.predicate} out of range")
            if t in seen:
                raise ValidationError(f"{where}: triplet {idx} duplicates {tuple(t)}")
            seen.add(t)


@dataclass(frozen=True)
class PredictionGraph:
    image_id: str
    masks: tuple = field(default=())
    relations: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(
            self, "masks", tuple(PredictedMask(int(c), float(s), m) for c, s, m in self.masks)
        )
        object.__setattr__(
            self,
            "relations",
            tuple(Relation(int(s), int(o), tuple(float(v) for v in sc)) for s, o, sc in self.relations),
        )

    def validate(self, header: DatasetHeader, width: int | None = None, height: int | None = None):
        where = f"image {self.image_id!r}"
        n = len(self.masks)
        for i, m in enumerate(self.masks):
            if not 0.0 <= m.confidence <= 1.0:
                raise ValidationError(f"{where}: mask {i} confidence {m.confidence} outside [0, 1]")
            if width is not None and (m.mask.width, m.mask.height) != (width, height):
                raise ValidationError(f"{where}: mask {i} size differs from image size")
            if header.num_classes and not 0 <= m.class_id < header.num_classes:
                raise ValidationError(f"{where}: mask {i} has class id {m.class_id} out of range")
        expected = header.num_predicates + 1
        for idx, r in enumerate(self.relations):
            if not (0 <= r.subject < n and 0 <= r.object < n):
                raise ValidationError(f"{where}: relation {idx} references a mask out of range")
            if r.subject == r.object:
                raise ValidationError(f"{where}: relation {idx} relates mask {r.subject} to itself")
            if len(r.scores) != expected:
                raise ValidationError(
                    f"{where}: relation {idx} has {len(r.scores)} scores, expected {expected}"
                )
            if not all(0.0 <= v <= 1.0 for v in r.scores):
                raise ValidationError(f"{where}: relation {idx} has a score outside [0, 1]")
