"""SingleMPO normalization, the MultiMPO pass-through and the exploit converter."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from psgeval.errors import ProtocolError
from psgeval.graphs import PredictionGraph, Relation
from psgeval.kernels import check_unique_pairs, ranking_scores
from psgeval.masks import merge_masks

SINGLE = "SingleMPO"
MULTI = "MultiMPO"
PROTOCOLS = (SINGLE, MULTI)


@dataclass(frozen=True)
class NormalizedGraph:
    """A prediction graph with disjoint masks and one relation per ordered pair.

    ``remap[i]`` is the merged index of raw mask ``i`` (-1 for dropped masks).
    """

    graph: PredictionGraph
    remap: tuple
    raw_relation_count: int

    @property
    def image_id(self) -> str:
        return self.graph.image_id

    @property
    def masks(self):
        return self.graph.masks

    @property
    def relations(self):
        return self.graph.relations

    @property
    def duplicates_removed(self) -> int:
        return self.raw_relation_count - len(self.graph.relations)


def aggregate_duplicate_relations(relations: Sequence[Relation]) -> list[Relation]:
    """Collapses relations sharing an ordered pair.

    The surviving relation keeps the maximum score of every predicate and the
    mean no-relation score. Pairs keep the order of their first occurrence.
    """
    groups: dict[tuple[int, int], list[Relation]] = {}
    for r in relations:
        groups.setdefault((r.subject, r.object), []).append(r)
    out = []
    for (s, o), group in groups.items():
        if len(group) == 1:
            out.append(Relation(s, o, tuple(group[0].scores)))
            continue
        no_rel = math.fsum(r.scores[0] for r in group) / len(group)
        preds = [max(col) for col in zip(*(r.scores[1:] for r in group))]
        out.append(Relation(s, o, (no_rel, *preds)))
    return out


def normalize_single_mpo(graph: PredictionGraph, merge_threshold: float = 0.5) -> NormalizedGraph:
    merged = merge_masks(graph.masks, merge_threshold)
    remap = merged.remap
    repointed = []
    for r in graph.relations:
        if r.subject in merged.absorbed or r.object in merged.absorbed:
            continue
        s, o = remap[r.subject], remap[r.object]
        if s < 0 or o < 0 or s == o:
            continue
        repointed.append(Relation(s, o, r.scores))
    out = PredictionGraph(graph.image_id, merged.masks, aggregate_duplicate_relations(repointed))
    return NormalizedGraph(out, remap, len(graph.relations))


def multi_mpo_view(graph: PredictionGraph) -> PredictionGraph:
    return graph


def is_single_mpo(graph: PredictionGraph) -> bool:
    """True when masks are pairwise disjoint and no ordered pair repeats."""
    try:
        check_unique_pairs(graph.relations)
    except ProtocolError:
        return False
    if len(graph.masks) < 2:
        return True
    dense = np.stack([m.mask.to_array().ravel() for m in graph.masks])
    return int(dense.sum(axis=0).max()) <= 1


def convert_to_multi_mpo(relations: Sequence[Relation], num_predicates: int) -> list[Relation]:
    """Explodes each relation into one single-predicate relation per predicate.

    The new relation for predicate ``p`` scores 1 on ``p``, 0 elsewhere, and
    gets no-relation score ``1 - (1 - no_rel) * score_p`` so that sorting by it
    reproduces the no-graph-constraint ranking.
    """
    if not relations:
        return []
    scores = np.array([r.scores for r in relations], dtype=np.float64)
    if scores.shape[1] != num_predicates + 1:
        raise ValueError(f"expected {num_predicates + 1} scores per relation, got {scores.shape[1]}")
    keys = 1.0 - ranking_scores(scores)
    out = []
    for i, r in enumerate(relations):
        for p in range(num_predicates):
            vec = [0.0] * (num_predicates + 1)
            vec[0] = float(keys[i, p])
            vec[p + 1] = 1.0
            out.append(Relation(r.subject, r.object, tuple(vec)))
    return out


def convert_graph(graph: PredictionGraph, num_predicates: int) -> PredictionGraph:
    if not is_single_mpo(graph):
        raise ProtocolError(
            f"image {graph.image_id!r} is not SingleMPO-conformant; normalize predictions before converting"
        )
    return PredictionGraph(graph.image_id, graph.masks, convert_to_multi_mpo(graph.relations, num_predicates))
