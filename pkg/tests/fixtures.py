"""Hand-built scenes and random small instances shared across test modules."""
import numpy as np

from psgeval.graphs import DatasetHeader, GroundTruthGraph, PredictionGraph
from psgeval.masks import RleMask, rle_encode

EATING, DRINKING, DRIVING, ON = range(4)
PERSON, BOTTLE, CHAIR = range(3)


def person_bottle_chair():
    """Duplicate person/chair masks and hedged person-bottle/person-chair relations.

    The model prefers eating over drinking and driving over on, yet a second
    relation for each pair carries the correct (less confident) predicate.
    """
    header = DatasetHeader(["eating", "drinking", "driving", "on"], ["person", "bottle", "chair"], 32, 16)
    W, H = 32, 16
    box = lambda *b: RleMask.from_box(W, H, *b)
    person, bottle, chair = box(0, 0, 10, 16), box(12, 0, 16, 5), box(20, 4, 32, 16)
    gt = GroundTruthGraph(
        "fig3", W, H,
        [(PERSON, person), (BOTTLE, bottle), (CHAIR, chair)],
        [(0, DRINKING, 1), (0, ON, 2)],
    )
    masks = [
        (PERSON, 0.9, person),
        (PERSON, 0.8, box(0, 1, 10, 16)),
        (PERSON, 0.7, box(1, 0, 10, 15)),
        (BOTTLE, 0.9, bottle),
        (CHAIR, 0.85, chair),
        (CHAIR, 0.6, box(20, 5, 31, 16)),
    ]
    def scores(no_rel, **pred):
        vec = [no_rel, 0.05, 0.05, 0.05, 0.05]
        for name, v in pred.items():
            vec[1 + ["eating", "drinking", "driving", "on"].index(name)] = v
        return vec
    relations = [
        (0, 3, scores(0.1, eating=0.9, drinking=0.3)),
        (1, 3, scores(0.3, drinking=0.6, eating=0.2)),
        (0, 4, scores(0.15, driving=0.8, on=0.2)),
        (2, 5, scores(0.35, on=0.55, driving=0.25)),
    ]
    return header, gt, PredictionGraph("fig3", masks, relations)


def random_instance(rng, size=6, max_masks=6, max_predicates=4, max_relations=10):
    """A small random image: disjoint GT masks, noisy predicted copies, relations."""
    num_gt = int(rng.integers(1, max_masks + 1))
    labels = rng.integers(0, num_gt + 1, size=(size, size))
    gt_masks = [labels == i + 1 for i in range(num_gt)]
    num_pred = int(rng.integers(0, max_masks + 1))
    pred_masks = []
    for _ in range(num_pred):
        src = gt_masks[int(rng.integers(num_gt))]
        flip = rng.random((size, size)) < rng.choice([0.0, 0.05, 0.2, 0.5])
        pred_masks.append(src ^ flip)
    P = int(rng.integers(1, max_predicates + 1))
    gt_triplets = set()
    if num_gt > 1:
        for _ in range(int(rng.integers(0, 6))):
            s, o = rng.choice(num_gt, 2, replace=False)
            gt_triplets.add((int(s), int(rng.integers(P)), int(o)))
    relations = []
    if num_pred > 1:
        pairs = [(i, j) for i in range(num_pred) for j in range(num_pred) if i != j]
        picks = rng.choice(len(pairs), size=min(len(pairs), int(rng.integers(0, max_relations + 1))), replace=False)
        for c in picks:
            s, o = pairs[int(c)]
            # Coarse score grid so exact ties occur and tie-breaking is exercised.
            relations.append((s, o, [float(v) for v in rng.integers(0, 11, size=P + 1) / 10]))
    return {
        "P": P,
        "gt_masks": gt_masks,
        "pred_masks": pred_masks,
        "gt_triplets": sorted(gt_triplets),
        "relations": relations,
    }


def as_rle(dense_masks):
    return [rle_encode(m) for m in dense_masks]
