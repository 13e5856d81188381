"""Seeded synthetic scene graphs and predictors.

Ground-truth nodes are disjoint axis-aligned rectangles. Predictors derive
their masks by shrinking those rectangles, so predicted masks never cross
node boundaries. Every image draws from its own generator seeded by
``(seed, image index, stream)``, so images are independent of one another.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from psgeval.graphs import DatasetHeader, GroundTruthGraph, PredictionGraph
from psgeval.kernels import sample_no_relation_pairs
from psgeval.masks import RleMask

_GT, _HONEST, _ADV_MASKS, _ADV_SCORES = 0, 1, 2, 3


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    images: int = 20
    grid: int = 64
    classes: int = 8
    predicates: int = 6
    nodes: tuple = (2, 6)
    triplets: tuple = (1, 6)
    mask_duplicates: int = 3
    relation_duplicates: int = 3
    jitter: int = 1
    label_noise: float = 0.1
    # Chance that an annotated pair carries a second predicate.
    multi_predicate_rate: float = 0.0
    # Rank window for the true predicate in adversarial score vectors.
    uncertainty: int = 3

    def __post_init__(self):
        if min(self.images, self.grid, self.classes, self.predicates) <= 0:
            raise ValueError("counts must be positive")
        if not 1 <= self.nodes[0] <= self.nodes[1]:
            raise ValueError(f"bad nodes-per-image range {self.nodes}")
        if not 0 <= self.triplets[0] <= self.triplets[1]:
            raise ValueError(f"bad triplets-per-image range {self.triplets}")
        if self.mask_duplicates < 1 or self.relation_duplicates < 1:
            raise ValueError("duplication factors must be >= 1")
        if not 0.0 <= self.label_noise <= 1.0 or not 0.0 <= self.multi_predicate_rate <= 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.jitter < 0 or self.uncertainty < 1:
            raise ValueError("jitter must be >= 0 and uncertainty >= 1")


def _rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, index, stream])


def _split(rng, box, count: int) -> list:
    """Guillotine-splits ``box`` (x1, y1, x2, y2) into up to ``count`` cells."""
    cells = [box]
    while len(cells) < count:
        cells.sort(key=lambda b: (b[2] - b[0]) * (b[3] - b[1]), reverse=True)
        x1, y1, x2, y2 = cells[0]
        w, h = x2 - x1, y2 - y1
        if w < 2 and h < 2:
            break
        if w >= h:
            cut = int(rng.integers(x1 + 1, x2))
            parts = [(x1, y1, cut, y2), (cut, y1, x2, y2)]
        else:
            cut = int(rng.integers(y1 + 1, y2))
            parts = [(x1, y1, x2, cut), (x1, cut, x2, y2)]
        cells = cells[1:] + parts
    return cells


def _shrink(rng, box, limit_px: int, max_fraction: float | None = None) -> tuple:
    x1, y1, x2, y2 = box
    w, h = x2 - x1, y2 - y1
    lim_x = lim_y = limit_px
    if max_fraction is not None:
        lim_x = min(lim_x, int(max_fraction * w))
        lim_y = min(lim_y, int(max_fraction * h))
    cut = [int(rng.integers(0, lim + 1)) for lim in (lim_x, lim_y, lim_x, lim_y)]
    nx1, ny1, nx2, ny2 = x1 + cut[0], y1 + cut[1], x2 - cut[2], y2 - cut[3]
    if nx2 <= nx1 or ny2 <= ny1:
        # Keep at least one pixel so the mask is never empty.
        nx1, ny1 = min(nx1, x2 - 1), min(ny1, y2 - 1)
        nx2, ny2 = nx1 + 1, ny1 + 1
    return nx1, ny1, nx2, ny2


def _bbox(mask: RleMask) -> tuple:
    grid = mask.to_array()
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


def make_header(cfg: SynthConfig) -> DatasetHeader:
    return DatasetHeader(
        predicates=[f"predicate_{p}" for p in range(cfg.predicates)],
        classes=[f"class_{c}" for c in range(cfg.classes)],
        width=cfg.grid,
        height=cfg.grid,
    )


def _gt_image(cfg: SynthConfig, index: int) -> GroundTruthGraph:
    rng = _rng(cfg.seed, index, _GT)
    size = cfg.grid
    n = int(rng.integers(cfg.nodes[0], cfg.nodes[1] + 1))
    cells = _split(rng, (0, 0, size, size), n)
    nodes = []
    for cell in cells:
        # Leave part of each cell uncovered so the image is only partly labelled.
        x1, y1, x2, y2 = _shrink(rng, cell, max(size, 1), 0.25)
        nodes.append((int(rng.integers(cfg.classes)), RleMask.from_box(size, size, x1, y1, x2, y2)))
    pairs = [(i, j) for i in range(len(nodes)) for j in range(len(nodes)) if i != j]
    want = int(rng.integers(cfg.triplets[0], cfg.triplets[1] + 1))
    triplets = []
    if pairs and want:
        chosen = rng.choice(len(pairs), size=min(want, len(pairs)), replace=False)
        for c in sorted(chosen.tolist()):
            s, o = pairs[c]
            preds = rng.choice(cfg.predicates, size=min(2, cfg.predicates), replace=False).tolist()
            count = 2 if len(preds) > 1 and rng.random() < cfg.multi_predicate_rate else 1
            triplets += [(s, int(p), o) for p in sorted(preds[:count])]
    return GroundTruthGraph(f"img_{index:05d}", size, size, nodes, triplets)


def generate_ground_truth(cfg: SynthConfig) -> tuple[DatasetHeader, list[GroundTruthGraph]]:
    return make_header(cfg), [_gt_image(cfg, i) for i in range(cfg.images)]


def _pairs_to_predicates(gt: GroundTruthGraph) -> dict:
    out: dict = {}
    for s, p, o in gt.triplets:
        out.setdefault((s, o), []).append(p)
    return out


def _no_relation_relations(rng, gt: GroundTruthGraph, num_predicates: int, pair_seed) -> list:
    annotated = _pairs_to_predicates(gt)
    n = len(gt.nodes)
    available = n * (n - 1) - len(annotated)
    target = min(len(annotated), available)
    out = []
    for s, o in sample_no_relation_pairs(n, annotated, pair_seed, target):
        no_rel = float(rng.uniform(0.6, 1.0))
        preds = rng.uniform(0.0, 0.3, size=num_predicates)
        out.append((s, o, (no_rel, *preds.tolist())))
    return out


def honest_predictor(header: DatasetHeader, gt_graphs, jitter: int = 1, label_noise: float = 0.1, seed: int = 0) -> list[PredictionGraph]:
    """One shrunken mask per node and one relation per annotated pair.

    ``label_noise`` is the chance that a pair's top predicate is replaced by a
    wrong one. The output already satisfies SingleMPO.
    """
    num_pred = header.num_predicates
    out = []
    for index, gt in enumerate(gt_graphs):
        rng = _rng(seed, index, _HONEST)
        masks = []
        for node in gt.nodes:
            box = _shrink(rng, _bbox(node.mask), jitter)
            masks.append((node.class_id, float(rng.uniform(0.5, 1.0)), RleMask.from_box(gt.width, gt.height, *box)))
        relations = []
        for (s, o), preds in _pairs_to_predicates(gt).items():
            scores = rng.uniform(0.0, 0.3, size=num_pred)
            for p in preds:
                scores[p] = rng.uniform(0.6, 0.9)
            if rng.random() < label_noise and len(preds) < num_pred:
                wrong = [q for q in range(num_pred) if q not in preds]
                scores[wrong[int(rng.integers(len(wrong)))]] = 0.95
            relations.append((s, o, (float(rng.uniform(0.0, 0.3)), *scores.tolist())))
        relations += _no_relation_relations(rng, gt, num_pred, [seed, index, _HONEST, 1])
        out.append(PredictionGraph(gt.image_id, masks, relations))
    return out


def adversarial_predictor(header: DatasetHeader, gt_graphs, mask_duplicates: int = 3,
                          relation_duplicates: int = 3, seed: int = 0, uncertainty: int = 3) -> list[PredictionGraph]:
    """A one-stage-style predictor that duplicates masks and hedges predicates.

    Every node gets ``mask_duplicates`` shrunken copies (each shrinks at most
    10% per side, so copies overlap their node and each other with IoU > 0.5).
    For each annotated pair the model is unsure: the true predicate sits at a
    random rank below ``uncertainty``. It emits ``relation_duplicates``
    relations, the j-th promoting the j-th ranked predicate to its argmax with
    slightly lower confidence.
    """
    m, d = mask_duplicates, relation_duplicates
    if m < 1 or d < 1:
        raise ValueError("duplication factors must be >= 1")
    num_pred = header.num_predicates
    out = []
    for index, gt in enumerate(gt_graphs):
        mask_rng = _rng(seed, index, _ADV_MASKS)
        score_rng = _rng(seed, index, _ADV_SCORES)
        masks = []
        copies = []
        for node in gt.nodes:
            box = _bbox(node.mask)
            ids = []
            for _ in range(m):
                shrunk = _shrink(mask_rng, box, max(box[2] - box[0], box[3] - box[1]), 0.1)
                ids.append(len(masks))
                masks.append((node.class_id, float(mask_rng.uniform(0.5, 1.0)), RleMask.from_box(gt.width, gt.height, *shrunk)))
            copies.append(ids)
        relations = []
        for (s, o), preds in _pairs_to_predicates(gt).items():
            # Scores and ranks come from their own stream so that raising d only
            # adds hedges on top of the same base prediction.
            ranked = np.sort(score_rng.uniform(0.3, 0.9, size=num_pred))[::-1]
            others = [q for q in score_rng.permutation(num_pred).tolist() if q != preds[0]]
            rank = int(score_rng.integers(min(uncertainty, num_pred)))
            order = others[:rank] + [preds[0]] + others[rank:]
            base = np.empty(num_pred)
            base[order] = ranked
            no_rel = float(score_rng.uniform(0.0, 0.3))
            for j in range(min(d, num_pred)):
                vec = base.copy()
                vec[order[0]], vec[order[j]] = base[order[j]], base[order[0]]
                vec *= 1.0 - 0.1 * j
                relations.append((copies[s][j % m], copies[o][j % m], (no_rel, *vec.tolist())))
        for s, o, scores in _no_relation_relations(score_rng, gt, num_pred, [seed, index, _ADV_SCORES, 1]):
            relations.append((copies[s][0], copies[o][0], scores))
        out.append(PredictionGraph(gt.image_id, masks, relations))
    return out
