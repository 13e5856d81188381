"""Recall-family scene-graph metrics and dataset evaluation.

Per-image scores average over the predicates present in that image's ground
truth; images without ground-truth triplets are left out of dataset means.
"""
from __future__ import annotations

import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from psgeval.errors import ProtocolError
from psgeval.graphs import DatasetHeader, GroundTruthGraph, PredictionGraph, Triplet
from psgeval.ingest import align
from psgeval.kernels import select_top_k_graph_constraint, select_top_k_no_constraint
from psgeval.masks import iou_matrix
from psgeval.matching import LEGACY, UNIQUE, MatchTable, match_from_ious, match_masks
from psgeval.protocol import MULTI, PROTOCOLS, SINGLE, normalize_single_mpo
from psgeval.report import METRICS, MetricReport, ProtocolScores

PER_IMAGE = "per-image"
PER_PREDICATE = "per-predicate"


def _lookup(table) -> dict:
    return table.mapping if isinstance(table, MatchTable) else dict(table)


def match_triplets(triplets: Iterable, table) -> set:
    """Maps predicted triplets onto ground-truth node ids, dropping unmatched ones."""
    lookup = _lookup(table)
    out = set()
    for s, p, o in triplets:
        if s in lookup and o in lookup:
            out.add(Triplet(lookup[s], p, lookup[o]))
    return out


def _check_graph_constraint(matched: set):
    seen = {}
    for t in sorted(matched):
        pair = (t.subject, t.object)
        if pair in seen:
            raise ProtocolError(
                f"triplets {seen[pair]} and {tuple(t)} share a subject-object pair; "
                "mean recall requires one predicate per pair"
            )
        seen[pair] = tuple(t)


def predicate_hits(gt_triplets: Iterable, matched: set) -> dict:
    """``{predicate: (hits, total)}`` for predicates present in the ground truth."""
    out: dict[int, list[int]] = {}
    for t in set(Triplet(*t) for t in gt_triplets):
        entry = out.setdefault(t.predicate, [0, 0])
        entry[1] += 1
        if t in matched:
            entry[0] += 1
    return {p: (h, n) for p, (h, n) in sorted(out.items())}


def mean_of_hits(hits: dict):
    """Mean recall over predicates, computed exactly then rounded once."""
    if not hits:
        return None
    return float(sum(Fraction(h, n) for h, n in hits.values()) / len(hits))


def mean_recall_image(num_predicates: int, gt_triplets, table, top_k, mode: str | None = None):
    """Mean over present predicates of the fraction of ground truth recalled.

    In unique mode the matched triplets must hold one predicate per pair;
    legacy mode (``mode`` or the table's own mode) tolerates repeats.
    Returns ``None`` when the image has no ground-truth triplets.
    """
    mode = mode or getattr(table, "mode", UNIQUE)
    matched = match_triplets(top_k, table)
    if mode == UNIQUE:
        _check_graph_constraint(matched)
    hits = predicate_hits(gt_triplets, matched)
    _check_predicates(hits, num_predicates)
    return mean_of_hits(hits)


def mean_ng_recall_image(num_predicates: int, gt_triplets, table, top_k):
    hits = predicate_hits(gt_triplets, match_triplets(top_k, table))
    _check_predicates(hits, num_predicates)
    return mean_of_hits(hits)


def _check_predicates(hits: dict, num_predicates: int):
    if hits and (min(hits) < 0 or max(hits) >= num_predicates):
        raise ValueError("ground-truth predicate id out of range")


def recall_image(gt_triplets, table, top_k):
    gt = set(Triplet(*t) for t in gt_triplets)
    if not gt:
        return None
    return len(gt & match_triplets(top_k, table)) / len(gt)


def recoverable_hits(gt_triplets, table) -> dict:
    covered = _lookup(table)
    covered = set(covered.values())
    out: dict[int, list[int]] = {}
    for t in set(Triplet(*t) for t in gt_triplets):
        entry = out.setdefault(t.predicate, [0, 0])
        entry[1] += 1
        if t.subject in covered and t.object in covered:
            entry[0] += 1
    return {p: (h, n) for p, (h, n) in sorted(out.items())}


def mr_inf(pred_masks, gt_masks, gt_triplets, threshold: float = 0.5):
    """Best mean recall any relation model could reach with these masks."""
    table = match_masks(list(pred_masks), list(gt_masks), threshold, UNIQUE)
    return mean_of_hits(recoverable_hits(gt_triplets, table))


@dataclass
class ImageResult:
    image_id: str
    gt_count: int
    duplicates: int
    # metric -> k -> {predicate: (hits, total)}
    hits: dict = field(default_factory=dict)
    inf_hits: dict = field(default_factory=dict)


def _evaluate_view(gt: GroundTruthGraph, graph: PredictionGraph, ks, threshold, mode) -> tuple[dict, dict]:
    pred_masks = [m.mask for m in graph.masks]
    gt_masks = gt.masks
    if pred_masks and gt_masks:
        ious = iou_matrix(pred_masks, gt_masks)
        table = match_from_ious(ious, threshold, mode)
        unique = table if mode == UNIQUE else match_from_ious(ious, threshold, UNIQUE)
    else:
        table = unique = MatchTable({}, mode, threshold)
    strict = mode == UNIQUE
    kmax = max(ks)
    gc_all = select_top_k_graph_constraint(graph.relations, kmax, strict=strict)
    ng_all = select_top_k_no_constraint(graph.relations, kmax)
    hits = {"mR": {}, "mNgR": {}, "R": {}}
    for k in ks:
        gc = match_triplets(gc_all[:k], table)
        if strict:
            _check_graph_constraint(gc)
        hits["mR"][k] = hits["R"][k] = predicate_hits(gt.triplets, gc)
        hits["mNgR"][k] = predicate_hits(gt.triplets, match_triplets(ng_all[:k], table))
    return hits, recoverable_hits(gt.triplets, unique)


def evaluate_image(gt: GroundTruthGraph, pred: PredictionGraph, ks=(20, 50), iou_threshold=0.5,
                   merge_threshold=0.5, protocols=PROTOCOLS) -> dict:
    """Evaluates one image under each requested protocol.

    Returns ``{protocol: ImageResult}``.
    """
    normalized = normalize_single_mpo(pred, merge_threshold)
    out = {}
    for protocol in protocols:
        if protocol == SINGLE:
            graph, mode = normalized.graph, UNIQUE
        elif protocol == MULTI:
            graph, mode = pred, LEGACY
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        hits, inf_hits = _evaluate_view(gt, graph, ks, iou_threshold, mode)
        out[protocol] = ImageResult(gt.image_id, len(gt.triplets), normalized.duplicates_removed, hits, inf_hits)
    return out


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    return math.fsum(values) / len(values)


def _recall_of(hits: dict):
    total = sum(n for _, n in hits.values())
    if not total:
        return None
    return sum(h for h, _ in hits.values()) / total


def _aggregate(results: Sequence[ImageResult], num_predicates: int, ks, aggregation: str, protocol: str) -> ProtocolScores:
    scored = [r for r in results if r.gt_count > 0]
    scores: dict = {}
    per_predicate: dict = {}

    def summarize(hit_dicts):
        if aggregation == PER_IMAGE:
            value = _mean(mean_of_hits(h) for h in hit_dicts)
            breakdown = [
                _mean(h[p][0] / h[p][1] for h in hit_dicts if p in h) for p in range(num_predicates)
            ]
        elif aggregation == PER_PREDICATE:
            pooled = {}
            for h in hit_dicts:
                for p, (a, n) in h.items():
                    acc = pooled.setdefault(p, [0, 0])
                    acc[0] += a
                    acc[1] += n
            breakdown = [pooled[p][0] / pooled[p][1] if p in pooled else None for p in range(num_predicates)]
            value = _mean(breakdown)
        else:
            raise ValueError(f"unknown aggregation {aggregation!r}")
        return value, breakdown

    for metric in METRICS:
        scores[metric] = {}
        per_predicate[metric] = {}
        for k in ks:
            hit_dicts = [r.hits[metric][k] for r in scored]
            if metric == "R":
                if aggregation == PER_IMAGE:
                    value = _mean(_recall_of(h) for h in hit_dicts)
                else:
                    pooled_h = sum(h for d in hit_dicts for h, _ in d.values())
                    pooled_n = sum(n for d in hit_dicts for _, n in d.values())
                    value = pooled_h / pooled_n if pooled_n else None
                scores[metric][k] = value
                continue
            value, breakdown = summarize(hit_dicts)
            scores[metric][k] = value
            per_predicate[metric][k] = breakdown
    inf_value, _ = summarize([r.inf_hits for r in scored])
    return ProtocolScores(
        protocol=protocol,
        images_evaluated=len(scored),
        scores=scores,
        per_predicate={m: v for m, v in per_predicate.items() if v},
        mr_inf=inf_value,
    )


def evaluate_dataset(header: DatasetHeader, ground_truth: Sequence[GroundTruthGraph],
                     predictions: Sequence[PredictionGraph], protocols=PROTOCOLS, ks=(20, 50),
                     iou_threshold: float = 0.5, merge_threshold: float = 0.5,
                     aggregation: str = PER_IMAGE, threads: int = 1) -> MetricReport:
    """Scores a prediction set against ground truth under each protocol.

    Images are evaluated independently (in parallel when ``threads`` > 1) and
    reduced in sorted image-id order, so the report does not depend on
    scheduling.
    """
    if not 0 < iou_threshold < 1 or not 0 < merge_threshold < 1:
        raise ValueError("thresholds must lie in (0, 1)")
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] <= 0:
        raise ValueError("k values must be positive")
    protocols = tuple(protocols)
    pairs = align(ground_truth, predictions)

    def work(pair):
        return evaluate_image(pair[0], pair[1], ks, iou_threshold, merge_threshold, protocols)

    if threads and threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(work, pairs))
    else:
        per_image = [work(p) for p in pairs]

    results = [
        _aggregate([r[protocol] for r in per_image], header.num_predicates, ks, aggregation, protocol)
        for protocol in protocols
    ] if pairs else []
    duplicates = {gt.image_id: r[protocols[0]].duplicates for (gt, _), r in zip(pairs, per_image)} if protocols else {}
    return MetricReport(
        image_count=len(pairs),
        ks=list(ks),
        aggregation=aggregation,
        iou_threshold=iou_threshold,
        merge_threshold=merge_threshold,
        predicates=list(header.predicates),
        duplicate_relations=duplicates,
        results=results,
    )
