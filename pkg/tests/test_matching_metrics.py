import numpy as np
import pytest

from psgeval.errors import ProtocolError
from psgeval.graphs import Relation
from psgeval.kernels import select_top_k_graph_constraint, select_top_k_no_constraint
from psgeval.masks import RleMask
from psgeval.matching import LEGACY, UNIQUE, match_masks
from psgeval.metrics import (
    mean_ng_recall_image,
    mean_recall_image,
    mr_inf,
    recall_image,
)
from psgeval.protocol import normalize_single_mpo

import oracles
from fixtures import DRINKING, EATING, ON, as_rle, person_bottle_chair, random_instance


def box(x1, y1, x2, y2, w=10, h=10):
    return RleMask.from_box(w, h, x1, y1, x2, y2)


def test_identical_masks_map_to_themselves():
    gt = [box(0, 0, 5, 5), box(5, 5, 10, 10), box(0, 5, 5, 10)]
    for mode in (UNIQUE, LEGACY):
        table = match_masks(gt, gt, 0.5, mode)
        assert table.mapping == {0: 0, 1: 1, 2: 2}


def test_unique_keeps_only_best_duplicate():
    gt = [box(0, 0, 10, 10)]
    strong = box(0, 0, 10, 9)  # IoU 0.9
    weak = box(0, 0, 10, 6)    # IoU 0.6
    assert match_masks([weak, strong], gt, 0.5, UNIQUE).mapping == {1: 0}
    assert match_masks([weak, strong], gt, 0.5, LEGACY).mapping == {0: 0, 1: 0}


def test_threshold_is_strict():
    gt = [box(0, 0, 10, 10)]
    half = box(0, 0, 10, 5)
    assert match_masks([half], gt, 0.5).mapping == {}


def test_matching_rejects_bad_threshold():
    with pytest.raises(ValueError):
        match_masks([box(0, 0, 1, 1)], [box(0, 0, 1, 1)], 1.0)


def test_mean_recall_full_cover():
    G = [(0, 0, 1), (1, 1, 0)]
    assert mean_recall_image(2, G, {0: 0, 1: 1}, G) == 1.0
    assert recall_image(G, {0: 0, 1: 1}, G) == 1.0
    assert recall_image(G, {0: 0, 1: 1}, []) == 0.0


def test_mean_recall_skips_predicates_absent_from_ground_truth():
    G = [(0, 0, 1), (0, 0, 2), (1, 2, 2)]
    X = [(0, 0, 1), (1, 2, 2)]
    # predicate 0: 1/2, predicate 2: 1/1; predicate 1 absent.
    assert mean_recall_image(3, G, {0: 0, 1: 1, 2: 2}, X) == 0.75
    assert mean_recall_image(3, [], {}, X) is None


def test_unmatched_triplets_are_discarded():
    G = [(0, 0, 1)]
    assert mean_recall_image(1, G, {0: 0}, [(0, 0, 1)]) == 0.0


def test_graph_constraint_enforced_in_unique_mode():
    G = [(0, 0, 1), (0, 1, 1)]
    X = [(0, 0, 1), (0, 1, 1)]
    with pytest.raises(ProtocolError):
        mean_recall_image(2, G, {0: 0, 1: 1}, X)
    assert mean_recall_image(2, G, {0: 0, 1: 1}, X, mode=LEGACY) == 1.0
    assert mean_ng_recall_image(2, G, {0: 0, 1: 1}, X) == 1.0


def test_ng_recall_equals_mean_recall_on_constrained_sets():
    G = [(0, 0, 1), (1, 1, 2), (2, 0, 0)]
    X = [(0, 0, 1), (1, 0, 2), (2, 0, 0)]
    L = {0: 0, 1: 1, 2: 2}
    assert mean_ng_recall_image(2, G, L, X) == mean_recall_image(2, G, L, X)


def test_ng_recall_credits_both_predicates():
    holding, drinking = 0, 1
    G = [(0, holding, 1), (0, drinking, 1)]
    X = [(0, holding, 1), (0, drinking, 1)]
    assert mean_ng_recall_image(2, G, {0: 0, 1: 1}, X) == 1.0


def test_mr_inf_examples():
    gt = [box(0, 0, 5, 5), box(5, 5, 10, 10), box(0, 5, 5, 10), box(5, 0, 10, 5)]
    G = [(0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 0)]
    assert mr_inf(gt, gt, G) == 1.0
    assert mr_inf([], gt, G) == 0.0
    # Only nodes 0 and 1 have masks: only triplet (0, 0, 1) is recoverable.
    half = gt[:2]
    expected = oracles.naive_mr_inf([m.to_array().tolist() for m in half], [m.to_array().tolist() for m in gt], G, 0.5)
    assert mr_inf(half, gt, G) == expected == 0.25


def test_fig3_legacy_recall_is_perfect_and_single_is_zero():
    header, gt, pred = person_bottle_chair()
    table = match_masks([m.mask for m in pred.masks], gt.masks, 0.5, LEGACY)
    X = select_top_k_graph_constraint(pred.relations, 20, strict=False)
    assert mean_recall_image(header.num_predicates, gt.triplets, table, X) == 1.0

    norm = normalize_single_mpo(pred).graph
    table = match_masks([m.mask for m in norm.masks], gt.masks, 0.5, UNIQUE)
    X = select_top_k_graph_constraint(norm.relations, 20)
    assert {t.predicate for t in X} == {EATING, 2}
    assert mean_recall_image(header.num_predicates, gt.triplets, table, X) == 0.0
    assert DRINKING not in {t.predicate for t in X} and ON not in {t.predicate for t in X}


def _dense(masks):
    return [m.astype(int).tolist() for m in masks]


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_naive_oracles(seed):
    rng = np.random.default_rng(seed)
    for _ in range(100):
        inst = random_instance(rng)
        pred, gt = as_rle(inst["pred_masks"]), as_rle(inst["gt_masks"])
        pd, gd = _dense(inst["pred_masks"]), _dense(inst["gt_masks"])
        for mode, legacy in ((UNIQUE, False), (LEGACY, True)):
            assert match_masks(pred, gt, 0.5, mode).mapping == oracles.naive_match(pd, gd, 0.5, legacy)
        L = oracles.naive_match(pd, gd, 0.5)
        rels = [Relation(s, o, tuple(sc)) for s, o, sc in inst["relations"]]
        k = int(rng.integers(1, 12))
        gc = select_top_k_graph_constraint(rels, k)
        assert [tuple(t) for t in gc] == oracles.naive_graph_constraint(inst["relations"], k)
        ng = select_top_k_no_constraint(rels, k)
        assert [tuple(t) for t in ng] == oracles.naive_no_constraint(inst["relations"], k)
        G = inst["gt_triplets"]
        assert mean_recall_image(inst["P"], G, L, gc) == oracles.naive_mean_recall(G, L, gc)
        assert mean_ng_recall_image(inst["P"], G, L, ng) == oracles.naive_ng_recall(G, L, ng)
        assert recall_image(G, L, gc) == oracles.naive_recall(G, L, gc)
        assert mr_inf(pred, gt, G) == oracles.naive_mr_inf(pd, gd, G, 0.5)
