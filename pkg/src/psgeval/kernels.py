"""Closed-form numeric pieces of the decoupled two-stage relation model.

Everything here is a pure function of its arguments: prompt encoding of patch
tokens, the location/semantic token inputs, the weighted relation loss with its
analytic gradient, the node loss, no-relation pair sampling, and the two
top-k triplet selection rules used at evaluation time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from psgeval.errors import ProtocolError
from psgeval.graphs import Triplet

_RATIO_EPS = 1e-12


class PromptTokens(NamedTuple):
    subject: np.ndarray
    object: np.ndarray
    background: np.ndarray


@dataclass(frozen=True)
class LossWeights:
    relation: float = 0.8
    node: float = 0.2

    def __post_init__(self):
        if self.relation < 0 or self.node < 0 or self.relation + self.node <= 0:
            raise ValueError("loss weights must be non-negative with a positive sum")


def sigmoid(x):
    """Logistic function; branches on sign so large |x| never overflows."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    # log(1 + exp(x))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def prompt_coefficients(r_sbj: float, r_obj: float, binary: bool = False) -> tuple[float, float, float]:
    """Weights of the subject, object and background tokens for one patch."""
    if r_sbj < 0 or r_obj < 0 or r_sbj + r_obj > 1 + _RATIO_EPS:
        raise ValueError(f"coverage ratios must be non-negative with sum <= 1, got {r_sbj}, {r_obj}")
    if binary:
        r_sbj = 1.0 if r_sbj > 0 else 0.0
        r_obj = 1.0 if r_obj > 0 else 0.0
        return r_sbj, r_obj, max(0.0, 1.0 - r_sbj - r_obj)
    # 1 - (a + b) rather than (1 - a) - b keeps a + b + bg exactly 1 in floats.
    return float(r_sbj), float(r_obj), 1.0 - (r_sbj + r_obj)


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("prompt token has zero magnitude")
    return v / norm


def encode_patch_token(patch, r_sbj: float, r_obj: float, tokens: PromptTokens, binary: bool = False) -> np.ndarray:
    """Adds the normalized subject/object/background prompt to a patch token.

    ``binary`` replaces each ratio by 1 when the patch is touched at all; if
    both are touched the background weight is clamped at zero.
    """
    c_sbj, c_obj, c_bg = prompt_coefficients(r_sbj, r_obj, binary)
    return (
        np.asarray(patch, dtype=np.float64)
        + c_sbj * _unit(tokens.subject)
        + c_obj * _unit(tokens.object)
        + c_bg * _unit(tokens.background)
    )


def location_token_input(sbj_box, obj_box, width: float, height: float) -> np.ndarray:
    """Boxes ``(x1, y1, x2, y2)`` scaled to [-1, 1] and stacked subject-first."""
    if width <= 0 or height <= 0:
        raise ValueError(f"degenerate image extent {width}x{height}")
    out = []
    for box in (sbj_box, obj_box):
        x1, y1, x2, y2 = (float(v) for v in box)
        if not (0 <= x1 <= x2 <= width and 0 <= y1 <= y2 <= height):
            raise ValueError(f"box {tuple(box)} lies outside the {width}x{height} image")
        out += [2 * x1 / width - 1, 2 * y1 / height - 1, 2 * x2 / width - 1, 2 * y2 / height - 1]
    return np.array(out)


def semantic_index(sbj_class: int, obj_class: int, num_classes: int) -> int:
    if not (0 <= sbj_class < num_classes and 0 <= obj_class < num_classes):
        raise ValueError(f"class pair ({sbj_class}, {obj_class}) out of range for {num_classes} classes")
    return sbj_class * num_classes + obj_class


def positive_weights(pos_counts, neg_counts) -> np.ndarray:
    """Per-predicate positive weight: negatives over positives."""
    pos = np.asarray(pos_counts, dtype=np.float64)
    neg = np.asarray(neg_counts, dtype=np.float64)
    missing = np.flatnonzero(pos <= 0)
    if len(missing):
        raise ValueError(f"predicates without positive samples: {missing.tolist()}")
    return neg / pos


def relation_loss(logits, labels, pos_weight) -> tuple[float, np.ndarray]:
    """Weighted binary cross entropy averaged over all N*P entries.

    Returns:
      ``(loss, grad)`` where ``grad`` has the shape of ``logits``.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(pos_weight, dtype=np.float64)
    if x.ndim != 2 or x.shape != y.shape or w.shape != (x.shape[1],):
        raise ValueError(f"shape mismatch: logits {x.shape}, labels {y.shape}, weights {w.shape}")
    if np.any(w <= 0):
        raise ValueError("positive weights must be > 0")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logits")
    count = x.size
    # -log sigma(x) = softplus(-x), -log(1 - sigma(x)) = softplus(x)
    per_entry = w * y * _softplus(-x) + (1 - y) * _softplus(x)
    s = sigmoid(x)
    grad = (w * y * (s - 1) + (1 - y) * s) / count
    return float(per_entry.sum() / count), grad


def class_weights(frequencies) -> np.ndarray:
    """Inverse class frequencies rescaled to mean 1."""
    f = np.asarray(frequencies, dtype=np.float64)
    zero = np.flatnonzero(f <= 0)
    if len(zero):
        raise ValueError(f"classes with zero frequency: {zero.tolist()}")
    inv = 1.0 / f
    return inv * (len(inv) / inv.sum())


def _weighted_ce(logits, label, weights) -> float:
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.shape[0] != z.shape[0] or z.shape[1] != len(weights):
        raise ValueError("logit and label shapes disagree")
    if np.any(labels < 0) or np.any(labels >= z.shape[1]):
        raise ValueError("class label out of range")
    zmax = z.max(axis=1, keepdims=True)
    log_norm = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    nll = log_norm - z[np.arange(len(labels)), labels]
    return float(np.mean(weights[labels] * nll))


def node_loss(sbj_logits, obj_logits, sbj_label, obj_label, class_frequencies) -> float:
    """Mean of the class-weighted cross entropies of subject and object.

    Batched inputs (``(N, C)`` logits, ``(N,)`` labels) average over the batch.
    """
    w = class_weights(class_frequencies)
    return 0.5 * (_weighted_ce(sbj_logits, sbj_label, w) + _weighted_ce(obj_logits, obj_label, w))


def total_loss(rel_loss: float, node: float, weights: LossWeights = LossWeights()) -> float:
    return weights.relation * rel_loss + weights.node * node


def sample_no_relation_pairs(num_nodes: int, annotated, seed, target: int) -> list[tuple[int, int]]:
    """Draws ``target`` ordered pairs without annotations, without replacement."""
    annotated = {(int(s), int(o)) for s, o in annotated}
    candidates = [
        (i, j) for i in range(num_nodes) for j in range(num_nodes) if i != j and (i, j) not in annotated
    ]
    if target > len(candidates):
        raise ValueError(f"requested {target} no-relation pairs but only {len(candidates)} exist")
    if target <= 0:
        return []
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=target, replace=False)
    return [candidates[i] for i in sorted(picks.tolist())]


def _score_matrix(relations) -> np.ndarray:
    if not relations:
        return np.zeros((0, 1))
    return np.array([r.scores for r in relations], dtype=np.float64)


def check_unique_pairs(relations):
    seen = set()
    for idx, r in enumerate(relations):
        pair = (r.subject, r.object)
        if pair in seen:
            raise ProtocolError(
                f"relation {idx} repeats subject-object pair {pair}; normalize predictions first"
            )
        seen.add(pair)


def select_top_k_graph_constraint(relations: Sequence, k: int, strict: bool = True) -> list[Triplet]:
    """Top ``k`` relations by lowest no-relation score, one predicate each.

    Each chosen relation contributes its highest-scoring predicate. Ties go
    to the earlier relation and the lower predicate id. With ``strict=False``
    duplicate subject-object pairs are tolerated, as legacy evaluation does.
    """
    if strict:
        check_unique_pairs(relations)
    scores = _score_matrix(relations)
    if k <= 0 or len(scores) == 0:
        return []
    order = np.argsort(scores[:, 0], kind="stable")[:k]
    best = np.argmax(scores[order, 1:], axis=1)
    return [
        Triplet(relations[i].subject, int(p), relations[i].object)
        for i, p in zip(order.tolist(), best.tolist())
    ]


def ranking_scores(scores: np.ndarray) -> np.ndarray:
    """``(1 - no_rel) * p`` for every (relation, predicate) pair."""
    return (1.0 - scores[:, :1]) * scores[:, 1:]


def select_top_k_no_constraint(relations: Sequence, k: int) -> list[Triplet]:
    """Top ``k`` (relation, predicate) pairs by ``(1 - no_rel) * p``, descending.

    Ties go to the earlier relation, then the lower predicate id.
    """
    scores = _score_matrix(relations)
    if k <= 0 or len(scores) == 0:
        return []
    ranked = ranking_scores(scores)
    num_pred = ranked.shape[1]
    flat = np.argsort(-ranked.ravel(), kind="stable")[:k]
    return [
        Triplet(relations[f // num_pred].subject, f % num_pred, relations[f // num_pred].object)
        for f in flat.tolist()
    ]
