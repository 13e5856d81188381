"""Assignment of predicted masks to ground-truth nodes by IoU."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from psgeval.masks import RleMask, iou_matrix

UNIQUE = "unique"
LEGACY = "legacy"


@dataclass(frozen=True)
class MatchTable:
    """Partial map from predicted-mask index to ground-truth node index."""

    mapping: dict = field(default_factory=dict)
    mode: str = UNIQUE
    threshold: float = 0.5

    def __contains__(self, pred_index) -> bool:
        return pred_index in self.mapping

    def __getitem__(self, pred_index) -> int:
        return self.mapping[pred_index]

    def __len__(self) -> int:
        return len(self.mapping)

    def matched_gt(self) -> set:
        return set(self.mapping.values())


def match_from_ious(ious: np.ndarray, threshold: float = 0.5, mode: str = UNIQUE) -> MatchTable:
    """Builds a :class:`MatchTable` from a ``(num_pred, num_gt)`` IoU matrix.

    Every predicted mask picks its best ground-truth node (lowest index on
    ties). In unique mode each node then keeps only the first prediction with
    the strictly highest IoU; legacy mode keeps all of them.
    """
    if mode not in (UNIQUE, LEGACY):
        raise ValueError(f"unknown matching mode {mode!r}")
    num_pred = ious.shape[0]
    if num_pred == 0 or ious.shape[1] == 0:
        return MatchTable({}, mode, threshold)
    best = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(num_pred), best]
    if mode == LEGACY:
        return MatchTable(
            {m: int(best[m]) for m in range(num_pred) if best_iou[m] > threshold}, mode, threshold
        )
    owner: dict[int, int] = {}
    for m in range(num_pred):
        if best_iou[m] <= threshold:
            continue
        x = int(best[m])
        if x not in owner or best_iou[m] > ious[owner[x], x]:
            owner[x] = m
    return MatchTable({m: x for x, m in sorted(owner.items(), key=lambda kv: kv[1])}, mode, threshold)


def match_masks(pred_masks: Sequence[RleMask], gt_masks: Sequence[RleMask], threshold: float = 0.5, mode: str = UNIQUE) -> MatchTable:
    if not 0 < threshold < 1:
        raise ValueError(f"IoU threshold must lie in (0, 1), got {threshold}")
    if not pred_masks or not gt_masks:
        return MatchTable({}, mode, threshold)
    return match_from_ious(iou_matrix(pred_masks, gt_masks), threshold, mode)
