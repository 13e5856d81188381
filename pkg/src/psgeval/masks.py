"""Binary masks stored as row-major run lengths.

The wire form is a flat list of run lengths that alternate between unset and
set pixels, starting with an unset run (which may be zero). Masks are
canonicalized on construction, so two masks with equal pixels compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from psgeval.errors import MaskFormatError

__all__ = [
    "RleMask",
    "PatchGrid",
    "MergeResult",
    "canonical_runs",
    "rle_decode",
    "rle_encode",
    "iou",
    "iou_matrix",
    "patch_coverage",
    "merge_masks",
]


def canonical_runs(runs: Sequence[int]) -> tuple[int, ...]:
    """Drops internal zero-length runs and trailing zeros, keeping a leading 0-run."""
    segments: list[list[int]] = []
    for idx, r in enumerate(runs):
        r = int(r)
        if r < 0:
            raise MaskFormatError(f"negative run length {r}")
        if r == 0:
            continue
        value = idx % 2
        if segments and segments[-1][0] == value:
            segments[-1][1] += r
        else:
            segments.append([value, r])
    out = [0] if not segments or segments[0][0] == 1 else []
    out.extend(length for _, length in segments)
    return tuple(out)


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    runs: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MaskFormatError(f"non-positive mask size {self.width}x{self.height}")
        runs = canonical_runs(self.runs)
        total = sum(runs)
        if total != self.width * self.height:
            raise MaskFormatError(
                f"runs sum to {total}, expected {self.width}x{self.height}={self.width * self.height}"
            )
        object.__setattr__(self, "runs", runs)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def area(self) -> int:
        return sum(self.runs[1::2])

    def to_array(self) -> np.ndarray:
        return rle_decode(self)

    @classmethod
    def from_array(cls, grid) -> "RleMask":
        return rle_encode(grid)

    @classmethod
    def empty(cls, width: int, height: int) -> "RleMask":
        return cls(width, height, (width * height,))

    @classmethod
    def from_box(cls, width: int, height: int, x1: int, y1: int, x2: int, y2: int) -> "RleMask":
        """Mask with pixels set in columns [x1, x2) and rows [y1, y2)."""
        grid = np.zeros((height, width), dtype=bool)
        grid[y1:y2, x1:x2] = True
        return rle_encode(grid)


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    grid_w: int
    grid_h: int

    @classmethod
    def covering(cls, width: int, height: int, patch_size: int = 8) -> "PatchGrid":
        return cls(patch_size, -(-width // patch_size), -(-height // patch_size))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Returns the dense ``(height, width)`` boolean grid of ``mask``."""
    runs = np.asarray(mask.runs, dtype=np.int64)
    if runs.sum() != mask.width * mask.height:
        raise MaskFormatError("run lengths do not cover the grid")
    values = (np.arange(len(runs)) % 2).astype(bool)
    return np.repeat(values, runs).reshape(mask.height, mask.width)


def rle_encode(grid) -> RleMask:
    grid = np.asarray(grid, dtype=bool)
    if grid.ndim != 2 or grid.shape[0] <= 0 or grid.shape[1] <= 0:
        raise MaskFormatError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = grid.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(grid.shape[1], grid.shape[0], tuple(runs))


def _check_same_size(a: RleMask, b: RleMask):
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def iou(a: RleMask, b: RleMask) -> float:
    _check_same_size(a, b)
    da, db = rle_decode(a), rle_decode(b)
    union = np.count_nonzero(da | db)
    if union == 0:
        return 0.0
    return np.count_nonzero(da & db) / union


def _stack(masks: Sequence[RleMask], width: int, height: int) -> np.ndarray:
    if not masks:
        return np.zeros((0, width * height), dtype=bool)
    for m in masks:
        if (m.width, m.height) != (width, height):
            raise ValueError(f"mask size mismatch: {m.width}x{m.height} vs {width}x{height}")
    return np.stack([rle_decode(m).ravel() for m in masks])


def _iou_from_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a32 = a.astype(np.float32)
    b32 = b.astype(np.float32)
    # float32 products of 0/1 are exact for counts below 2**24.
    inter = (a32 @ b32.T).astype(np.int64)
    area_a = a.sum(axis=1, dtype=np.int64)
    area_b = b.sum(axis=1, dtype=np.int64)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros(inter.shape, dtype=np.float64)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def iou_matrix(rows: Sequence[RleMask], cols: Sequence[RleMask]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(rows), len(cols))``."""
    ref = next(iter(rows), None) or next(iter(cols), None)
    if ref is None:
        return np.zeros((0, 0))
    return _iou_from_dense(
        _stack(rows, ref.width, ref.height), _stack(cols, ref.width, ref.height)
    )


def patch_coverage(mask: RleMask, grid: PatchGrid) -> np.ndarray:
    """Fraction of each patch covered by ``mask``, shape ``(grid_h, grid_w)``.

    Padding pixels beyond the mask extent count as unset.
    """
    s = grid.patch_size
    if s * grid.grid_w < mask.width or s * grid.grid_h < mask.height:
        raise ValueError("patch grid does not cover the mask")
    padded = np.zeros((grid.grid_h * s, grid.grid_w * s), dtype=np.int64)
    padded[: mask.height, : mask.width] = rle_decode(mask)
    counts = padded.reshape(grid.grid_h, s, grid.grid_w, s).sum(axis=(1, 3))
    return counts / float(s * s)


class MergeResult(NamedTuple):
    """Output of :func:`merge_masks`.

    ``remap[i]`` is the output index that input ``i`` was merged into, or -1
    when input ``i`` had no pixels. ``absorbed`` holds inputs whose whole group
    lost every pixel to higher-confidence groups; they remap to the group that
    took most of their pixels.
    """

    masks: list
    remap: tuple
    absorbed: frozenset


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def merge_masks(masks, merge_threshold: float = 0.5) -> MergeResult:
    """Merges duplicate masks into a pairwise-disjoint set.

    Masks of the same class whose IoU exceeds ``merge_threshold`` are grouped
    (transitively). Each group becomes the pixelwise union of its members,
    with confidence equal to the highest member confidence. Pixels claimed by
    several groups go to the group with the higher confidence; ties go to the
    group whose first member comes earlier in the input. Groups left without
    pixels are dropped.

    Args:
      masks: sequence of ``(class_id, confidence, RleMask)``.
      merge_threshold: IoU above which two same-class masks are duplicates.

    Returns:
      A :class:`MergeResult`. Output groups keep the order of their first member.
    """
    masks = list(masks)
    n = len(masks)
    if n == 0:
        return MergeResult([], (), frozenset())
    width, height = masks[0][2].width, masks[0][2].height
    dense = _stack([m for _, _, m in masks], width, height)
    nonempty = dense.any(axis=1)

    parent = list(range(n))
    classes = np.array([c for c, _, _ in masks])
    ious = _iou_from_dense(dense, dense)
    for i in range(n):
        if not nonempty[i]:
            continue
        for j in np.flatnonzero((ious[i, i + 1:] > merge_threshold) & (classes[i + 1:] == classes[i])):
            j = int(j) + i + 1
            ri, rj = _find(parent, i), _find(parent, j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        if nonempty[i]:
            groups.setdefault(_find(parent, i), []).append(i)
    roots = sorted(groups)
    if not roots:
        return MergeResult([], tuple([-1] * n), frozenset())
    union = np.stack([dense[groups[r]].any(axis=0) for r in roots])
    conf = [max(float(masks[i][1]) for i in groups[r]) for r in roots]

    # Priority: higher confidence first, then earlier group.
    order = sorted(range(len(roots)), key=lambda g: (-conf[g], g))
    claimed = union[order]
    first = claimed.argmax(axis=0)
    owner = np.where(claimed.any(axis=0), np.asarray(order)[first], -1)

    kept: list[int] = []
    out_masks = []
    new_index: dict[int, int] = {}
    for g, r in enumerate(roots):
        pixels = owner == g
        if not pixels.any():
            continue
        new_index[g] = len(out_masks)
        kept.append(g)
        cls = masks[groups[r][0]][0]
        out_masks.append((cls, conf[g], rle_encode(pixels.reshape(height, width))))

    remap = [-1] * n
    absorbed: set[int] = set()
    for g, r in enumerate(roots):
        if g in new_index:
            target = new_index[g]
        else:
            winners = owner[union[g]]
            counts = np.bincount(winners, minlength=len(roots))
            target = new_index[int(counts.argmax())]
            absorbed.update(groups[r])
        for i in groups[r]:
            remap[i] = target
    return MergeResult(out_masks, tuple(remap), frozenset(absorbed))
