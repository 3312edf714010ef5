"""Inference-time panoptic post-processing.

Raw head outputs become a panoptic map in three steps: keypoint NMS on
the center heatmap, grouping of thing pixels to the nearest offset-shifted
keypoint, and majority-vote fusion with the semantic prediction.

The two inner loops (window maxima, nearest-keypoint search) run in the
compiled extension when it is built; set PANODEPTH_PURE_PYTHON=1 to force
the numpy fallback.  Both paths are bit-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .panoptic_map import ClassTaxonomy, PanopticMap

if os.environ.get("PANODEPTH_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py


def native_kernels_loaded() -> bool:
    return _impl is not _kernels_py


@dataclass(frozen=True)
class Keypoint:
    row: int
    col: int
    score: float


def keypoint_nms(
    heatmap: np.ndarray, kernel: int = 7, threshold: float = 0.3
) -> list[Keypoint]:
    """Heatmap peaks: local window maxima at or above the threshold.

    Windows are truncated at the border.  Equal-valued maxima that see
    each other within a window form a plateau; only the lexicographically
    smallest (row, col) of each plateau survives.  Keypoints come back in
    raster order.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 2:
        raise ValueError("heatmap must be (H, W)")
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("kernel size must be odd")
    if not np.all(np.isfinite(heatmap)):
        raise ValueError("heatmap values must be finite")
    heatmap = np.ascontiguousarray(heatmap)
    cand = _impl.nms_candidates(heatmap, kernel, threshold).astype(bool)
    rows, cols = np.nonzero(cand)
    if rows.size == 0:
        return []
    r = kernel // 2
    h, w = heatmap.shape
    visited = np.zeros_like(cand)
    keep: list[tuple[int, int]] = []
    # Raster-order seeding guarantees the first unvisited member of every
    # plateau is its lexicographic minimum.
    for i, j in zip(rows.tolist(), cols.tolist()):
        if visited[i, j]:
            continue
        visited[i, j] = True
        keep.append((i, j))
        v = heatmap[i, j]
        stack = [(i, j)]
        while stack:
            ci, cj = stack.pop()
            i0, i1 = max(ci - r, 0), min(ci + r, h - 1)
            j0, j1 = max(cj - r, 0), min(cj + r, w - 1)
            window = (
                cand[i0 : i1 + 1, j0 : j1 + 1]
                & ~visited[i0 : i1 + 1, j0 : j1 + 1]
                & (heatmap[i0 : i1 + 1, j0 : j1 + 1] == v)
            )
            for di, dj in zip(*np.nonzero(window)):
                visited[i0 + di, j0 + dj] = True
                stack.append((i0 + di, j0 + dj))
    return [Keypoint(i, j, float(heatmap[i, j])) for i, j in keep]


def group_instances(
    keypoints: list[Keypoint], offsets: np.ndarray, things: np.ndarray
) -> np.ndarray:
    """Assign each thing pixel to the keypoint nearest its offset target.

    Returns an instance-id grid: keypoint index + 1 on thing pixels, 0
    elsewhere.  Distance ties break toward the lower keypoint index; with
    no keypoints every id is 0.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    things = np.asarray(things, dtype=bool)
    if offsets.ndim != 3 or offsets.shape[2] != 2 or offsets.shape[:2] != things.shape:
        raise ValueError("offsets must be (H, W, 2) matching the thing mask")
    out = np.zeros(things.shape, dtype=np.int32)
    if not keypoints or not np.any(things):
        return out
    rows, cols = np.nonzero(things)
    tr = rows.astype(np.float64) + offsets[rows, cols, 0]
    tc = cols.astype(np.float64) + offsets[rows, cols, 1]
    kr = np.ascontiguousarray([float(k.row) for k in keypoints])
    kc = np.ascontiguousarray([float(k.col) for k in keypoints])
    labels = _impl.group_pixels(
        np.ascontiguousarray(tr), np.ascontiguousarray(tc), kr, kc
    )
    out[rows, cols] = labels + 1
    return out


def majority_vote_fusion(
    instance_grid: np.ndarray, semantic_grid: np.ndarray, taxonomy: ClassTaxonomy
) -> PanopticMap:
    """Give each grouped instance the semantic class with the highest count.

    Count ties go to the smaller class id.  Instances whose majority class
    is not a thing class are dissolved: their pixels keep the per-pixel
    semantic prediction with instance id 0.  Surviving instances are
    renumbered densely 1..M by first raster occurrence; stuff pixels pass
    through verbatim.
    """
    inst = np.asarray(instance_grid, dtype=np.int64)
    sem = np.asarray(semantic_grid, dtype=np.int64)
    if inst.shape != sem.shape:
        raise ValueError("instance and semantic grids must have the same shape")
    m = int(inst.max(initial=0))
    if m == 0:
        return PanopticMap(sem, np.zeros_like(sem, dtype=np.int32), taxonomy)
    n_classes = int(sem.max()) + 1
    counts = np.bincount(
        (inst * n_classes + sem).ravel(), minlength=(m + 1) * n_classes
    ).reshape(m + 1, n_classes)
    winners = np.argmax(counts, axis=1)  # first max = smallest class id

    ids, first = np.unique(inst.ravel(), return_index=True)
    by_first = sorted((int(first[k]), int(ids[k])) for k in range(len(ids)) if ids[k] > 0)
    class_lut = np.zeros(m + 1, dtype=np.int64)
    id_lut = np.zeros(m + 1, dtype=np.int32)
    next_id = 1
    for _, old in by_first:
        win = int(winners[old])
        if taxonomy.is_thing(win):
            class_lut[old] = win
            id_lut[old] = next_id
            next_id += 1
    new_inst = id_lut[inst]
    new_sem = np.where(new_inst > 0, class_lut[inst], sem)
    return PanopticMap(new_sem, new_inst, taxonomy)
