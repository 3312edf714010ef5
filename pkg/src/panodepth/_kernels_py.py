"""Pure-numpy versions of the post-processing kernels.

Import-time fallback when the compiled extension is unavailable (or
disabled via PANODEPTH_PURE_PYTHON=1).  Outputs are bit-identical to the
compiled kernels.
"""

from __future__ import annotations

import numpy as np


def _axis_running_max(a: np.ndarray, r: int, axis: int) -> np.ndarray:
    out = a.copy()
    for shift in range(1, r + 1):
        lo = np.full_like(a, -np.inf)
        hi = np.full_like(a, -np.inf)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        src[axis] = slice(shift, None)
        dst[axis] = slice(None, -shift)
        lo[tuple(dst)] = a[tuple(src)]
        src[axis] = slice(None, -shift)
        dst[axis] = slice(shift, None)
        hi[tuple(dst)] = a[tuple(src)]
        np.maximum(out, lo, out=out)
        np.maximum(out, hi, out=out)
    return out


def nms_candidates(heatmap: np.ndarray, kernel: int, threshold: float) -> np.ndarray:
    """Mask of pixels >= threshold equal to their truncated-window maximum."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    r = kernel // 2
    win_max = _axis_running_max(_axis_running_max(heatmap, r, axis=1), r, axis=0)
    return ((heatmap >= threshold) & (heatmap == win_max)).astype(np.uint8)


def group_pixels(
    tr: np.ndarray, tc: np.ndarray, kr: np.ndarray, kc: np.ndarray
) -> np.ndarray:
    """Index of the nearest keypoint for each target position.

    Squared Euclidean distance; np.argmin keeps the lowest keypoint index
    on ties, matching the compiled kernel.
    """
    if kr.shape[0] == 0:
        raise ValueError("need at least one keypoint")
    n = tr.shape[0]
    out = np.zeros(n, dtype=np.int64)
    # Chunk the (pixels x keypoints) distance matrix to bound memory.
    chunk = max(1, int(4_000_000 // max(kr.shape[0], 1)))
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        dr = tr[s:e, None] - kr[None, :]
        dc = tc[s:e, None] - kc[None, :]
        d = dr * dr + dc * dc
        out[s:e] = np.argmin(d, axis=1)
    return out
