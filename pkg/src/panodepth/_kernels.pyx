# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the panoptic post-processing hot loops.

Must stay bit-identical to the numpy implementations in _kernels_py.py;
the test suite compares both.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def nms_candidates(double[:, ::1] heatmap, int kernel, double threshold):
    """Mask of pixels >= threshold equal to their truncated-window maximum."""
    cdef Py_ssize_t h = heatmap.shape[0]
    cdef Py_ssize_t w = heatmap.shape[1]
    cdef int r = kernel // 2
    out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef Py_ssize_t i, j, ii, jj, i0, i1, j0, j1
    cdef double v
    cdef bint is_max
    for i in range(h):
        i0 = i - r if i - r > 0 else 0
        i1 = i + r if i + r < h - 1 else h - 1
        for j in range(w):
            v = heatmap[i, j]
            if v < threshold:
                continue
            j0 = j - r if j - r > 0 else 0
            j1 = j + r if j + r < w - 1 else w - 1
            is_max = True
            for ii in range(i0, i1 + 1):
                for jj in range(j0, j1 + 1):
                    if heatmap[ii, jj] > v:
                        is_max = False
                        break
                if not is_max:
                    break
            if is_max:
                o[i, j] = 1
    return out


def group_pixels(double[::1] tr, double[::1] tc, double[::1] kr, double[::1] kc):
    """Index of the nearest keypoint for each target position.

    Squared Euclidean distance; ties keep the lowest keypoint index.
    """
    cdef Py_ssize_t n = tr.shape[0]
    cdef Py_ssize_t m = kr.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t p, k
    cdef double best, d, dr, dc, pr, pc
    cdef double inf = float("inf")
    cdef Py_ssize_t bi
    if m == 0:
        raise ValueError("need at least one keypoint")
    for p in range(n):
        pr = tr[p]
        pc = tc[p]
        best = inf
        bi = 0
        for k in range(m):
            dr = pr - kr[k]
            dc = pc - kc[k]
            d = dr * dr + dc * dc
            if d < best:
                best = d
                bi = k
        o[p] = bi
    return out
