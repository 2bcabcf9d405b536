# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled kernels: im2col patch extraction and the 3x3 box sum.

Each function mirrors its NumPy fallback in nncore.kernels bit for bit:
the gathers copy the same elements and the box sum adds in the same
association order, including the zero-padding terms, so switching
backends never changes a single output bit.
"""

import numpy as np

cimport numpy as cnp

ctypedef fused real:
    float
    double


def im2col2d(real[:, :, :, ::1] x, int k):
    """(B, H, W, C) -> (B, H, W, k*k*C) zero-padded patch matrix."""
    cdef Py_ssize_t b = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef int p = k // 2
    out_np = np.zeros((b, h, w, k * k * c), dtype=np.asarray(x).dtype)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t bi, y, xx, ty, tx, ci, sy, sx, base
    with nogil:
        for bi in range(b):
            for y in range(h):
                for xx in range(w):
                    for ty in range(k):
                        sy = y + ty - p
                        if sy < 0 or sy >= h:
                            continue
                        for tx in range(k):
                            sx = xx + tx - p
                            if sx < 0 or sx >= w:
                                continue
                            base = (ty * k + tx) * c
                            for ci in range(c):
                                out[bi, y, xx, base + ci] = x[bi, sy, sx, ci]
    return out_np


def im2col1d(real[:, :, ::1] x, int k):
    """(B, L, C) -> (B, L, k*C) zero-padded patch matrix."""
    cdef Py_ssize_t b = x.shape[0], n = x.shape[1], c = x.shape[2]
    cdef int p = k // 2
    out_np = np.zeros((b, n, k * c), dtype=np.asarray(x).dtype)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t bi, i, t, ci, si, base
    with nogil:
        for bi in range(b):
            for i in range(n):
                for t in range(k):
                    si = i + t - p
                    if si < 0 or si >= n:
                        continue
                    base = t * c
                    for ci in range(c):
                        out[bi, i, base + ci] = x[bi, si, ci]
    return out_np


def boxsum3x3(real[:, :, ::1] x):
    """(H, W, M) -> (H, W, M) zero-padded 3x3 neighborhood sum.

    Separable passes with fixed association: (left + mid) + right along
    columns, then (up + mid) + down along rows, padding terms included as
    literal zeros — exactly what the NumPy fallback's slice adds do.
    """
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], m = x.shape[2]
    dtype = np.asarray(x).dtype
    tmp_np = np.empty((h, w, m), dtype=dtype)
    out_np = np.empty((h, w, m), dtype=dtype)
    cdef real[:, :, ::1] tmp = tmp_np
    cdef real[:, :, ::1] out = out_np
    cdef real left, right, up, down
    cdef Py_ssize_t i, j, t
    with nogil:
        for i in range(h):
            for j in range(w):
                for t in range(m):
                    left = x[i, j - 1, t] if j > 0 else <real>0.0
                    right = x[i, j + 1, t] if j < w - 1 else <real>0.0
                    tmp[i, j, t] = (left + x[i, j, t]) + right
        for i in range(h):
            for j in range(w):
                for t in range(m):
                    up = tmp[i - 1, j, t] if i > 0 else <real>0.0
                    down = tmp[i + 1, j, t] if i < h - 1 else <real>0.0
                    out[i, j, t] = (up + tmp[i, j, t]) + down
    return out_np
