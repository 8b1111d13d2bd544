# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: conv patch extraction, 2x2 max pooling, cascade scan.

Results must stay bit-identical to ``_kernels_py``; keep the floating point
accumulation order of both in sync.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n * oh * ow, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col
    cdef Py_ssize_t iy, ix
    with nogil:
        for b in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    row = (b * oh + oy) * ow + ox
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[row, col] = x[b, ch, iy, ix]
                                col += 1
    return out_arr


def col2im(cols_in, x_shape, int kh, int kw, int stride, int pad):
    cdef double[:, ::1] cols = np.ascontiguousarray(cols_in, dtype=np.float64)
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    # accumulate on a padded grid in the same (i, j) order as the numpy path
    hp = h + 2 * pad
    wp = w + 2 * pad
    dx_arr = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col
    with nogil:
        for i in range(kh):
            for j in range(kw):
                for b in range(n):
                    for oy in range(oh):
                        for ox in range(ow):
                            row = (b * oh + oy) * ow + ox
                            for ch in range(c):
                                col = (ch * kh + i) * kw + j
                                dx[b, ch, oy * stride + i, ox * stride + j] += cols[row, col]
    if pad:
        dx_arr = dx_arr[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dx_arr)


def maxpool2_forward(double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2] // 2, w = x.shape[3] // 2
    out_arr = np.empty((n, c, h, w), dtype=np.float64)
    idx_arr = np.empty((n, c, h, w), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ch, y, xx
    cdef double best, v
    cdef cnp.int8_t k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(h):
                    for xx in range(w):
                        best = x[b, ch, 2 * y, 2 * xx]
                        k = 0
                        v = x[b, ch, 2 * y, 2 * xx + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = x[b, ch, 2 * y + 1, 2 * xx]
                        if v > best:
                            best = v
                            k = 2
                        v = x[b, ch, 2 * y + 1, 2 * xx + 1]
                        if v > best:
                            best = v
                            k = 3
                        out[b, ch, y, xx] = best
                        idx[b, ch, y, xx] = k
    return out_arr, idx_arr


def maxpool2_backward(dout_in, idx_in, x_shape):
    cdef double[:, :, :, ::1] dout = np.ascontiguousarray(dout_in, dtype=np.float64)
    cdef cnp.int8_t[:, :, :, ::1] idx = np.ascontiguousarray(idx_in, dtype=np.int8)
    dx_arr = np.zeros(tuple(x_shape), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, y, xx
    cdef int k
    with nogil:
        for b in range(dout.shape[0]):
            for ch in range(dout.shape[1]):
                for y in range(dout.shape[2]):
                    for xx in range(dout.shape[3]):
                        k = idx[b, ch, y, xx]
                        dx[b, ch, 2 * y + k // 2, 2 * xx + k % 2] = dout[b, ch, y, xx]
    return dx_arr


cdef inline double _box(const double[:, ::1] t, Py_ssize_t x, Py_ssize_t y,
                        Py_ssize_t w, Py_ssize_t h) noexcept nogil:
    return t[y + h, x + w] - t[y, x + w] - t[y + h, x] + t[y, x]


def cascade_scan(const double[:, ::1] ii, const double[:, ::1] sq, int step,
                 int win_w, int win_h,
                 const double[::1] stage_thr, const cnp.int64_t[::1] stage_first,
                 const cnp.int64_t[::1] stage_count,
                 const cnp.int64_t[::1] weak_node, const cnp.int64_t[::1] weak_leaf,
                 const cnp.int64_t[::1] node_left, const cnp.int64_t[::1] node_right,
                 const cnp.int64_t[::1] node_feat, const double[::1] node_thr,
                 const double[::1] leaves,
                 const cnp.int64_t[:, :, ::1] rects, const double[:, ::1] weights):
    cdef Py_ssize_t h = ii.shape[0] - 1, w = ii.shape[1] - 1
    cdef Py_ssize_t nstages = stage_thr.shape[0]
    cdef double area = <double>((win_w - 2) * (win_h - 2))
    cdef Py_ssize_t x, y, st, k, r, f, node
    cdef long long idx
    cdef double s, q, nf, inv, total, acc, wt
    cdef bint ok
    found = []
    if h < win_h or w < win_w:
        return np.zeros((0, 2), dtype=np.int64)
    for y in range(0, h - win_h + 1, step):
        for x in range(0, w - win_w + 1, step):
            with nogil:
                s = _box(ii, x + 1, y + 1, win_w - 2, win_h - 2)
                q = _box(sq, x + 1, y + 1, win_w - 2, win_h - 2)
                nf = area * q - s * s
                if nf > 0.0:
                    nf = sqrt(nf)
                else:
                    nf = 1.0
                inv = 1.0 / nf
                ok = True
                for st in range(nstages):
                    total = 0.0
                    for k in range(stage_first[st], stage_first[st] + stage_count[st]):
                        idx = 0
                        while True:
                            node = weak_node[k] + idx
                            f = node_feat[node]
                            acc = 0.0
                            for r in range(3):
                                wt = weights[f, r]
                                if wt == 0.0:
                                    continue
                                acc = acc + wt * _box(ii, x + rects[f, r, 0], y + rects[f, r, 1],
                                                      rects[f, r, 2], rects[f, r, 3])
                            acc = acc * inv
                            if acc < node_thr[node]:
                                idx = node_left[node]
                            else:
                                idx = node_right[node]
                            if idx <= 0:
                                break
                        total = total + leaves[weak_leaf[k] - idx]
                    if total < stage_thr[st]:
                        ok = False
                        break
            if ok:
                found.append((x, y))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(found, dtype=np.int64)
