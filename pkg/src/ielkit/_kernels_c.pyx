# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors the surface of `_kernels_np`: exact cross-correlation, the
5-point stencil and 2x bilinear resampling under zero / replicate /
periodic padding, all in float64.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

PAD_MODES = ("zero", "replicate", "periodic")

cdef int _mode_id(str mode) except -1:
    if mode == "zero":
        return 0
    if mode == "replicate":
        return 1
    if mode == "periodic":
        return 2
    raise ValueError(f"unknown padding mode {mode!r}")


cdef void _index_map(Py_ssize_t[::1] out, Py_ssize_t n, Py_ssize_t p, int mode) noexcept:
    # out[t] = source index for padded position t - p, or -1 for a zero tap.
    cdef Py_ssize_t t, i
    for t in range(n + 2 * p):
        i = t - p
        if 0 <= i < n:
            out[t] = i
        elif mode == 1:
            out[t] = 0 if i < 0 else n - 1
        elif mode == 2:
            i = i % n
            if i < 0:
                i += n
            out[t] = i
        else:
            out[t] = -1


def conv2d_fwd(x, k, b, str mode):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] kv = np.ascontiguousarray(k, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t cout = kv.shape[0], cin = kv.shape[1], kk = kv.shape[2]
    cdef Py_ssize_t h = xv.shape[1], w = xv.shape[2], p = kk // 2
    cdef int m = _mode_id(mode)
    out_arr = np.empty((cout, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    rmap_arr = np.empty(h + 2 * p, dtype=np.intp)
    cmap_arr = np.empty(w + 2 * p, dtype=np.intp)
    cdef Py_ssize_t[::1] rmap = rmap_arr, cmap = cmap_arr
    _index_map(rmap, h, p, m)
    _index_map(cmap, w, p, m)

    cdef Py_ssize_t co, ci, u, v, i, j, si, sj
    cdef double wgt
    with nogil:
        for co in range(cout):
            for i in range(h):
                for j in range(w):
                    out[co, i, j] = bv[co]
            for ci in range(cin):
                for u in range(kk):
                    for v in range(kk):
                        wgt = kv[co, ci, u, v]
                        for i in range(h):
                            si = rmap[i + u]
                            if si < 0:
                                continue
                            for j in range(w):
                                sj = cmap[j + v]
                                if sj >= 0:
                                    out[co, i, j] += wgt * xv[ci, si, sj]
    return out_arr


def conv2d_bwd_input(gy, k, str mode):
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, :, ::1] kv = np.ascontiguousarray(k, dtype=np.float64)
    cdef Py_ssize_t cout = kv.shape[0], cin = kv.shape[1], kk = kv.shape[2]
    cdef Py_ssize_t h = gv.shape[1], w = gv.shape[2], p = kk // 2
    cdef int m = _mode_id(mode)
    gx_arr = np.zeros((cin, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    rmap_arr = np.empty(h + 2 * p, dtype=np.intp)
    cmap_arr = np.empty(w + 2 * p, dtype=np.intp)
    cdef Py_ssize_t[::1] rmap = rmap_arr, cmap = cmap_arr
    _index_map(rmap, h, p, m)
    _index_map(cmap, w, p, m)

    cdef Py_ssize_t co, ci, u, v, i, j, si, sj
    cdef double wgt
    with nogil:
        for ci in range(cin):
            for co in range(cout):
                for u in range(kk):
                    for v in range(kk):
                        wgt = kv[co, ci, u, v]
                        for i in range(h):
                            si = rmap[i + u]
                            if si < 0:
                                continue
                            for j in range(w):
                                sj = cmap[j + v]
                                if sj >= 0:
                                    gx[ci, si, sj] += wgt * gv[co, i, j]
    return gx_arr


def conv2d_bwd_kernel(gy, x, Py_ssize_t kk, str mode):
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t cout = gv.shape[0], cin = xv.shape[0]
    cdef Py_ssize_t h = xv.shape[1], w = xv.shape[2], p = kk // 2
    cdef int m = _mode_id(mode)
    gk_arr = np.zeros((cout, cin, kk, kk), dtype=np.float64)
    gb_arr = np.zeros(cout, dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef double[::1] gb = gb_arr
    rmap_arr = np.empty(h + 2 * p, dtype=np.intp)
    cmap_arr = np.empty(w + 2 * p, dtype=np.intp)
    cdef Py_ssize_t[::1] rmap = rmap_arr, cmap = cmap_arr
    _index_map(rmap, h, p, m)
    _index_map(cmap, w, p, m)

    cdef Py_ssize_t co, ci, u, v, i, j, si, sj
    cdef double acc
    with nogil:
        for co in range(cout):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += gv[co, i, j]
            gb[co] = acc
            for ci in range(cin):
                for u in range(kk):
                    for v in range(kk):
                        acc = 0.0
                        for i in range(h):
                            si = rmap[i + u]
                            if si < 0:
                                continue
                            for j in range(w):
                                sj = cmap[j + v]
                                if sj >= 0:
                                    acc += gv[co, i, j] * xv[ci, si, sj]
                        gk[co, ci, u, v] = acc
    return gk_arr, gb_arr


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


cdef void _lin_taps(Py_ssize_t[::1] lo, Py_ssize_t[::1] hi, double[::1] t, Py_ssize_t n) noexcept:
    # Output i samples the input at (i + 0.5)/2 - 0.5, edge-clamped.
    cdef Py_ssize_t i, i0
    cdef double src
    for i in range(2 * n):
        src = (i + 0.5) / 2.0 - 0.5
        i0 = <Py_ssize_t>floor(src)
        t[i] = src - i0
        lo[i] = _clamp(i0, n)
        hi[i] = _clamp(i0 + 1, n)


def upsample2x_fwd(x):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2]
    out_arr = np.empty((c, 2 * h, 2 * w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    ylo_a = np.empty(2 * h, dtype=np.intp); yhi_a = np.empty(2 * h, dtype=np.intp)
    xlo_a = np.empty(2 * w, dtype=np.intp); xhi_a = np.empty(2 * w, dtype=np.intp)
    ty_a = np.empty(2 * h, dtype=np.float64); tx_a = np.empty(2 * w, dtype=np.float64)
    cdef Py_ssize_t[::1] ylo = ylo_a, yhi = yhi_a, xlo = xlo_a, xhi = xhi_a
    cdef double[::1] ty = ty_a, tx = tx_a
    _lin_taps(ylo, yhi, ty, h)
    _lin_taps(xlo, xhi, tx, w)

    cdef Py_ssize_t ch, i, j
    cdef double a0, a1
    with nogil:
        for ch in range(c):
            for i in range(2 * h):
                for j in range(2 * w):
                    a0 = (1.0 - tx[j]) * xv[ch, ylo[i], xlo[j]] + tx[j] * xv[ch, ylo[i], xhi[j]]
                    a1 = (1.0 - tx[j]) * xv[ch, yhi[i], xlo[j]] + tx[j] * xv[ch, yhi[i], xhi[j]]
                    out[ch, i, j] = (1.0 - ty[i]) * a0 + ty[i] * a1
    return out_arr


def upsample2x_bwd(gy):
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t c = gv.shape[0], h = gv.shape[1] // 2, w = gv.shape[2] // 2
    gx_arr = np.zeros((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    ylo_a = np.empty(2 * h, dtype=np.intp); yhi_a = np.empty(2 * h, dtype=np.intp)
    xlo_a = np.empty(2 * w, dtype=np.intp); xhi_a = np.empty(2 * w, dtype=np.intp)
    ty_a = np.empty(2 * h, dtype=np.float64); tx_a = np.empty(2 * w, dtype=np.float64)
    cdef Py_ssize_t[::1] ylo = ylo_a, yhi = yhi_a, xlo = xlo_a, xhi = xhi_a
    cdef double[::1] ty = ty_a, tx = tx_a
    _lin_taps(ylo, yhi, ty, h)
    _lin_taps(xlo, xhi, tx, w)

    cdef Py_ssize_t ch, i, j
    cdef double g
    with nogil:
        for ch in range(c):
            for i in range(2 * h):
                for j in range(2 * w):
                    g = gv[ch, i, j]
                    gx[ch, ylo[i], xlo[j]] += (1.0 - ty[i]) * (1.0 - tx[j]) * g
                    gx[ch, ylo[i], xhi[j]] += (1.0 - ty[i]) * tx[j] * g
                    gx[ch, yhi[i], xlo[j]] += ty[i] * (1.0 - tx[j]) * g
                    gx[ch, yhi[i], xhi[j]] += ty[i] * tx[j] * g
    return gx_arr


def laplacian_fwd(x, str mode):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], h = xv.shape[1], w = xv.shape[2]
    cdef int m = _mode_id(mode)
    out_arr = np.empty((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    rmap_arr = np.empty(h + 2, dtype=np.intp)
    cmap_arr = np.empty(w + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] rmap = rmap_arr, cmap = cmap_arr
    _index_map(rmap, h, 1, m)
    _index_map(cmap, w, 1, m)

    cdef Py_ssize_t ch, i, j, up, dn, lf, rt
    cdef double acc
    with nogil:
        for ch in range(c):
            for i in range(h):
                up = rmap[i]
                dn = rmap[i + 2]
                for j in range(w):
                    lf = cmap[j]
                    rt = cmap[j + 2]
                    acc = -4.0 * xv[ch, i, j]
                    if up >= 0:
                        acc += xv[ch, up, j]
                    if dn >= 0:
                        acc += xv[ch, dn, j]
                    if lf >= 0:
                        acc += xv[ch, i, lf]
                    if rt >= 0:
                        acc += xv[ch, i, rt]
                    out[ch, i, j] = acc
    return out_arr


def laplacian_adj(gy, str mode):
    cdef double[:, :, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t c = gv.shape[0], h = gv.shape[1], w = gv.shape[2]
    cdef int m = _mode_id(mode)
    gx_arr = np.zeros((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    rmap_arr = np.empty(h + 2, dtype=np.intp)
    cmap_arr = np.empty(w + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] rmap = rmap_arr, cmap = cmap_arr
    _index_map(rmap, h, 1, m)
    _index_map(cmap, w, 1, m)

    cdef Py_ssize_t ch, i, j, up, dn, lf, rt
    cdef double g
    with nogil:
        for ch in range(c):
            for i in range(h):
                up = rmap[i]
                dn = rmap[i + 2]
                for j in range(w):
                    lf = cmap[j]
                    rt = cmap[j + 2]
                    g = gv[ch, i, j]
                    gx[ch, i, j] -= 4.0 * g
                    if up >= 0:
                        gx[ch, up, j] += g
                    if dn >= 0:
                        gx[ch, dn, j] += g
                    if lf >= 0:
                        gx[ch, i, lf] += g
                    if rt >= 0:
                        gx[ch, i, rt] += g
    return gx_arr
