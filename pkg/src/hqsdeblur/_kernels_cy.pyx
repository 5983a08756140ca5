# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: centred 2-D convolution and per-pixel varying convolution.

Boundary modes match ``_kernels_py``: 0 = zero fill, 1 = replicate, 2 = periodic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    i = i % n
    if i < 0:
        i += n
    return i


cdef double _pixel_conv(const double[:, ::1] img, const double[:, ::1] ker,
                        Py_ssize_t r, Py_ssize_t c,
                        Py_ssize_t rh, Py_ssize_t rw, int mode) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t kh = ker.shape[0], kw = ker.shape[1]
    cdef Py_ssize_t a, b, sr, sc
    cdef double acc = 0.0
    for a in range(kh):
        sr = r - a + rh
        if mode == 0:
            if sr < 0 or sr >= h:
                continue
        elif mode == 1:
            sr = _clamp(sr, h)
        else:
            sr = _wrap(sr, h)
        for b in range(kw):
            sc = c - b + rw
            if mode == 0:
                if sc < 0 or sc >= w:
                    continue
            elif mode == 1:
                sc = _clamp(sc, w)
            else:
                sc = _wrap(sc, w)
            acc += ker[a, b] * img[sr, sc]
    return acc


def conv2d_direct(const double[:, ::1] img, const double[:, ::1] ker, int mode):
    """out(p) = sum_q ker(q) * img(p - q) with centred anchor and odd sides."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t rh = ker.shape[0] // 2, rw = ker.shape[1] // 2
    cdef Py_ssize_t kh = ker.shape[0], kw = ker.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, a, b
    cdef double acc
    cdef bint has_interior = (h - rh > rh) and (w - rw > rw)
    with nogil:
        for r in range(h):
            if has_interior and rh <= r < h - rh:
                # rows whose vertical stencil never leaves the grid
                for c in range(rw, w - rw):
                    acc = 0.0
                    for a in range(kh):
                        for b in range(kw):
                            acc += ker[a, b] * img[r - a + rh, c - b + rw]
                    out[r, c] = acc
                for c in range(rw):
                    out[r, c] = _pixel_conv(img, ker, r, c, rh, rw, mode)
                for c in range(w - rw, w):
                    out[r, c] = _pixel_conv(img, ker, r, c, rh, rw, mode)
            else:
                for c in range(w):
                    out[r, c] = _pixel_conv(img, ker, r, c, rh, rw, mode)
    return out_arr


def varying_conv_direct(const double[:, ::1] img, const int[:, ::1] field,
                        const double[:, :, ::1] stack, int mode):
    """Per-pixel kernel gather: out(p) = sum_q stack[field(p)](q) * img(p - q)."""
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t rh = stack.shape[1] // 2, rw = stack.shape[2] // 2
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(h):
            for c in range(w):
                out[r, c] = _pixel_conv(img, stack[field[r, c]], r, c, rh, rw, mode)
    return out_arr
