# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_kernels_py``.

Loop order and accumulation order match the numpy versions exactly.
"""
import numpy as np
cimport numpy as cnp

from ginet._kernels_py import interp_weights

cnp.import_array()

ctypedef fused real:
    float
    double


cdef void _im2col(const real[:, :, ::1] x, real[:, ::1] cols, int stride) noexcept nogil:
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t ho = (h - 1) // stride + 1, wo = (w - 1) // stride + 1
    cdef Py_ssize_t oy, ox, ky, kx, ch, iy, ix, row, base
    for oy in range(ho):
        for ox in range(wo):
            row = oy * wo + ox
            for ky in range(3):
                iy = oy * stride + ky - 1
                for kx in range(3):
                    ix = ox * stride + kx - 1
                    base = (ky * 3 + kx) * c
                    if iy < 0 or iy >= h or ix < 0 or ix >= w:
                        for ch in range(c):
                            cols[row, base + ch] = 0
                    else:
                        for ch in range(c):
                            cols[row, base + ch] = x[iy, ix, ch]


def im2col(x, int stride):
    x = np.ascontiguousarray(x)
    h, w, c = x.shape
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    cols = np.empty((ho * wo, 9 * c), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col[float](x, cols, stride)
    else:
        _im2col[double](x, cols, stride)
    return cols


cdef void _col2im(const real[:, ::1] cols, real[:, :, ::1] out, int stride) noexcept nogil:
    cdef Py_ssize_t h = out.shape[0], w = out.shape[1], c = out.shape[2]
    cdef Py_ssize_t ho = (h - 1) // stride + 1, wo = (w - 1) // stride + 1
    cdef Py_ssize_t oy, ox, ky, kx, ch, iy, ix, base
    # offset-major so each output element accumulates in (ky, kx) order
    for ky in range(3):
        for kx in range(3):
            base = (ky * 3 + kx) * c
            for oy in range(ho):
                iy = oy * stride + ky - 1
                if iy < 0 or iy >= h:
                    continue
                for ox in range(wo):
                    ix = ox * stride + kx - 1
                    if ix < 0 or ix >= w:
                        continue
                    for ch in range(c):
                        out[iy, ix, ch] = out[iy, ix, ch] + cols[oy * wo + ox, base + ch]


def col2im(cols, int h, int w, int c, int stride):
    cols = np.ascontiguousarray(cols)
    out = np.zeros((h, w, c), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im[float](cols, out, stride)
    else:
        _col2im[double](cols, out, stride)
    return out


cdef void _resize(const real[:, :, ::1] m, real[:, :, ::1] tmp, real[:, :, ::1] out,
                  const Py_ssize_t[::1] y0, const Py_ssize_t[::1] y1,
                  const real[::1] wy0, const real[::1] wy1,
                  const Py_ssize_t[::1] x0, const Py_ssize_t[::1] x1,
                  const real[::1] wx0, const real[::1] wx1) noexcept nogil:
    cdef Py_ssize_t oh = out.shape[0], ow = out.shape[1], c = out.shape[2], w = m.shape[1]
    cdef Py_ssize_t i, j, ch
    cdef real a, b
    for i in range(oh):
        for j in range(w):
            for ch in range(c):
                a = wy0[i] * m[y0[i], j, ch]
                b = wy1[i] * m[y1[i], j, ch]
                tmp[i, j, ch] = a + b
    for i in range(oh):
        for j in range(ow):
            for ch in range(c):
                a = wx0[j] * tmp[i, x0[j], ch]
                b = wx1[j] * tmp[i, x1[j], ch]
                out[i, j, ch] = a + b


def resize_bilinear(m, int out_h, int out_w):
    m = np.ascontiguousarray(m)
    h, w, c = m.shape
    y0, y1, wy0, wy1 = interp_weights(h, out_h, m.dtype)
    x0, x1, wx0, wx1 = interp_weights(w, out_w, m.dtype)
    tmp = np.empty((out_h, w, c), dtype=m.dtype)
    out = np.empty((out_h, out_w, c), dtype=m.dtype)
    if m.dtype == np.float32:
        _resize[float](m, tmp, out, y0, y1, wy0, wy1, x0, x1, wx0, wx1)
    else:
        _resize[double](m, tmp, out, y0, y1, wy0, wy1, x0, x1, wx0, wx1)
    return out


cdef void _resize_bwd(const real[:, :, ::1] g, real[:, :, ::1] dtmp, real[:, :, ::1] dm,
                      const Py_ssize_t[::1] y0, const Py_ssize_t[::1] y1,
                      const real[::1] wy0, const real[::1] wy1,
                      const Py_ssize_t[::1] x0, const Py_ssize_t[::1] x1,
                      const real[::1] wx0, const real[::1] wx1) noexcept nogil:
    cdef Py_ssize_t oh = g.shape[0], ow = g.shape[1], c = g.shape[2]
    cdef Py_ssize_t i, j, ch
    cdef real p
    for j in range(ow):
        for i in range(oh):
            for ch in range(c):
                p = wx0[j] * g[i, j, ch]
                dtmp[i, x0[j], ch] = dtmp[i, x0[j], ch] + p
            for ch in range(c):
                p = wx1[j] * g[i, j, ch]
                dtmp[i, x1[j], ch] = dtmp[i, x1[j], ch] + p
    for i in range(oh):
        for j in range(dm.shape[1]):
            for ch in range(c):
                p = wy0[i] * dtmp[i, j, ch]
                dm[y0[i], j, ch] = dm[y0[i], j, ch] + p
            for ch in range(c):
                p = wy1[i] * dtmp[i, j, ch]
                dm[y1[i], j, ch] = dm[y1[i], j, ch] + p


def resize_bilinear_backward(grad, int h, int w):
    grad = np.ascontiguousarray(grad)
    out_h, out_w, c = grad.shape
    y0, y1, wy0, wy1 = interp_weights(h, out_h, grad.dtype)
    x0, x1, wx0, wx1 = interp_weights(w, out_w, grad.dtype)
    dtmp = np.zeros((out_h, w, c), dtype=grad.dtype)
    dm = np.zeros((h, w, c), dtype=grad.dtype)
    if grad.dtype == np.float32:
        _resize_bwd[float](grad, dtmp, dm, y0, y1, wy0, wy1, x0, x1, wx0, wx1)
    else:
        _resize_bwd[double](grad, dtmp, dm, y0, y1, wy0, wy1, x0, x1, wx0, wx1)
    return dm
