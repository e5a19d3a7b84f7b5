"""Pure-numpy implementations of the hot spatial kernels.

These are the reference versions; ``_kernels_c`` mirrors them loop for loop
and performs its additions in the same order, so both backends agree bitwise.
Feature maps are (H, W, C) arrays.
"""
import numpy as np


def im2col(x, stride):
    """3x3 patches with zero padding 1: (H, W, C) -> (Ho*Wo, 9*C).

    Column order is (ky, kx, c).
    """
    h, w, c = x.shape
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    padded = np.zeros((h + 2, w + 2, c), dtype=x.dtype)
    padded[1:h + 1, 1:w + 1] = x
    cols = np.empty((ho, wo, 3, 3, c), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky, kx, :] = padded[ky:ky + stride * (ho - 1) + 1:stride,
                                           kx:kx + stride * (wo - 1) + 1:stride]
    return cols.reshape(ho * wo, 9 * c)


def col2im(cols, h, w, c, stride):
    """Adjoint of :func:`im2col`: scatter-add patches back to (H, W, C)."""
    ho, wo = (h - 1) // stride + 1, (w - 1) // stride + 1
    blocks = cols.reshape(ho, wo, 3, 3, c)
    padded = np.zeros((h + 2, w + 2, c), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            padded[ky:ky + stride * (ho - 1) + 1:stride,
                   kx:kx + stride * (wo - 1) + 1:stride] += blocks[:, :, ky, kx, :]
    return padded[1:h + 1, 1:w + 1].copy()


def interp_weights(src_len, dst_len, dtype):
    """Half-pixel (align_corners=False) source indices and blend weights."""
    pos = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    pos = np.clip(pos, 0.0, src_len - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, src_len - 1)
    t = pos - i0
    return i0, i1, (1.0 - t).astype(dtype), t.astype(dtype)


def resize_bilinear(m, out_h, out_w):
    """Separable bilinear resize of an (h, w, C) map: rows first, then columns."""
    h, w, _ = m.shape
    y0, y1, wy0, wy1 = interp_weights(h, out_h, m.dtype)
    x0, x1, wx0, wx1 = interp_weights(w, out_w, m.dtype)
    tmp = wy0[:, None, None] * m[y0] + wy1[:, None, None] * m[y1]
    return wx0[None, :, None] * tmp[:, x0] + wx1[None, :, None] * tmp[:, x1]


def resize_bilinear_backward(grad, h, w):
    """Adjoint of :func:`resize_bilinear` for an (out_h, out_w, C) gradient."""
    out_h, out_w, c = grad.shape
    y0, y1, wy0, wy1 = interp_weights(h, out_h, grad.dtype)
    x0, x1, wx0, wx1 = interp_weights(w, out_w, grad.dtype)
    dtmp = np.zeros((out_h, w, c), dtype=grad.dtype)
    for j in range(out_w):
        dtmp[:, x0[j]] += wx0[j] * grad[:, j]
        dtmp[:, x1[j]] += wx1[j] * grad[:, j]
    dm = np.zeros((h, w, c), dtype=grad.dtype)
    for i in range(out_h):
        dm[y0[i]] += wy0[i] * dtmp[i]
        dm[y1[i]] += wy1[i] * dtmp[i]
    return dm
