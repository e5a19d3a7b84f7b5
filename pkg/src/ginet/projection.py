"""Projection of local features onto visual-graph nodes and back.

X is (L, C) with one row per spatial location. The assignment Z is (N, L)
and each row is a softmax over locations, so every node is a convex
combination of location features.
"""
import numpy as np

from ginet.numerics import ShapeError, matmul, row_softmax, row_softmax_backward


def _check(cond, msg):
    if not cond:
        raise ShapeError(msg)


def compute_assignment(x, w_z):
    """Z = softmax_rows(W_z X^T); returns (N, L)."""
    _check(x.ndim == 2 and x.shape[0] >= 1, f"compute_assignment: bad X shape {x.shape}")
    _check(w_z.shape[1] == x.shape[1],
           f"compute_assignment: W_z {w_z.shape} does not match X {x.shape}")
    return row_softmax(w_z @ x.T)


def compute_assignment_backward(x, w_z, z, dz):
    """Returns (dX, dW_z)."""
    da = row_softmax_backward(z, dz)
    return da.T @ w_z, da @ x


def project(x, z, w):
    """P = Z X W."""
    _check(z.shape[1] == x.shape[0], f"project: Z {z.shape} does not match X {x.shape}")
    return matmul(matmul(z, x), w)


def project_backward(x, z, w, dp):
    """Returns (dX, dZ, dW)."""
    zx = z @ x
    dzx = dp @ w.T
    return z.T @ dzx, dzx @ x.T, zx.T @ dp


def reproject(p_o, z, w_o, x):
    """X~ = Z^T P_o W_o + X."""
    _check(z.shape[0] == p_o.shape[0], f"reproject: Z {z.shape} does not match P_o {p_o.shape}")
    _check(z.shape[1] == x.shape[0] and w_o.shape[1] == x.shape[1],
           f"reproject: output {(z.shape[1], w_o.shape[1])} does not match X {x.shape}")
    return matmul(z.T, matmul(p_o, w_o)) + x


def reproject_backward(p_o, z, w_o, dx_out):
    """Returns (dP_o, dZ, dW_o); the residual's dX is ``dx_out`` itself."""
    r = p_o @ w_o
    dr = z @ dx_out
    return dr @ w_o.T, r @ dx_out.T, p_o.T @ dr


def assignment_heatmaps(z, h, w):
    """Each node's weights over locations as an (h, w) map scaled to 0..255."""
    maps = z.reshape(z.shape[0], h, w).astype(np.float64)
    peak = maps.max(axis=(1, 2), keepdims=True)
    return np.round(255.0 * maps / np.where(peak > 0, peak, 1.0)).astype(np.uint8)
