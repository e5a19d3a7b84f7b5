"""Semantic-context loss, pixel cross-entropy and the combined objective."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ginet.numerics import ShapeError, sigmoid

log = logging.getLogger(__name__)

IGNORE_INDEX = 255
LOG_CLAMP = 1e-7


class LabelError(ValueError):
    pass


@dataclass
class LossWeights:
    lam: float = 0.2   # semantic-context weight
    alpha: float = 0.4  # auxiliary head weight

    def __post_init__(self):
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("loss weights must be non-negative")


def presence_vector(mask, num_classes, ignore_index=IGNORE_INDEX):
    """y[i] = 1 iff class i occupies at least one non-ignored pixel."""
    vals = np.asarray(mask).reshape(-1)
    vals = vals[vals != ignore_index]
    y = np.zeros(num_classes, dtype=np.float64)
    y[np.unique(vals)] = 1.0
    return y


def sc_loss(s_o, centroids, y):
    """Binary cross-entropy between per-class presence scores and ``y``.

    Scores are ``v_i = sigmoid(<s_i, c_i>)``. Returns ``(loss, v)``.
    """
    if s_o.shape != centroids.shape:
        raise ShapeError(f"sc_loss: S_o {s_o.shape} vs centroids {centroids.shape}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (s_o.shape[0],):
        raise ShapeError(f"sc_loss: y has shape {y.shape}, expected ({s_o.shape[0]},)")
    if not np.all((y == 0) | (y == 1)):
        raise LabelError("sc_loss: presence vector must be binary")
    v = sigmoid((s_o * centroids).sum(axis=1))
    vc = np.clip(v.astype(np.float64), LOG_CLAMP, 1 - LOG_CLAMP)
    loss = -np.mean(y * np.log(vc) + (1 - y) * np.log(1 - vc))
    return float(loss), v


def sc_loss_backward(s_o, centroids, y, v):
    """Returns (dS_o, dC). Zero gradient where the log clamp is active."""
    y = np.asarray(y, dtype=s_o.dtype)
    m = s_o.shape[0]
    dz = (v - y) / m
    vd = v.astype(np.float64)
    dz = np.where((vd > LOG_CLAMP) & (vd < 1 - LOG_CLAMP), dz, 0).astype(s_o.dtype)
    return dz[:, None] * centroids, dz[:, None] * s_o


def _check_labels(labels, num_classes, ignore_index):
    bad = (labels != ignore_index) & ((labels < 0) | (labels >= num_classes))
    if np.any(bad):
        raise LabelError(f"label {labels[bad][0]} outside [0, {num_classes}) and not ignore_index")


def pixel_cross_entropy(logits, labels, ignore_index=IGNORE_INDEX):
    """Mean negative log-likelihood over non-ignored pixels.

    ``logits`` is (L, M); ``labels`` holds L class indices.
    """
    logits = logits.reshape(-1, logits.shape[-1])
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    _check_labels(labels, logits.shape[1], ignore_index)
    keep = labels != ignore_index
    if not keep.any():
        log.warning("pixel_cross_entropy: every pixel is ignored")
        return 0.0
    z = logits[keep].astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(z.shape[0]), labels[keep]]))


def pixel_cross_entropy_backward(logits, labels, ignore_index=IGNORE_INDEX):
    """Gradient of :func:`pixel_cross_entropy` w.r.t. ``logits`` (same shape)."""
    shape = logits.shape
    flat = logits.reshape(-1, shape[-1])
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    keep = labels != ignore_index
    grad = np.zeros_like(flat)
    n = int(keep.sum())
    if n:
        z = flat[keep] - flat[keep].max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels[keep]] -= 1
        grad[keep] = p / n
    return grad.reshape(shape)


def total_loss(ce, aux, sc, weights: LossWeights):
    return weights.lam * sc + weights.alpha * aux + ce
