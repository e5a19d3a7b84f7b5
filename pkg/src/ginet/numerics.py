"""Dense kernels with hand-written vector-Jacobian products, plus the
finite-difference gradient checker used to certify all of them.

Matrices are plain 2-D numpy arrays. Training uses float32, gradient checks
float64; every kernel preserves the dtype of its inputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "ProbeError",
    "GradCheckReport",
    "matmul",
    "matmul_backward",
    "row_softmax",
    "row_softmax_backward",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "make_rng",
    "hash_seed",
    "seeded_init",
    "grad_check",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class ProbeError(RuntimeError):
    """Raised when a finite-difference probe produces a non-finite value."""


# ---------------------------------------------------------------------------
# kernels

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(a, b, grad_out):
    """Return ``(dA, dB)`` for ``C = A @ B``."""
    return grad_out @ b.T, a.T @ grad_out


def row_softmax(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # takes the softmax *output*, which is all the Jacobian needs
    inner = (grad_out * out).sum(axis=1, keepdims=True)
    return out * (grad_out - inner)


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0)


def relu_backward(pre: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (pre > 0)


def sigmoid(m: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * out * (1 - out)


# ---------------------------------------------------------------------------
# randomness

def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox-4x64 generator keyed by ``(seed, stream)``.

    Philox is counter based, so the draw sequence for a key is fixed across
    platforms. The 128-bit key packs the 64-bit seed in the low word and the
    stream id in the high word.
    """
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | ((int(stream) & 0xFFFFFFFFFFFFFFFF) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def hash_seed(*parts) -> int:
    """64-bit seed from a BLAKE2b digest of the ``:``-joined parts."""
    text = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def seeded_init(shape, scheme: str = "fan_in_uniform", seed: int = 0,
                fan_in: int | None = None, dtype=np.float32) -> np.ndarray:
    """Deterministic parameter initializer.

    ``fan_in_uniform`` draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in
    defaults to ``shape[0]``. The draw is made in float64 and then cast, so
    float32 and float64 results agree up to rounding.
    """
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    if not shape or any(int(s) <= 0 for s in shape):
        raise ShapeError(f"seeded_init: invalid shape {shape}")
    if scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if scheme != "fan_in_uniform":
        raise ValueError(f"unknown init scheme {scheme!r}")
    bound = 1.0 / np.sqrt(fan_in if fan_in is not None else shape[0])
    return make_rng(seed).uniform(-bound, bound, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    op: str
    max_rel_error: float
    worst: tuple  # (parameter name, flat index)
    step: float
    n_coords: int = 0
    n_kinks: int = 0  # probes skipped because they crossed a relu kink

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol

    def __str__(self) -> str:
        name, idx = self.worst
        return (f"{self.op:<30s} max_rel_err={self.max_rel_error:.3e} "
                f"worst={name}[{idx}] coords={self.n_coords} kinks={self.n_kinks} h={self.step:g}")


def _split(result):
    if isinstance(result, tuple):
        return float(result[0]), result[1]
    return float(result), None


def grad_check(name: str,
               forward: Callable[[dict], float],
               backward: Callable[[dict], dict],
               point: dict,
               step: float = 1e-5,
               max_coords: int | None = None,
               seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``forward(point)`` returns a scalar, or ``(scalar, pattern)`` where
    ``pattern`` is the boolean activation pattern of every relu in the
    computation. A probe whose pattern differs from the unperturbed one has
    stepped over a kink, where the central difference is not a derivative;
    such coordinates are counted in ``n_kinks`` and left out of the error.

    ``backward(point)`` returns gradients keyed like ``point``. Arrays in
    ``point`` are perturbed in place and restored. With ``max_coords`` set,
    at most that many coordinates per array are probed (seeded choice).
    """
    analytic = backward(point)
    _, base_pattern = _split(forward(point))
    worst_err, worst_at, count, kinks = 0.0, ("", 0), 0, 0
    rng = make_rng(seed, stream=1)
    for key in sorted(analytic):
        x = point[key]
        g = np.asarray(analytic[key], dtype=np.float64).reshape(-1)
        flat = x.reshape(-1)  # view; arrays in a point must be contiguous
        if g.size != flat.size:
            raise ShapeError(f"{name}: gradient for {key!r} has {g.size} entries, expected {flat.size}")
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            fp, pat_p = _split(forward(point))
            flat[i] = orig - step
            fm, pat_m = _split(forward(point))
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ProbeError(f"{name}: non-finite forward value probing {key}[{i}]")
            if base_pattern is not None and not (np.array_equal(pat_p, base_pattern)
                                                 and np.array_equal(pat_m, base_pattern)):
                kinks += 1
                continue
            numeric = (fp - fm) / (2 * step)
            err = abs(g[i] - numeric) / max(abs(g[i]), abs(numeric), 1e-8)
            count += 1
            if err > worst_err or count == 1:
                worst_err, worst_at = err, (key, int(i))
    return GradCheckReport(name, float(worst_err), worst_at, step, count, kinks)
