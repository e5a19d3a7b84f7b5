import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ginet import _kernels_py, kernels
from ginet.model import ConfigError, bilinear_upsample, conv3x3

try:
    from ginet import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

needs_ext = pytest.mark.skipif(_kernels_c is None, reason="compiled kernels not built")


def formula_bilinear(m, out_h, out_w):
    """Half-pixel bilinear resize evaluated pixel by pixel."""
    h, w, c = m.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        for j in range(out_w):
            sy = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1)
            sx = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * m[y0, x0] + (1 - fy) * fx * m[y0, x1]
                         + fy * (1 - fx) * m[y1, x0] + fy * fx * m[y1, x1])
    return out


def loop_conv(x, w, b, stride):
    h, wd, c = x.shape
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    k = w.reshape(3, 3, c, -1)
    out = np.zeros((ho, wo, w.shape[1]))
    for i in range(ho):
        for j in range(wo):
            for ky in range(3):
                for kx in range(3):
                    y, xx = i * stride + ky - 1, j * stride + kx - 1
                    if 0 <= y < h and 0 <= xx < wd:
                        out[i, j] += x[y, xx] @ k[ky, kx]
    return np.maximum(out + b, 0)


def test_upsample_2x2_to_4x4_formula():
    m = np.array([[[1.0], [2.0]], [[3.0], [5.0]]])
    np.testing.assert_allclose(bilinear_upsample(m, 4, 4), formula_bilinear(m, 4, 4), atol=1e-12)
    # corners replicate, interior interpolates
    out = bilinear_upsample(m, 4, 4)[..., 0]
    assert out[0, 0] == 1.0 and out[3, 3] == 5.0
    assert out[1, 1] == pytest.approx(0.5625 * 1 + 0.1875 * 2 + 0.1875 * 3 + 0.0625 * 5)


def test_upsample_random_vs_formula(rng):
    m = rng.normal(size=(3, 5, 2))
    np.testing.assert_allclose(bilinear_upsample(m, 12, 20), formula_bilinear(m, 12, 20), atol=1e-12)


def test_upsample_identity_and_constant(rng):
    m = rng.normal(size=(4, 4, 3))
    np.testing.assert_array_equal(bilinear_upsample(m, 4, 4), m)
    const = np.full((2, 3, 1), 0.7)
    np.testing.assert_allclose(bilinear_upsample(const, 8, 12), 0.7, atol=1e-15)


def test_upsample_rejects_bad_targets():
    m = np.zeros((4, 4, 1))
    with pytest.raises(ConfigError):
        bilinear_upsample(m, 0, 4)
    with pytest.raises(ConfigError):
        bilinear_upsample(m, 2, 4)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_matches_loops(rng, stride):
    x = rng.normal(size=(6, 6, 3))
    w = rng.normal(size=(27, 4))
    b = rng.normal(size=4)
    out, _, _ = conv3x3(x, w, b, stride)
    np.testing.assert_allclose(out, loop_conv(x, w, b, stride), atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_col2im_is_adjoint_of_im2col(rng, stride):
    x = rng.normal(size=(5, 7, 2))
    cols = kernels.im2col(x, stride)
    c = rng.normal(size=cols.shape)
    lhs = (cols * c).sum()
    rhs = (x * kernels.col2im(c, 5, 7, 2, stride)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_resize_backward_is_adjoint(rng):
    m = rng.normal(size=(3, 4, 2))
    g = rng.normal(size=(9, 16, 2))
    lhs = (kernels.resize_bilinear(m, 9, 16) * g).sum()
    rhs = (m * kernels.resize_bilinear_backward(g, 3, 4)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("stride", [1, 2])
def test_backends_bitwise_equal(rng, dtype, stride):
    x = rng.normal(size=(8, 6, 5)).astype(dtype)
    a, b = _kernels_py.im2col(x, stride), _kernels_c.im2col(x, stride)
    assert a.dtype == b.dtype and a.tobytes() == b.tobytes()
    c = rng.normal(size=a.shape).astype(dtype)
    assert _kernels_py.col2im(c, 8, 6, 5, stride).tobytes() == _kernels_c.col2im(c, 8, 6, 5, stride).tobytes()
    m = rng.normal(size=(3, 5, 4)).astype(dtype)
    assert _kernels_py.resize_bilinear(m, 12, 20).tobytes() == _kernels_c.resize_bilinear(m, 12, 20).tobytes()
    g = rng.normal(size=(12, 20, 4)).astype(dtype)
    assert (_kernels_py.resize_bilinear_backward(g, 3, 5).tobytes()
            == _kernels_c.resize_bilinear_backward(g, 3, 5).tobytes())


def test_backend_reported():
    assert kernels.BACKEND in ("python", "cython")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(1, 4))
def test_upsample_preserves_range(h, w, factor, seed):
    m = np.random.default_rng(seed).uniform(-1, 1, size=(h, w, 2))
    out = bilinear_upsample(m, h * factor, w * factor)
    assert out.min() >= m.min() - 1e-12 and out.max() <= m.max() + 1e-12


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys
    env = {**os.environ, "GINET_KERNELS": "python"}
    out = subprocess.run([sys.executable, "-c", "from ginet import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
