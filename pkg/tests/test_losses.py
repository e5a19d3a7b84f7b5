import logging
import math

import numpy as np
import pytest

from ginet.losses import (LabelError, LossWeights, pixel_cross_entropy, pixel_cross_entropy_backward,
                          presence_vector, sc_loss, sc_loss_backward, total_loss)
from ginet.numerics import ShapeError


def test_sc_loss_symmetric_point(rng):
    for y in ([1, 0, 1], [0, 0, 0], [1, 1, 1]):
        loss, v = sc_loss(np.zeros((3, 4)), rng.normal(size=(3, 4)), y)
        assert loss == pytest.approx(math.log(2), abs=1e-12)
        np.testing.assert_array_equal(v, 0.5)


def test_sc_loss_worked_example():
    # row dot products ln 3 and -ln 3
    s_o = np.array([[math.log(3.0), 0.0], [0.0, -math.log(3.0)]])
    c = np.array([[1.0, 5.0], [7.0, 1.0]])
    loss, v = sc_loss(s_o, c, [1, 0])
    np.testing.assert_allclose(v, [0.75, 0.25], atol=1e-15)
    assert loss == pytest.approx(-0.5 * (math.log(0.75) + math.log(0.75)), abs=1e-12)
    assert loss == pytest.approx(0.2877, abs=1e-4)


def test_sc_loss_monotone_and_clamped():
    c = np.ones((1, 1))
    losses = [sc_loss(np.array([[t]]), c, [1])[0] for t in (0.0, 2.0, 8.0, 50.0, 1e4)]
    assert all(a >= b for a, b in zip(losses, losses[1:]))
    assert losses[-1] >= 0 and np.isfinite(sc_loss(np.array([[-1e4]]), c, [1])[0])
    assert sc_loss(np.array([[-1e4]]), c, [1])[0] == pytest.approx(-math.log(1e-7))


def test_sc_loss_gradient_zero_under_clamp():
    s, c = np.array([[-1e4]]), np.ones((1, 1))
    _, v = sc_loss(s, c, [1])
    ds, dc = sc_loss_backward(s, c, np.array([1.0]), v)
    assert ds[0, 0] == 0 and dc[0, 0] == 0


def test_sc_loss_contract_errors():
    with pytest.raises(LabelError):
        sc_loss(np.zeros((2, 2)), np.zeros((2, 2)), [1, 2])
    with pytest.raises(ShapeError):
        sc_loss(np.zeros((2, 2)), np.zeros((3, 2)), [1, 0])
    with pytest.raises(ShapeError):
        sc_loss(np.zeros((2, 2)), np.zeros((2, 2)), [1, 0, 1])


def test_pixel_ce_uniform_and_saturated():
    assert pixel_cross_entropy(np.zeros((5, 6)), [0, 1, 2, 3, 4]) == pytest.approx(math.log(6))
    logits = np.zeros((3, 4))
    logits[np.arange(3), [2, 0, 3]] = 50
    assert pixel_cross_entropy(logits, [2, 0, 3]) == pytest.approx(0, abs=1e-18)


def test_pixel_ce_three_pixel_loops(rng):
    logits = rng.normal(size=(3, 4))
    labels = [1, 255, 3]
    terms = []
    for i, lab in enumerate(labels):
        if lab == 255:
            continue
        terms.append(-math.log(math.exp(logits[i, lab]) / sum(math.exp(v) for v in logits[i])))
    assert pixel_cross_entropy(logits, labels) == pytest.approx(sum(terms) / len(terms), abs=1e-12)
    g = pixel_cross_entropy_backward(logits, np.array(labels))
    np.testing.assert_array_equal(g[1], 0)
    np.testing.assert_allclose(g.sum(axis=1), 0, atol=1e-15)


def test_pixel_ce_spatial_shape(rng):
    logits = rng.normal(size=(2, 3, 4))
    labels = rng.integers(0, 4, size=(2, 3))
    assert pixel_cross_entropy(logits, labels) == pytest.approx(
        pixel_cross_entropy(logits.reshape(6, 4), labels.reshape(6)))
    assert pixel_cross_entropy_backward(logits, labels).shape == logits.shape


def test_pixel_ce_all_ignored(caplog):
    with caplog.at_level(logging.WARNING):
        assert pixel_cross_entropy(np.zeros((2, 3)), [255, 255]) == 0.0
    assert "ignored" in caplog.text
    np.testing.assert_array_equal(pixel_cross_entropy_backward(np.zeros((2, 3)), np.array([255, 255])), 0)


def test_pixel_ce_bad_label():
    with pytest.raises(LabelError):
        pixel_cross_entropy(np.zeros((2, 3)), [0, 3])


def test_total_loss():
    assert total_loss(1.0, 1.0, 1.0, LossWeights()) == pytest.approx(1.6)
    assert total_loss(0.7, 5.0, 9.0, LossWeights(0, 0)) == 0.7
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.4)


def test_presence_vector_ignores_pad():
    mask = np.array([[0, 2], [255, 2]], dtype=np.uint8)
    np.testing.assert_array_equal(presence_vector(mask, 4), [1, 0, 1, 0])
