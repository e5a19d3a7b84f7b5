import numpy as np
import pytest

from ginet.gradcheck import MODEL_TOY, model_toy_point
from ginet.losses import LossWeights
from ginet.model import (ConfigError, ContractError, GINetConfig, backbone_forward,
                         cooccurrence_matrix, ginet_backward, ginet_forward, init_params,
                         loss_and_grads, no_decay, param_shapes, relu_pattern)
from ginet.numerics import grad_check

SMALL = GINetConfig(nodes=3, node_dim=4, channels=6, embed_dim=5, classes=4,
                    width1=4, width2=4, width3=5)


def test_config_validation():
    with pytest.raises(ConfigError):
        GINetConfig(node_dim=15).validate()
    with pytest.raises(ConfigError):
        GINetConfig(mode="resnet").validate()
    with pytest.raises(ConfigError):
        GINetConfig(nodes=0).validate()
    with pytest.raises(ConfigError):
        GINetConfig(stride=8).validate()
    with pytest.raises(ConfigError):
        GINetConfig().check_input(30, 32)


def test_init_contract():
    p = init_params(GINetConfig(), seed=3)
    assert list(p) == list(param_shapes(GINetConfig()))
    for name, (shape, _, _) in param_shapes(GINetConfig()).items():
        assert p[name].shape == shape and p[name].dtype == np.float32
        assert np.all(np.isfinite(p[name]))
    np.testing.assert_array_equal(p["gi.beta_s2v"], 0)
    np.testing.assert_array_equal(p["gi.beta_v2s"], 0)
    q = init_params(GINetConfig(), seed=3)
    assert all(p[k].tobytes() == q[k].tobytes() for k in p)


def test_no_decay_filter():
    assert no_decay("cls.b") and no_decay("gi.b_mlp") and no_decay("gi.beta_v2s")
    assert not no_decay("cls.W") and not no_decay("gi.A_s")


def test_cooccurrence():
    y = np.array([[1, 1, 0], [1, 0, 1], [1, 1, 0]])
    a = cooccurrence_matrix(y)
    np.testing.assert_array_equal(np.diag(a), 0)
    assert a[1, 0] == pytest.approx(1.0)          # class 1 always seen with class 0
    assert a[0, 1] == pytest.approx(2 / 3)
    p = init_params(SMALL, 0, cooccurrence=np.eye(4))
    np.testing.assert_array_equal(p["gi.A_s"], np.eye(4))


def test_backbone_zero_image_and_size():
    cfg = GINetConfig()
    p = init_params(cfg, 0)
    mid, x = backbone_forward(np.zeros((32, 32, 3), np.float32), p, cfg)
    assert x.shape == (64, cfg.channels)
    assert mid.shape == (8, 8, cfg.width3)
    np.testing.assert_array_equal(x, 0)


def test_backbone_translation_equivariance(rng):
    cfg = SMALL
    p = init_params(cfg, 1, np.float64)
    img = rng.random((32, 32, 3))
    shifted = np.roll(img, (4, 8), axis=(0, 1))
    _, x1 = backbone_forward(img, p, cfg)
    _, x2 = backbone_forward(shifted, p, cfg)
    f1, f2 = x1.reshape(8, 8, -1), x2.reshape(8, 8, -1)
    # a 4x8 pixel shift is 1x2 cells; compare cells whose receptive field
    # (about +-9 pixels) avoids both the zero padding and the wrapped border
    np.testing.assert_allclose(f2[3:6, 4:6], f1[2:5, 2:4], atol=1e-12)
    assert not np.allclose(f2[3:6, 4:6], f1[3:6, 4:6])


def test_forward_shapes_and_determinism(rng):
    cfg = SMALL
    p = init_params(cfg, 2)
    img = rng.random((16, 16, 3)).astype(np.float32)
    l_mat = rng.normal(size=(4, 5)).astype(np.float32)
    main, aux, s_o, v, _ = ginet_forward(img, l_mat, p, cfg)
    assert main.shape == aux.shape == (16, 16, 4)
    assert s_o.shape == (4, 4) and v.shape == (4,)
    again = ginet_forward(img, l_mat, p, cfg)
    assert main.tobytes() == again[0].tobytes() and aux.tobytes() == again[1].tobytes()


def test_baseline_mode_bypasses_gi(rng):
    cfg = GINetConfig(**{**SMALL.to_dict(), "mode": "baseline"})
    p = init_params(cfg, 2)
    main, _, s_o, v, trace = ginet_forward(rng.random((16, 16, 3)).astype(np.float32),
                                           np.zeros((4, 5), np.float32), p, cfg)
    assert s_o is None and v is None
    assert trace["x_tilde"] is trace["x"]


def test_unused_parameters_get_zero_grads(rng):
    cfg = SMALL
    p = init_params(cfg, 4)
    img = rng.random((16, 16, 3)).astype(np.float32)
    mask = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
    l_mat = rng.normal(size=(4, 5)).astype(np.float32)
    terms, g, _ = loss_and_grads(img, mask, l_mat, p, cfg, LossWeights(0, 0))
    np.testing.assert_array_equal(g["sc.centroids"], 0)
    np.testing.assert_array_equal(g["aux.cls.W"], 0)
    assert terms["sc"] == 0.0 and terms["total"] == terms["ce"]


def test_contract_error_on_mismatched_trace(rng):
    p = init_params(SMALL, 0)
    trace = ginet_forward(rng.random((16, 16, 3)).astype(np.float32),
                          np.zeros((4, 5), np.float32), p, SMALL)[4]
    visg = GINetConfig(**{**SMALL.to_dict(), "mode": "visg"})
    with pytest.raises(ContractError):
        ginet_backward(trace, p, visg, np.zeros((16, 16, 4)), np.zeros((16, 16, 4)))


@pytest.mark.parametrize("mode", ["ginet", "visg", "baseline"])
def test_objective_gradient_16x16(mode):
    g = np.random.default_rng(42)
    cfg, point, image, mask, l_mat = model_toy_point(g, mode)
    assert image.shape[:2] == (16, 16) and cfg.classes == MODEL_TOY.classes

    def f(p):
        terms, _, _ = loss_and_grads(image, mask, l_mat, p, cfg, LossWeights(), need_grads=False)
        return terms["total"], relu_pattern(ginet_forward(image, l_mat, p, cfg)[4])

    def b(p):
        return loss_and_grads(image, mask, l_mat, p, cfg, LossWeights())[1]
    rep = grad_check(f"model_{mode}", f, b, point, max_coords=6)
    assert rep.passed(1e-4), str(rep)
