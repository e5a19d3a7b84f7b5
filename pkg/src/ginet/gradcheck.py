"""Finite-difference certification of every backward pass in the package.

Each check builds a random float64 point, a scalar objective
``sum(R * op(point))`` with a fixed random weighting ``R`` (or the op's own
scalar loss), and hands both directions to :func:`ginet.numerics.grad_check`.
"""
from __future__ import annotations

import numpy as np

from ginet import gi_unit as gi
from ginet import projection as pj
from ginet.losses import (LossWeights, pixel_cross_entropy,
                          pixel_cross_entropy_backward, sc_loss,
                          sc_loss_backward)
from ginet.model import (GINetConfig, bilinear_upsample, conv3x3,
                         conv3x3_backward, ginet_forward,
                         loss_and_grads, param_shapes, relu_pattern)
from ginet import kernels
from ginet.numerics import (grad_check, make_rng, relu, relu_backward,
                            row_softmax, row_softmax_backward, sigmoid,
                            sigmoid_backward)

STEP = 1e-5
TOL = 1e-4

# toy sizes for the unit-level check
GI_TOY = dict(N=2, M=3, L=6, C=4, D=4, K=5)
MODEL_TOY = GINetConfig(nodes=2, node_dim=4, channels=6, embed_dim=5, classes=3,
                        width1=4, width2=4, width3=5)


def _u(rng, *shape, scale=1.0):
    return np.ascontiguousarray(rng.uniform(-scale, scale, size=shape))


def _weighted(out_fn, grad_fn, rng, out_shape):
    r = _u(rng, *out_shape)
    return (lambda pt: float((r * out_fn(pt)).sum())), (lambda pt: grad_fn(pt, r))


def check_matmul(rng):
    b = _u(rng, 3, 3)
    f, g = _weighted(lambda p: p["A"] @ b, lambda p, r: {"A": r @ b.T}, rng, (3, 3))
    return "matmul", f, g, {"A": _u(rng, 3, 3)}


def check_row_softmax(rng):
    f, g = _weighted(lambda p: row_softmax(p["M"]),
                     lambda p, r: {"M": row_softmax_backward(row_softmax(p["M"]), r)}, rng, (2, 4))
    return "row_softmax", f, g, {"M": _u(rng, 2, 4, scale=3)}


def check_relu(rng):
    r = _u(rng, 3, 5)
    return ("relu", lambda p: (float((r * relu(p["M"])).sum()), p["M"] > 0),
            lambda p: {"M": relu_backward(p["M"], r)}, {"M": _u(rng, 3, 5)})


def check_sigmoid(rng):
    f, g = _weighted(lambda p: sigmoid(p["M"]),
                     lambda p, r: {"M": sigmoid_backward(sigmoid(p["M"]), r)}, rng, (3, 5))
    return "sigmoid", f, g, {"M": _u(rng, 3, 5, scale=4)}


def _check_conv(rng, stride):
    x = _u(rng, 6, 5, 3)
    ho, wo = (6 - 1) // stride + 1, (5 - 1) // stride + 1
    r = _u(rng, ho, wo, 4)

    def f(p):
        out, _, pre = conv3x3(p["x"], p["W"], p["b"], stride)
        return float((r * out).sum()), pre > 0

    def g(p):
        _, cols, pre = conv3x3(p["x"], p["W"], p["b"], stride)
        dx, dw, db = conv3x3_backward(p["x"].shape, p["W"], cols, pre, r, stride)
        return {"x": dx, "W": dw, "b": db}
    return f"conv3x3_stride{stride}", f, g, {"x": x, "W": _u(rng, 27, 4), "b": _u(rng, 4, scale=0.2)}


def check_conv_s1(rng):
    return _check_conv(rng, 1)


def check_conv_s2(rng):
    return _check_conv(rng, 2)


def check_upsample(rng):
    f, g = _weighted(lambda p: bilinear_upsample(p["m"], 7, 9),
                     lambda p, r: {"m": kernels.resize_bilinear_backward(r, 3, 4)}, rng, (7, 9, 2))
    return "bilinear_upsample", f, g, {"m": _u(rng, 3, 4, 2)}


def check_assignment(rng):
    n, l, c = 3, 5, 4

    def grad(p, r):
        z = pj.compute_assignment(p["x"], p["W_z"])
        dx, dwz = pj.compute_assignment_backward(p["x"], p["W_z"], z, r)
        return {"x": dx, "W_z": dwz}
    f, g = _weighted(lambda p: pj.compute_assignment(p["x"], p["W_z"]), grad, rng, (n, l))
    return "compute_assignment", f, g, {"x": _u(rng, l, c), "W_z": _u(rng, n, c)}


def check_project(rng):
    n, l, c, d = 3, 5, 4, 2

    def grad(p, r):
        dx, dz, dw = pj.project_backward(p["x"], p["z"], p["W"], r)
        return {"x": dx, "z": dz, "W": dw}
    f, g = _weighted(lambda p: pj.project(p["x"], p["z"], p["W"]), grad, rng, (n, d))
    return "project", f, g, {"x": _u(rng, l, c), "z": _u(rng, n, l), "W": _u(rng, c, d)}


def check_reproject(rng):
    n, l, c, d = 3, 5, 4, 2

    def grad(p, r):
        dp, dz, dw = pj.reproject_backward(p["p_o"], p["z"], p["W_o"], r)
        return {"p_o": dp, "z": dz, "W_o": dw, "x": r.copy()}
    f, g = _weighted(lambda p: pj.reproject(p["p_o"], p["z"], p["W_o"], p["x"]), grad, rng, (l, c))
    return "reproject", f, g, {"p_o": _u(rng, n, d), "z": _u(rng, n, l), "W_o": _u(rng, d, c),
                               "x": _u(rng, l, c)}


def check_semantic_mlp(rng):
    m, k, d = 3, 5, 4
    l_mat = _u(rng, m, k)
    r = _u(rng, m, d)

    def f(p):
        pre = l_mat @ p["W_mlp"] + p["b_mlp"]
        return float((r * gi.semantic_mlp(l_mat, p["W_mlp"], p["b_mlp"])).sum()), pre > 0

    def g(p):
        pre = l_mat @ p["W_mlp"] + p["b_mlp"]
        dw, db = gi.semantic_mlp_backward(l_mat, pre, r)
        return {"W_mlp": dw, "b_mlp": db}
    return "semantic_mlp", f, g, {"W_mlp": _u(rng, k, d), "b_mlp": _u(rng, d, scale=0.3)}


def _check_gcn(rng, name):
    n, d = 3, 4
    r = _u(rng, n, d)

    def pre(p):
        return (p["A"] @ p["H"] + p["H"]) @ p["W"]

    def f(p):
        return float((r * gi.graph_conv(p["H"], p["A"], p["W"])).sum()), pre(p) > 0

    def g(p):
        dh, da, dw = gi.graph_conv_backward(p["H"], p["A"], p["W"], pre(p), r)
        return {"H": dh, "A": da, "W": dw}
    return name, f, g, {"H": _u(rng, n, d), "A": _u(rng, n, n), "W": _u(rng, d, d)}


def check_evolve_visual(rng):
    return _check_gcn(rng, "evolve_visual")


def check_evolve_semantic(rng):
    return _check_gcn(rng, "evolve_semantic")


def _guidance_point(rng, n=3, m=4, d=4):
    return {"p_t": _u(rng, n, d), "s_t": _u(rng, m, d),
            "W_p": _u(rng, d // 2, d), "W_s_att": _u(rng, d // 2, d)}


def check_guidance_s2v(rng):
    def grad(p, r):
        g_ = gi.guidance_s2v(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"])
        dp, ds, dwp, dws = gi.guidance_backward(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"],
                                                g_, None, r, None)
        return {"p_t": dp, "s_t": ds, "W_p": dwp, "W_s_att": dws}
    f, g = _weighted(lambda p: gi.guidance_s2v(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"]),
                     grad, rng, (3, 4))
    return "guidance_s2v", f, g, _guidance_point(rng)


def check_guidance_v2s(rng):
    def grad(p, r):
        g_ = gi.guidance_v2s(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"])
        dp, ds, dwp, dws = gi.guidance_backward(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"],
                                                None, g_, None, r)
        return {"p_t": dp, "s_t": ds, "W_p": dwp, "W_s_att": dws}
    f, g = _weighted(lambda p: gi.guidance_v2s(p["p_t"], p["s_t"], p["W_p"], p["W_s_att"]),
                     grad, rng, (4, 3))
    return "guidance_v2s", f, g, _guidance_point(rng)


def check_s2v_update(rng):
    n, m, d = 3, 4, 4

    def grad(p, r):
        dp, ds, dg, dw, db = gi.s2v_update_backward(p["p_t"], p["s_t"], p["G"], p["W"], p["beta"], r)
        return {"p_t": dp, "s_t": ds, "G": dg, "W": dw, "beta": db}
    f, g = _weighted(lambda p: gi.s2v_update(p["p_t"], p["s_t"], p["G"], p["W"], p["beta"]),
                     grad, rng, (n, d))
    return "s2v_update", f, g, {"p_t": _u(rng, n, d), "s_t": _u(rng, m, d), "G": _u(rng, n, m),
                                "W": _u(rng, d, d), "beta": _u(rng, n)}


def check_v2s_update(rng):
    n, m, d = 3, 4, 4

    def grad(p, r):
        dp, ds, dg, dw, db = gi.v2s_update_backward(p["p_t"], p["s_t"], p["G"], p["W"], p["beta"], r)
        return {"p_t": dp, "s_t": ds, "G": dg, "W": dw, "beta": db}
    f, g = _weighted(lambda p: gi.v2s_update(p["p_t"], p["s_t"], p["G"], p["W"], p["beta"]),
                     grad, rng, (m, d))
    return "v2s_update", f, g, {"p_t": _u(rng, n, d), "s_t": _u(rng, m, d), "G": _u(rng, m, n),
                                "W": _u(rng, d, d), "beta": _u(rng, m)}


def gi_toy_point(rng, zero_beta=False):
    """Random GI-unit parameters plus an input X at the toy sizes."""
    n, m, l, c, d, k = (GI_TOY[s] for s in "NMLCDK")
    shapes = {
        "proj.W_z": (n, c), "proj.W": (c, d), "proj.W_o": (d, c),
        "gi.W_mlp": (k, d), "gi.b_mlp": (d,), "gi.A_v": (n, n), "gi.W_v": (d, d),
        "gi.A_s": (m, m), "gi.W_s_gcn": (d, d), "gi.W_p": (d // 2, d), "gi.W_s_att": (d // 2, d),
        "gi.W_s2v": (d, d), "gi.W_v2s": (d, d), "gi.beta_s2v": (n,), "gi.beta_v2s": (m,),
    }
    point = {name: _u(rng, *shape) for name, shape in shapes.items()}
    if zero_beta:
        point["gi.beta_s2v"][:] = 0
        point["gi.beta_v2s"][:] = 0
    point["x"] = _u(rng, l, c)
    return point, _u(rng, m, k)


def check_gi_unit(rng):
    point, l_mat = gi_toy_point(rng)

    def f(p):
        xt, so, tr = gi.gi_forward(p["x"], l_mat, p)
        pattern = np.concatenate([(tr[k] > 0).ravel() for k in ("p_pre", "s_pre", "s_pre_mlp")])
        return float(xt.sum() + so.sum()), pattern

    def g(p):
        xt, so, tr = gi.gi_forward(p["x"], l_mat, p)
        dx, grads = gi.gi_backward(tr, p, np.ones_like(xt), np.ones_like(so))
        grads["x"] = dx
        return grads
    return "gi_unit", f, g, point


def check_sc_loss(rng):
    m, d = 4, 3
    y = np.array([1.0, 0.0, 1.0, 0.0])

    def f(p):
        return sc_loss(p["S_o"], p["C"], y)[0]

    def g(p):
        _, v = sc_loss(p["S_o"], p["C"], y)
        ds, dc = sc_loss_backward(p["S_o"], p["C"], y, v)
        return {"S_o": ds, "C": dc}
    return "sc_loss", f, g, {"S_o": _u(rng, m, d), "C": _u(rng, m, d)}


def check_pixel_ce(rng):
    labels = rng.integers(0, 4, size=7)
    labels[2] = 255
    return ("pixel_cross_entropy", lambda p: pixel_cross_entropy(p["logits"], labels),
            lambda p: {"logits": pixel_cross_entropy_backward(p["logits"], labels)},
            {"logits": _u(rng, 7, 4, scale=2)})


def model_toy_point(rng, mode="ginet"):
    """Parameters for the toy model at a well-conditioned random point.

    Weights are drawn at He-uniform scale and the zero-initialized gates and
    biases are randomized, so every path carries gradient well above the
    finite-difference noise floor.
    """
    cfg = GINetConfig(**{**MODEL_TOY.to_dict(), "mode": mode})
    params = {}
    for name, (shape, scheme, fan_in) in param_shapes(cfg).items():
        bound = np.sqrt(6.0 / fan_in) if scheme == "fan_in_uniform" else 0.5
        params[name] = _u(rng, *shape, scale=bound)
    image = np.ascontiguousarray(rng.uniform(0, 1, size=(16, 16, 3)))
    mask = rng.integers(0, cfg.classes, size=(16, 16))
    mask[0, :3] = 255
    l_mat = _u(rng, cfg.classes, cfg.embed_dim)
    return cfg, params, image, mask, l_mat


def _check_model(rng, mode):
    cfg, params, image, mask, l_mat = model_toy_point(rng, mode)
    weights = LossWeights(0.2, 0.4)

    def f(p):
        terms, _, _ = loss_and_grads(image, mask, l_mat, p, cfg, weights, need_grads=False)
        _, _, _, _, trace = ginet_forward(image, l_mat, p, cfg)
        return terms["total"], relu_pattern(trace)

    def g(p):
        return loss_and_grads(image, mask, l_mat, p, cfg, weights)[1]
    return f"model_{mode}", f, g, params


def check_model_ginet(rng):
    return _check_model(rng, "ginet")


def check_model_visg(rng):
    return _check_model(rng, "visg")


def check_model_baseline(rng):
    return _check_model(rng, "baseline")


CHECKS = [
    check_matmul, check_row_softmax, check_relu, check_sigmoid,
    check_conv_s1, check_conv_s2, check_upsample,
    check_assignment, check_project, check_reproject,
    check_semantic_mlp, check_evolve_visual, check_evolve_semantic,
    check_guidance_s2v, check_guidance_v2s, check_s2v_update, check_v2s_update,
    check_gi_unit, check_sc_loss, check_pixel_ce,
    check_model_ginet, check_model_visg, check_model_baseline,
]


def _corrupt(backward):
    def wrapped(point):
        grads = backward(point)
        key = sorted(grads)[0]
        bad = np.array(grads[key], dtype=np.float64, copy=True)
        bad.reshape(-1)[0] = bad.reshape(-1)[0] * 1.01 + 1e-3
        return {**grads, key: bad}
    return wrapped


def run_suite(seeds=(0, 1, 2), fault=None, step=STEP, only=None):
    """Run every check for every seed; returns a list of (seed, report).

    ``fault`` names a check whose backward output is deliberately perturbed,
    as a negative control for the harness itself.
    """
    reports = []
    for seed in seeds:
        for i, make in enumerate(CHECKS):
            name, f, g, point = make(make_rng(seed, stream=100 + i))
            if only is not None and name not in only:
                continue
            if fault is not None and name == fault:
                g = _corrupt(g)
            reports.append((seed, grad_check(name, f, g, point, step=step, seed=seed)))
    return reports


def check_names():
    return [make(make_rng(0, 100 + i))[0] for i, make in enumerate(CHECKS)]
