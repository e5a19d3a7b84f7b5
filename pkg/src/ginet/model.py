"""GINet assembly: conv backbone, GI unit, main and auxiliary heads.

Images are (H, W, 3) arrays. The backbone is four 3x3 conv + relu blocks
with strides (1, 2, 2, 1); block 3 feeds the auxiliary head and block 4 is
the feature map X handed to the GI unit. Parameters are a flat dict of
named arrays (see :func:`param_shapes`).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ginet import kernels
from ginet.gi_unit import gi_backward, gi_forward
from ginet.losses import (LossWeights, pixel_cross_entropy,
                          pixel_cross_entropy_backward, presence_vector,
                          sc_loss, sc_loss_backward, total_loss)
from ginet.numerics import ShapeError, hash_seed, relu, relu_backward, seeded_init, sigmoid

MODES = ("ginet", "visg", "baseline")
BLOCK_STRIDES = (1, 2, 2, 1)


class ConfigError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


@dataclass
class GINetConfig:
    nodes: int = 8          # N
    node_dim: int = 16      # D
    channels: int = 32      # C, width of backbone block 4
    embed_dim: int = 50     # K
    classes: int = 6        # M
    width1: int = 16
    width2: int = 16
    width3: int = 32        # also the auxiliary head width
    stride: int = 4
    mode: str = "ginet"

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "mode" and (not isinstance(v, int) or v <= 0):
                raise ConfigError(f"model.{f.name} must be a positive integer, got {v!r}")
        if self.node_dim % 2:
            raise ConfigError(f"model.node_dim must be even, got {self.node_dim}")
        if self.classes < 2:
            raise ConfigError("model.classes must be at least 2")
        if self.stride != int(np.prod(BLOCK_STRIDES)):
            raise ConfigError(f"model.stride must be {int(np.prod(BLOCK_STRIDES))} for this backbone")
        if self.mode not in MODES:
            raise ConfigError(f"model.mode must be one of {MODES}, got {self.mode!r}")
        return self

    @property
    def block_widths(self):
        return (self.width1, self.width2, self.width3, self.channels)

    def check_input(self, h, w):
        if h % self.stride or w % self.stride or h <= 0 or w <= 0:
            raise ConfigError(f"input {h}x{w} is not divisible by stride {self.stride}")

    def to_dict(self):
        return asdict(self)


def param_shapes(cfg: GINetConfig):
    """Ordered ``name -> (shape, init, fan_in)``; the order is the checkpoint order."""
    n, d, c, k, m = cfg.nodes, cfg.node_dim, cfg.channels, cfg.embed_dim, cfg.classes
    table = {}
    cin = 3
    for i, cout in enumerate(cfg.block_widths, 1):
        table[f"backbone.conv{i}.W"] = ((9 * cin, cout), "fan_in_uniform", 9 * cin)
        table[f"backbone.conv{i}.b"] = ((cout,), "zeros", None)
        cin = cout
    cm = cfg.width3
    table.update({
        "proj.W_z": ((n, c), "fan_in_uniform", c),
        "proj.W": ((c, d), "fan_in_uniform", c),
        "proj.W_o": ((d, c), "fan_in_uniform", d),
        "gi.W_mlp": ((k, d), "fan_in_uniform", k),
        "gi.b_mlp": ((d,), "zeros", None),
        "gi.A_v": ((n, n), "fan_in_uniform", n),
        "gi.W_v": ((d, d), "fan_in_uniform", d),
        "gi.A_s": ((m, m), "fan_in_uniform", m),
        "gi.W_s_gcn": ((d, d), "fan_in_uniform", d),
        "gi.W_p": ((d // 2, d), "fan_in_uniform", d),
        "gi.W_s_att": ((d // 2, d), "fan_in_uniform", d),
        "gi.W_s2v": ((d, d), "fan_in_uniform", d),
        "gi.W_v2s": ((d, d), "fan_in_uniform", d),
        "gi.beta_s2v": ((n,), "zeros", None),
        "gi.beta_v2s": ((m,), "zeros", None),
        "sc.centroids": ((m, d), "fan_in_uniform", d),
        "cls.W": ((c, m), "fan_in_uniform", c),
        "cls.b": ((m,), "zeros", None),
        "aux.conv.W": ((9 * cm, cm), "fan_in_uniform", 9 * cm),
        "aux.conv.b": ((cm,), "zeros", None),
        "aux.cls.W": ((cm, m), "fan_in_uniform", cm),
        "aux.cls.b": ((m,), "zeros", None),
    })
    return table


def no_decay(name):
    """Biases and the zero-initialized gates are excluded from weight decay."""
    return name.endswith(".b") or name.startswith("gi.b_") or name.startswith("gi.beta_")


def init_params(cfg: GINetConfig, seed: int, dtype=np.float32, cooccurrence=None):
    """Fresh parameters; every array is seeded from ``(seed, name)``.

    ``cooccurrence`` (M x M), when given, replaces the random A_s.
    """
    cfg.validate()
    params = {}
    for name, (shape, scheme, fan_in) in param_shapes(cfg).items():
        params[name] = seeded_init(shape, scheme, hash_seed(seed, name), fan_in, dtype)
    if cooccurrence is not None:
        co = np.asarray(cooccurrence, dtype=dtype)
        if co.shape != (cfg.classes, cfg.classes):
            raise ShapeError(f"co-occurrence matrix {co.shape} does not match {cfg.classes} classes")
        params["gi.A_s"] = co.copy()
    return params


def cooccurrence_matrix(presence):
    """A[i, j] = P(class j present | class i present), zero diagonal."""
    y = np.asarray(presence, dtype=np.float64)
    both = y.T @ y
    count = np.diag(both).copy()
    a = both / np.where(count > 0, count, 1.0)[:, None]
    np.fill_diagonal(a, 0.0)
    return a


def cast_params(params, dtype):
    return {k: v.astype(dtype) for k, v in params.items()}


def conv3x3(x, w, b, stride):
    """Returns (out, cols, pre) for relu(conv3x3(x) + b)."""
    h, wd, _ = x.shape
    cols = kernels.im2col(x, stride)
    pre = cols @ w + b
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1
    return relu(pre).reshape(ho, wo, w.shape[1]), cols, pre


def conv3x3_backward(x_shape, w, cols, pre, grad_out, stride):
    """Returns (dx, dW, db) for :func:`conv3x3`."""
    dpre = relu_backward(pre, grad_out.reshape(pre.shape))
    dcols = dpre @ w.T
    h, wd, c = x_shape
    return kernels.col2im(dcols, h, wd, c, stride), cols.T @ dpre, dpre.sum(axis=0)


def backbone_forward(image, params, cfg: GINetConfig, trace=None):
    """Returns ``(mid, X)``: block-3 map (h, w, C_mid) and X (h*w, C)."""
    h, w = image.shape[:2]
    cfg.check_input(h, w)
    a = image
    acts = []
    for i, s in enumerate(BLOCK_STRIDES, 1):
        inp = a
        a, cols, pre = conv3x3(a, params[f"backbone.conv{i}.W"], params[f"backbone.conv{i}.b"], s)
        acts.append((inp.shape, cols, pre))
    if trace is not None:
        trace["backbone"] = acts
    mid = relu(acts[2][2]).reshape(acts[3][0])  # block 3 output = block 4 input
    return mid, a.reshape(-1, a.shape[2])


def bilinear_upsample(m, out_h, out_w):
    """Half-pixel bilinear upsampling of an (h, w, M) map."""
    h, w = m.shape[:2]
    if out_h <= 0 or out_w <= 0:
        raise ConfigError(f"upsample target {out_h}x{out_w} must be positive")
    if out_h < h or out_w < w:
        raise ConfigError(f"upsample target {out_h}x{out_w} smaller than source {h}x{w}")
    return kernels.resize_bilinear(m, out_h, out_w)


def ginet_forward(image, l_mat, params, cfg: GINetConfig):
    """Full forward pass.

    Returns ``(main_logits, aux_logits, s_o, v, trace)``; logits are
    (H, W, M). ``s_o`` and ``v`` are None when the semantic branch is off.
    """
    trace = {"image_shape": image.shape, "mode": cfg.mode, "dtype": image.dtype}
    mid, x = backbone_forward(image, params, cfg, trace)
    h, w = mid.shape[:2]
    H, W = image.shape[:2]
    trace["hw"] = (h, w)
    trace["x"], trace["mid"] = x, mid
    if cfg.mode == "baseline":
        x_tilde, s_o = x, None
    else:
        x_tilde, s_o, trace["gi"] = gi_forward(x, l_mat, params, cfg.mode)
    trace["x_tilde"] = x_tilde
    main_small = (x_tilde @ params["cls.W"] + params["cls.b"]).reshape(h, w, cfg.classes)
    main = bilinear_upsample(main_small, H, W)

    aux_h, aux_cols, aux_pre = conv3x3(mid, params["aux.conv.W"], params["aux.conv.b"], 1)
    trace["aux"] = (aux_cols, aux_pre, aux_h)
    aux_small = (aux_h.reshape(h * w, -1) @ params["aux.cls.W"] + params["aux.cls.b"]).reshape(h, w, cfg.classes)
    aux = bilinear_upsample(aux_small, H, W)

    v = None
    if s_o is not None:
        v = sigmoid((s_o * params["sc.centroids"]).sum(axis=1))
    trace["s_o"], trace["v"] = s_o, v
    return main, aux, s_o, v, trace


def ginet_backward(trace, params, cfg: GINetConfig, d_main, d_aux, d_s_o=None, d_centroids=None):
    """Gradient for every parameter given upstream gradients of the outputs.

    Unused parameters (e.g. the GI unit in baseline mode) get zeros.
    """
    if trace.get("mode") != cfg.mode or trace["x"].shape[1] != params["cls.W"].shape[0]:
        raise ContractError("trace does not come from a forward pass with these parameters")
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    h, w = trace["hw"]
    m = cfg.classes

    # auxiliary head
    aux_cols, aux_pre, aux_h = trace["aux"]
    d_aux_small = kernels.resize_bilinear_backward(np.ascontiguousarray(d_aux), h, w).reshape(h * w, m)
    aux_flat = aux_h.reshape(h * w, -1)
    grads["aux.cls.W"] = aux_flat.T @ d_aux_small
    grads["aux.cls.b"] = d_aux_small.sum(axis=0)
    d_aux_h = d_aux_small @ params["aux.cls.W"].T
    d_mid, grads["aux.conv.W"], grads["aux.conv.b"] = conv3x3_backward(
        trace["mid"].shape, params["aux.conv.W"], aux_cols, aux_pre, d_aux_h, 1)

    # main head
    d_main_small = kernels.resize_bilinear_backward(np.ascontiguousarray(d_main), h, w).reshape(h * w, m)
    grads["cls.W"] = trace["x_tilde"].T @ d_main_small
    grads["cls.b"] = d_main_small.sum(axis=0)
    d_x_tilde = d_main_small @ params["cls.W"].T

    if cfg.mode == "baseline":
        d_x = d_x_tilde
    else:
        d_x, gi_grads = gi_backward(trace["gi"], params, d_x_tilde, d_s_o)
        grads.update(gi_grads)
    if d_centroids is not None:
        grads["sc.centroids"] = d_centroids

    # backbone, last block first; block 3's output also feeds the aux head
    acts = trace["backbone"]
    grad = d_x.reshape(h, w, -1)
    for i in range(4, 0, -1):
        in_shape, cols, pre = acts[i - 1]
        if i == 3:
            grad = grad + d_mid
        grad, grads[f"backbone.conv{i}.W"], grads[f"backbone.conv{i}.b"] = conv3x3_backward(
            in_shape, params[f"backbone.conv{i}.W"], cols, pre, grad, BLOCK_STRIDES[i - 1])
    return grads


def loss_and_grads(image, mask, l_mat, params, cfg: GINetConfig, weights: LossWeights,
                   need_grads=True, sc_skip_first=False):
    """Composite objective for one sample and its gradients.

    Returns ``(terms, grads, main_logits)`` where ``terms`` has keys
    total/ce/aux/sc. The presence vector comes from ``mask``; with
    ``sc_skip_first`` class 0 is left out of the semantic-context term.
    With ``weights.lam == 0`` the semantic-context term is not applied at all
    and reported as 0.
    """
    main, aux, s_o, v, trace = ginet_forward(image, l_mat, params, cfg)
    ce = pixel_cross_entropy(main, mask)
    aux_l = pixel_cross_entropy(aux, mask)
    sc = 0.0
    y = None
    use_sc = s_o is not None and weights.lam > 0
    if use_sc:
        y = presence_vector(mask, cfg.classes)
        first = 1 if sc_skip_first else 0
        sc, _ = sc_loss(s_o[first:], params["sc.centroids"][first:], y[first:])
    terms = {"total": total_loss(ce, aux_l, sc, weights), "ce": ce, "aux": aux_l, "sc": sc}
    if not need_grads:
        return terms, None, main
    d_main = pixel_cross_entropy_backward(main, mask)
    d_aux = weights.alpha * pixel_cross_entropy_backward(aux, mask)
    d_s_o = d_c = None
    if use_sc:
        d_s_o, d_c = np.zeros_like(s_o), np.zeros_like(s_o)
        d_s_o[first:], d_c[first:] = sc_loss_backward(s_o[first:], params["sc.centroids"][first:],
                                                      y[first:], v[first:])
        d_s_o, d_c = weights.lam * d_s_o, weights.lam * d_c
    grads = ginet_backward(trace, params, cfg, d_main, d_aux, d_s_o, d_c)
    return terms, grads, main


def relu_pattern(trace):
    """Concatenated sign pattern of every relu pre-activation in a trace."""
    pres = [pre for _, _, pre in trace["backbone"]] + [trace["aux"][1]]
    gi = trace.get("gi")
    if gi is not None:
        pres += [gi[k] for k in ("p_pre", "s_pre", "s_pre_mlp") if k in gi]
    return np.concatenate([(p > 0).reshape(-1) for p in pres])
