"""The graph interaction unit.

Parameters live in a flat dict keyed by dotted names (``gi.A_v`` etc.), which
is what the optimizer and the checkpoint writer consume. ``gi_forward``
records every intermediate in a trace; ``gi_backward`` chains the per-stage
vector-Jacobian products over that trace.
"""
from __future__ import annotations

import numpy as np

from ginet.numerics import (ShapeError, relu, relu_backward, row_softmax,
                            row_softmax_backward)
from ginet.projection import (compute_assignment, compute_assignment_backward,
                              project, project_backward, reproject,
                              reproject_backward)

GI_PARAMS = (
    "proj.W_z", "proj.W", "proj.W_o",
    "gi.W_mlp", "gi.b_mlp",
    "gi.A_v", "gi.W_v", "gi.A_s", "gi.W_s_gcn",
    "gi.W_p", "gi.W_s_att",
    "gi.W_s2v", "gi.W_v2s", "gi.beta_s2v", "gi.beta_v2s",
)
VISG_PARAMS = ("proj.W_z", "proj.W", "proj.W_o", "gi.A_v", "gi.W_v")


def _need(cond, msg):
    if not cond:
        raise ShapeError(msg)


def semantic_mlp(l_mat, w_mlp, b_mlp):
    _need(l_mat.shape[1] == w_mlp.shape[0] and b_mlp.shape == (w_mlp.shape[1],),
          f"semantic_mlp: L {l_mat.shape}, W_mlp {w_mlp.shape}, b {b_mlp.shape}")
    return relu(l_mat @ w_mlp + b_mlp)


def graph_conv(nodes, adj, weight):
    """relu((A + I) H W) over an arbitrary learned adjacency."""
    _need(adj.shape == (nodes.shape[0], nodes.shape[0]) and weight.shape[0] == nodes.shape[1],
          f"graph_conv: nodes {nodes.shape}, adjacency {adj.shape}, weight {weight.shape}")
    return relu((adj @ nodes + nodes) @ weight)


def graph_conv_backward(nodes, adj, weight, pre, grad_out):
    """Returns (dH, dA, dW) given the pre-activation ``pre``."""
    dpre = relu_backward(pre, grad_out)
    mixed = adj @ nodes + nodes
    dmixed = dpre @ weight.T
    return adj.T @ dmixed + dmixed, dmixed @ nodes.T, mixed.T @ dpre


def evolve_visual(p, a_v, w_v):
    return graph_conv(p, a_v, w_v)


def evolve_semantic(s, a_s, w_s_gcn):
    return graph_conv(s, a_s, w_s_gcn)


def guidance_logits(p_t, s_t, w_p, w_s_att):
    """(N, M) bilinear scores between reduced visual and semantic nodes."""
    _need(w_p.shape[1] == p_t.shape[1] and w_s_att.shape[1] == s_t.shape[1]
          and w_p.shape[0] == w_s_att.shape[0],
          f"guidance: P~ {p_t.shape}, S~ {s_t.shape}, W_p {w_p.shape}, W_s {w_s_att.shape}")
    return (p_t @ w_p.T) @ (s_t @ w_s_att.T).T


def guidance_s2v(p_t, s_t, w_p, w_s_att):
    return row_softmax(guidance_logits(p_t, s_t, w_p, w_s_att))


def guidance_v2s(p_t, s_t, w_p, w_s_att):
    # same bilinear form with the roles swapped: logits are the transpose
    return row_softmax(guidance_logits(p_t, s_t, w_p, w_s_att).T)


def s2v_update(p_t, s_t, g_s2v, w_s2v, beta_s2v):
    """P_o = P~ + diag(beta) G S~ W."""
    _need(g_s2v.shape == (p_t.shape[0], s_t.shape[0]) and beta_s2v.shape == (p_t.shape[0],),
          f"s2v_update: G {g_s2v.shape}, P~ {p_t.shape}, S~ {s_t.shape}, beta {beta_s2v.shape}")
    return p_t + beta_s2v[:, None] * (g_s2v @ s_t @ w_s2v)


def v2s_update(p_t, s_t, g_v2s, w_v2s, beta_v2s):
    """S_o = diag(beta) S~ + G P~ W."""
    _need(g_v2s.shape == (s_t.shape[0], p_t.shape[0]) and beta_v2s.shape == (s_t.shape[0],),
          f"v2s_update: G {g_v2s.shape}, P~ {p_t.shape}, S~ {s_t.shape}, beta {beta_v2s.shape}")
    return beta_v2s[:, None] * s_t + g_v2s @ p_t @ w_v2s


def guidance_backward(p_t, s_t, w_p, w_s_att, g_s2v, g_v2s, dg_s2v, dg_v2s):
    """Backward through both guidance matrices at once.

    They share one logit matrix (v2s sees its transpose), so the two
    upstream gradients are merged before the bilinear form is differentiated.
    Either upstream gradient may be None. Returns (dP~, dS~, dW_p, dW_s_att).
    """
    dlog = np.zeros((p_t.shape[0], s_t.shape[0]), dtype=p_t.dtype)
    if dg_s2v is not None:
        dlog = dlog + row_softmax_backward(g_s2v, dg_s2v)
    if dg_v2s is not None:
        dlog = dlog + row_softmax_backward(g_v2s, dg_v2s).T
    qp, qs = p_t @ w_p.T, s_t @ w_s_att.T
    dqp, dqs = dlog @ qs, dlog.T @ qp
    return dqp @ w_p, dqs @ w_s_att, dqp.T @ p_t, dqs.T @ s_t


def s2v_update_backward(p_t, s_t, g_s2v, w_s2v, beta_s2v, dp_o):
    """Returns (dP~, dS~, dG, dW_s2v, dbeta_s2v)."""
    gs = g_s2v @ s_t
    dmsg = beta_s2v[:, None] * dp_o
    dgs = dmsg @ w_s2v.T
    dbeta = (dp_o * (gs @ w_s2v)).sum(axis=1)
    return dp_o, g_s2v.T @ dgs, dgs @ s_t.T, gs.T @ dmsg, dbeta


def v2s_update_backward(p_t, s_t, g_v2s, w_v2s, beta_v2s, ds_o):
    """Returns (dP~, dS~, dG, dW_v2s, dbeta_v2s)."""
    gp = g_v2s @ p_t
    dgp = ds_o @ w_v2s.T
    dbeta = (ds_o * s_t).sum(axis=1)
    return g_v2s.T @ dgp, beta_v2s[:, None] * ds_o, dgp @ p_t.T, gp.T @ ds_o, dbeta


def semantic_mlp_backward(l_mat, pre, grad_out):
    """Returns (dW_mlp, db_mlp); the embeddings themselves are constants."""
    dpre = relu_backward(pre, grad_out)
    return l_mat.T @ dpre, dpre.sum(axis=0)


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except ShapeError as exc:
        raise ShapeError(f"[{name}] {exc}") from None


def gi_forward(x, l_mat, params, mode="ginet"):
    """Run projection, graph interaction and re-projection.

    Returns ``(x_tilde, s_o, trace)``. In ``visg`` mode the semantic graph is
    skipped (P_o = P~) and ``s_o`` is None.
    """
    t = {"x": x, "mode": mode}
    t["z"] = z = _stage("assignment", compute_assignment, x, params["proj.W_z"])
    t["p"] = p = _stage("project", project, x, z, params["proj.W"])
    a_v, w_v = params["gi.A_v"], params["gi.W_v"]
    t["p_pre"] = (a_v @ p + p) @ w_v
    t["p_t"] = p_t = _stage("evolve_visual", evolve_visual, p, a_v, w_v)
    s_o = None
    if mode == "visg":
        p_o = p_t
    else:
        t["s"] = s = _stage("semantic_mlp", semantic_mlp, l_mat, params["gi.W_mlp"], params["gi.b_mlp"])
        t["s_pre_mlp"] = l_mat @ params["gi.W_mlp"] + params["gi.b_mlp"]
        a_s, w_sg = params["gi.A_s"], params["gi.W_s_gcn"]
        t["s_pre"] = (a_s @ s + s) @ w_sg
        t["s_t"] = s_t = _stage("evolve_semantic", evolve_semantic, s, a_s, w_sg)
        w_p, w_sa = params["gi.W_p"], params["gi.W_s_att"]
        t["g_s2v"] = g_s2v = _stage("guidance_s2v", guidance_s2v, p_t, s_t, w_p, w_sa)
        t["g_v2s"] = g_v2s = _stage("guidance_v2s", guidance_v2s, p_t, s_t, w_p, w_sa)
        t["p_o"] = p_o = _stage("s2v_update", s2v_update, p_t, s_t, g_s2v,
                                params["gi.W_s2v"], params["gi.beta_s2v"])
        t["s_o"] = s_o = _stage("v2s_update", v2s_update, p_t, s_t, g_v2s,
                                params["gi.W_v2s"], params["gi.beta_v2s"])
    t["p_o"] = p_o
    x_tilde = _stage("reproject", reproject, p_o, z, params["proj.W_o"], x)
    t["l_mat"] = l_mat
    return x_tilde, s_o, t


def gi_backward(trace, params, dx_tilde, ds_o=None):
    """Gradients of the unit given upstream ``dX~`` and ``dS_o``.

    Returns ``(dX, grads)`` where ``grads`` holds one array per parameter
    the unit used in this mode.
    """
    x, z, p, p_t, p_o = trace["x"], trace["z"], trace["p"], trace["p_t"], trace["p_o"]
    g = {}
    dp_o, dz, g["proj.W_o"] = reproject_backward(p_o, z, params["proj.W_o"], dx_tilde)
    dx = dx_tilde.copy()

    if trace["mode"] == "visg":
        dp_t = dp_o
    else:
        s, s_t = trace["s"], trace["s_t"]
        g_s2v, g_v2s = trace["g_s2v"], trace["g_v2s"]
        if ds_o is None:
            ds_o = np.zeros_like(trace["s_o"])

        dp_t_a, ds_t_a, dg_v2s, g["gi.W_v2s"], g["gi.beta_v2s"] = v2s_update_backward(
            p_t, s_t, g_v2s, params["gi.W_v2s"], params["gi.beta_v2s"], ds_o)
        dp_t_b, ds_t_b, dg_s2v, g["gi.W_s2v"], g["gi.beta_s2v"] = s2v_update_backward(
            p_t, s_t, g_s2v, params["gi.W_s2v"], params["gi.beta_s2v"], dp_o)
        dp_t_c, ds_t_c, g["gi.W_p"], g["gi.W_s_att"] = guidance_backward(
            p_t, s_t, params["gi.W_p"], params["gi.W_s_att"], g_s2v, g_v2s, dg_s2v, dg_v2s)
        dp_t = dp_t_a + dp_t_b + dp_t_c
        ds_t = ds_t_a + ds_t_b + ds_t_c

        ds, g["gi.A_s"], g["gi.W_s_gcn"] = graph_conv_backward(
            s, params["gi.A_s"], params["gi.W_s_gcn"], trace["s_pre"], ds_t)
        g["gi.W_mlp"], g["gi.b_mlp"] = semantic_mlp_backward(trace["l_mat"], trace["s_pre_mlp"], ds)

    dp, g["gi.A_v"], g["gi.W_v"] = graph_conv_backward(
        p, params["gi.A_v"], params["gi.W_v"], trace["p_pre"], dp_t)
    dx_p, dz_p, g["proj.W"] = project_backward(x, z, params["proj.W"], dp)
    dx += dx_p
    dx_z, g["proj.W_z"] = compute_assignment_backward(x, params["proj.W_z"], z, dz + dz_p)
    dx += dx_z
    return dx, g
