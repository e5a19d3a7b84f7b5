"""SGD training with a poly learning-rate schedule, evaluation and metrics."""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ginet.data import SceneConfig, augment, confusion_matrix, generate_scene, iou_from_confusion
from ginet.losses import LossWeights
from ginet.model import (GINetConfig, ginet_forward, init_params, loss_and_grads,
                         no_decay, cooccurrence_matrix)
from ginet.numerics import ShapeError, hash_seed, make_rng

log = logging.getLogger(__name__)

METRICS_HEADER = ("iter", "lr", "loss_total", "loss_ce", "loss_aux", "loss_sc", "pixacc", "miou")


class ScheduleError(ValueError):
    pass


class NonFiniteLossError(RuntimeError):
    def __init__(self, iteration, batch_index, terms):
        super().__init__(f"non-finite loss at iteration {iteration}, batch slot {batch_index}: {terms}")
        self.iteration, self.batch_index, self.terms = iteration, batch_index, terms


@dataclass
class TrainConfig:
    base_lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    power: float = 0.9
    total_iters: int = 2000
    batch_size: int = 4
    seed: int = 0
    log_interval: int = 10
    eval_interval: int = 500
    augment: bool = True
    sc_include_background: bool = True
    a_s_init: str = "random"   # or "cooccurrence"

    def validate(self):
        if self.total_iters < 1:
            raise ScheduleError("train.total_iters must be >= 1")
        if self.base_lr <= 0:
            raise ScheduleError("train.base_lr must be > 0")
        if self.batch_size < 1:
            raise ScheduleError("train.batch_size must be >= 1")
        if self.power <= 0:
            raise ScheduleError("train.power must be > 0")
        if not 0 <= self.momentum < 1:
            raise ScheduleError("train.momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ScheduleError("train.weight_decay must be >= 0")
        if self.log_interval < 1 or self.eval_interval < 1:
            raise ScheduleError("train.log_interval and train.eval_interval must be >= 1")
        if self.a_s_init not in ("random", "cooccurrence"):
            raise ScheduleError("train.a_s_init must be 'random' or 'cooccurrence'")
        return self


@dataclass
class OptimState:
    velocity: dict = field(default_factory=dict)
    iteration: int = 0


def poly_lr(base, iteration, total, power=0.9):
    """base * (1 - iteration/total) ** power, for 0 <= iteration < total."""
    if not 0 <= iteration < total:
        raise ScheduleError(f"iteration {iteration} outside schedule [0, {total})")
    if power <= 0:
        raise ScheduleError("power must be positive")
    return base * (1.0 - iteration / total) ** power


def sgd_step(params, grads, state: OptimState, lr, momentum=0.9, weight_decay=1e-4,
             decay_filter=no_decay):
    """In-place SGD with momentum and L2 decay.

    g' = g + wd * theta (skipped where ``decay_filter(name)``),
    v = mu * v + g', theta = theta - lr * v.
    """
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"sgd_step: gradient for {name} is {g.shape}, parameter is {theta.shape}")
        if weight_decay and not decay_filter(name):
            g = g + weight_decay * theta
        v = state.velocity.get(name)
        v = g.copy() if v is None else momentum * v + g
        state.velocity[name] = v
        theta -= lr * v
    state.iteration += 1
    return params, state


def predict(image, l_mat, params, cfg: GINetConfig):
    main = ginet_forward(image, l_mat, params, cfg)[0]
    return np.argmax(main, axis=-1)


def evaluate(params, cfg: GINetConfig, samples, l_mat):
    """Dataset-level mIoU from a confusion matrix summed over ``samples``.

    Returns ``(miou, pixel_accuracy, per_class_iou)``.
    """
    if l_mat.shape[0] != cfg.classes or params["cls.W"].shape[1] != cfg.classes:
        raise ShapeError(f"evaluate: model has {params['cls.W'].shape[1]} classes, "
                         f"embeddings {l_mat.shape[0]}, config {cfg.classes}")
    cm = np.zeros((cfg.classes, cfg.classes), dtype=np.int64)
    for s in samples:
        cm += confusion_matrix(predict(s.image, l_mat, params, cfg), s.mask, cfg.classes)
    m, iou = iou_from_confusion(cm)
    total = cm.sum()
    return m, (float(np.trace(cm) / total) if total else float("nan")), iou


def _fmt(x):
    return "" if x is None else repr(float(x))


def metrics_row(row):
    return [str(row["iter"])] + [_fmt(row.get(k)) for k in METRICS_HEADER[1:]]


def write_metrics(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(metrics_row(r))
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _batch_indices(seed, iteration, batch_size, num_scenes):
    rng = make_rng(seed, stream=(1 << 40) + iteration)
    return rng.integers(0, num_scenes, size=batch_size)


@dataclass
class TrainResult:
    params: dict
    rows: list          # logged metric rows
    losses: list        # total loss per iteration
    final_eval: tuple   # (miou, pixacc, per_class_iou)
    scenes: list


def train_loop(model_cfg: GINetConfig, data_cfg: SceneConfig, train_cfg: TrainConfig,
               weights: LossWeights, l_mat, on_row=None):
    """Train on the fixed scene set described by ``data_cfg``.

    Each iteration draws ``batch_size`` scene indices, optionally augments
    them, averages per-sample gradients in order and takes one SGD step at
    the poly learning rate. Raises :class:`NonFiniteLossError` on NaN/Inf.
    """
    model_cfg.validate()
    data_cfg.validate(model_cfg.stride)
    train_cfg.validate()
    l_mat = np.asarray(l_mat, dtype=np.float32)
    scenes = [generate_scene(data_cfg, i) for i in range(data_cfg.num_scenes)]
    co = None
    if train_cfg.a_s_init == "cooccurrence":
        co = cooccurrence_matrix([s.y for s in scenes])
    params = init_params(model_cfg, train_cfg.seed, np.float32, cooccurrence=co)
    state = OptimState()
    rows, losses = [], []
    total = train_cfg.total_iters
    skip_first = not train_cfg.sc_include_background
    final_eval = None

    for it in range(total):
        lr = poly_lr(train_cfg.base_lr, it, total, train_cfg.power)
        idx = _batch_indices(train_cfg.seed, it, train_cfg.batch_size, len(scenes))
        acc = None
        sums = {"total": 0.0, "ce": 0.0, "aux": 0.0, "sc": 0.0}
        correct = counted = 0
        for b, si in enumerate(idx):
            sample = scenes[int(si)]
            if train_cfg.augment:
                sample = augment(sample, hash_seed(train_cfg.seed, it, b), model_cfg.classes)
            terms, grads, main = loss_and_grads(sample.image, sample.mask, l_mat, params, model_cfg,
                                                weights, sc_skip_first=skip_first)
            if not all(np.isfinite(v) for v in terms.values()):
                raise NonFiniteLossError(it, b, terms)
            for k in sums:
                sums[k] += terms[k]
            keep = sample.mask != 255
            correct += int((np.argmax(main, axis=-1)[keep] == sample.mask[keep]).sum())
            counted += int(keep.sum())
            if acc is None:
                acc = grads
            else:
                for k in acc:
                    acc[k] += grads[k]
        bsz = len(idx)
        for k in acc:
            acc[k] /= bsz
        sgd_step(params, acc, state, lr, train_cfg.momentum, train_cfg.weight_decay)
        losses.append(sums["total"] / bsz)

        last = it == total - 1
        do_eval = last or (it + 1) % train_cfg.eval_interval == 0
        if last or do_eval or it % train_cfg.log_interval == 0:
            row = {"iter": it, "lr": lr, "loss_total": sums["total"] / bsz, "loss_ce": sums["ce"] / bsz,
                   "loss_aux": sums["aux"] / bsz, "loss_sc": sums["sc"] / bsz,
                   "pixacc": correct / counted if counted else 0.0, "miou": None}
            if do_eval:
                final_eval = evaluate(params, model_cfg, scenes, l_mat)
                row["miou"] = final_eval[0]
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return TrainResult(params, rows, losses, final_eval, scenes)


def lambda_sweep(model_cfg, data_cfg, train_cfg, alpha, l_mat, out_dir,
                 lambdas=(0.0, 0.2, 0.4, 0.6, 0.8, 1.0)):
    """Train once per SC-loss weight; writes ``metrics_lambda_<v>.csv`` each.

    Returns ``{lambda: (path, final_miou)}``.
    """
    os.makedirs(out_dir, exist_ok=True)
    results = {}
    for lam in lambdas:
        res = train_loop(model_cfg, data_cfg, train_cfg, LossWeights(lam, alpha), l_mat)
        path = os.path.join(out_dir, f"metrics_lambda_{lam:.1f}.csv")
        write_metrics(path, res.rows)
        results[lam] = (path, res.final_eval[0])
        log.info("lambda=%.1f final mIoU=%.4f", lam, res.final_eval[0])
    return results
