"""Procedural scene-parsing data: generation, augmentation and mIoU.

A scene is a horizon splitting the sky class (top) from one of two ground
classes, overlaid with a few filled primitives (disc, square, triangle).
Every class has a base colour; each scene jitters those colours and adds
pixel noise, so colour alone is an imperfect cue.

Class roles are positional: index 0 is the sky, 1 and 2 are the ground
classes, and every later class is a primitive whose shape cycles through
disc, square, triangle.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ginet import kernels
from ginet.io import write_pgm, write_ppm
from ginet.losses import IGNORE_INDEX, presence_vector
from ginet.numerics import ShapeError, hash_seed, make_rng

DEFAULT_CLASSES = ("sky", "grass", "road", "ball", "box", "tree")
BASE_COLORS = {
    "sky": (0.45, 0.65, 0.95),
    "grass": (0.25, 0.65, 0.20),
    "road": (0.45, 0.45, 0.45),
    "ball": (0.90, 0.20, 0.15),
    "box": (0.75, 0.55, 0.25),
    "tree": (0.10, 0.45, 0.15),
}
SHAPE_KINDS = ("disc", "square", "triangle")
NOISE_SIGMA = 0.05
COLOR_JITTER = 0.08

# stream ids for the counter-based generator
_SCENE_STREAM = 1 << 32


class DataConfigError(ValueError):
    pass


@dataclass
class SceneConfig:
    side: int = 32
    classes: tuple = DEFAULT_CLASSES
    min_shapes: int = 1
    max_shapes: int = 3
    seed: int = 0
    num_scenes: int = 8

    def validate(self, stride=None):
        if len(self.classes) < 3:
            raise DataConfigError("data.classes needs at least sky and two ground classes")
        if len(set(self.classes)) != len(self.classes):
            raise DataConfigError("data.classes contains duplicates")
        if len(self.classes) >= IGNORE_INDEX:
            raise DataConfigError(f"at most {IGNORE_INDEX - 1} classes are supported")
        if self.side < 8:
            raise DataConfigError("data.side must be at least 8")
        if stride is not None and self.side % stride:
            raise DataConfigError(f"data.side={self.side} is not divisible by the model stride {stride}")
        if not 0 <= self.min_shapes <= self.max_shapes:
            raise DataConfigError("need 0 <= data.min_shapes <= data.max_shapes")
        if self.max_shapes > 0 and len(self.classes) < 4:
            raise DataConfigError("primitives need at least one class beyond sky and ground")
        if self.num_scenes < 1:
            raise DataConfigError("data.num_scenes must be positive")
        return self


@dataclass
class SceneSample:
    image: np.ndarray   # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray    # (H, W) uint8 class indices, 255 = ignore
    y: np.ndarray = field(default=None)  # (M,) presence

    def __eq__(self, other):
        return (np.array_equal(self.image, other.image) and np.array_equal(self.mask, other.mask)
                and np.array_equal(self.y, other.y))


def class_color(name):
    if name in BASE_COLORS:
        return np.array(BASE_COLORS[name])
    return make_rng(hash_seed("color", name)).uniform(0.1, 0.9, size=3)


def _shape_mask(kind, cx, cy, r, side):
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    if kind == "disc":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    if kind == "square":
        return (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
    # triangle with the apex on top, base 2r wide
    return (yy >= cy - r) & (yy <= cy + r) & (np.abs(xx - cx) <= (yy - cy + r) / 2)


def generate_scene(cfg: SceneConfig, index: int, num_shapes: int | None = None) -> SceneSample:
    """Deterministic sample ``index`` of the dataset described by ``cfg``.

    ``num_shapes`` overrides the drawn primitive count.
    """
    rng = make_rng(cfg.seed, _SCENE_STREAM + int(index))
    s, m = cfg.side, len(cfg.classes)
    colors = np.stack([class_color(c) for c in cfg.classes])
    colors = colors + rng.uniform(-COLOR_JITTER, COLOR_JITTER, size=colors.shape)

    horizon = int(rng.integers(int(0.3 * s), int(0.6 * s) + 1))
    ground = int(rng.integers(1, 3))
    k = int(rng.integers(cfg.min_shapes, cfg.max_shapes + 1))
    if num_shapes is not None:
        k = num_shapes
    mask = np.zeros((s, s), dtype=np.uint8)
    mask[horizon:] = ground
    prim = list(range(3, m))
    for _ in range(k):
        ci = prim[int(rng.integers(0, len(prim)))]
        r = rng.uniform(s / 8, s / 4)
        cx, cy = rng.uniform(0, s, size=2)
        kind = SHAPE_KINDS[(ci - 3) % len(SHAPE_KINDS)]
        mask[_shape_mask(kind, cx, cy, r, s)] = ci
    noise = rng.normal(0.0, NOISE_SIGMA, size=(s, s, 3))
    image = np.clip(colors[mask] + noise, 0.0, 1.0).astype(np.float32)
    return SceneSample(image, mask, presence_vector(mask, m))


def rescale(sample: SceneSample, scale: float, num_classes: int) -> SceneSample:
    """Bilinear image / nearest-neighbour mask resize by ``scale``."""
    s = sample.mask.shape[0]
    n = max(1, int(round(s * scale)))
    image = kernels.resize_bilinear(np.ascontiguousarray(sample.image), n, n)
    idx = np.minimum(((np.arange(n) + 0.5) * (s / n)).astype(np.intp), s - 1)
    mask = sample.mask[idx][:, idx]
    return SceneSample(image, mask, presence_vector(mask, num_classes))


def augment(sample: SceneSample, aug_seed: int, num_classes: int,
            flip: bool | None = None, scale: float | None = None, offset=None) -> SceneSample:
    """Random flip, scale in [0.5, 2] and crop/pad back to the original side.

    Padding is zero in the image and ignore (255) in the mask. The random
    draws always happen, so overriding one of them leaves the others as they
    would have been.
    """
    rng = make_rng(aug_seed, stream=2)
    s = sample.mask.shape[0]
    do_flip = bool(rng.random() < 0.5)
    sc = float(rng.uniform(0.5, 2.0))
    u = rng.random(2)
    if flip is not None:
        do_flip = flip
    if scale is not None:
        sc = scale

    image, mask = sample.image, sample.mask
    if do_flip:
        image, mask = image[:, ::-1], mask[:, ::-1]
    scaled = rescale(SceneSample(image, mask), sc, num_classes)
    n = scaled.mask.shape[0]
    span = abs(n - s)
    oy, ox = (int(u[0] * (span + 1)), int(u[1] * (span + 1))) if offset is None else offset
    if n >= s:
        img = scaled.image[oy:oy + s, ox:ox + s]
        msk = scaled.mask[oy:oy + s, ox:ox + s]
    else:
        img = np.zeros((s, s, 3), dtype=sample.image.dtype)
        msk = np.full((s, s), IGNORE_INDEX, dtype=np.uint8)
        img[oy:oy + n, ox:ox + n] = scaled.image
        msk[oy:oy + n, ox:ox + n] = scaled.mask
    img, msk = np.ascontiguousarray(img), np.ascontiguousarray(msk)
    return SceneSample(img, msk, presence_vector(msk, num_classes))


def confusion_matrix(pred, gt, num_classes, ignore_index=IGNORE_INDEX):
    """Counts[i, j] = pixels with ground truth i predicted as j."""
    pred = np.asarray(pred).reshape(-1).astype(np.int64)
    gt = np.asarray(gt).reshape(-1).astype(np.int64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction has {pred.size} pixels, ground truth {gt.size}")
    keep = gt != ignore_index
    return np.bincount(gt[keep] * num_classes + pred[keep],
                       minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def iou_from_confusion(cm):
    """Per-class IoU (NaN where the class is absent from both) and their mean."""
    tp = np.diag(cm).astype(np.float64)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    valid = ~np.isnan(iou)
    return (float(iou[valid].mean()) if valid.any() else float("nan")), iou


def miou(pred, gt, num_classes, ignore_index=IGNORE_INDEX):
    if np.shape(pred) != np.shape(gt):
        raise ShapeError(f"miou: prediction {np.shape(pred)} vs ground truth {np.shape(gt)}")
    return iou_from_confusion(confusion_matrix(pred, gt, num_classes, ignore_index))


def dump_dataset(cfg: SceneConfig, out_dir, count=None):
    """Write images (PPM), masks (PGM) and ``manifest.csv``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    count = cfg.num_scenes if count is None else count
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "image", "mask", "y"])
        for i in range(count):
            sample = generate_scene(cfg, i)
            img_name, mask_name = f"scene_{i:05d}.ppm", f"scene_{i:05d}_mask.pgm"
            write_ppm(os.path.join(out_dir, img_name), sample.image)
            write_pgm(os.path.join(out_dir, mask_name), sample.mask)
            w.writerow([i, img_name, mask_name, "".join(str(int(b)) for b in sample.y)])
    return manifest
