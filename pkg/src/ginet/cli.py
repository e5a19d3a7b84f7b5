"""Command-line entry point: ``ginet {train,eval,gradcheck,inspect-projection,sweep}``.

Exit codes: 0 ok, 1 check failure, 2 usage/config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from ginet import kernels
from ginet.config import ConfigError, RunConfig, load_config
from ginet.data import DataConfigError, generate_scene
from ginet.embeddings import EmbeddingFormatError, build_semantic_inputs, load_word_vectors
from ginet.gradcheck import TOL, check_names, run_suite
from ginet.io import CheckpointError, load_checkpoint, save_checkpoint, write_pgm, write_ppm
from ginet.model import ginet_forward
from ginet.projection import assignment_heatmaps
from ginet.training import NonFiniteLossError, evaluate, lambda_sweep, train_loop, write_metrics

log = logging.getLogger("ginet")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
L_MAT_KEY = "const.semantic_inputs"


class UsageError(Exception):
    pass


def _load_run_config(args) -> RunConfig:
    try:
        cfg = load_config(args.config, args.set or ())
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "embeddings", None):
        cfg.embeddings = args.embeddings
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def semantic_inputs(cfg: RunConfig):
    vocab = None
    if cfg.embeddings:
        try:
            vocab = load_word_vectors(cfg.embeddings, cfg.model.embed_dim)
        except EmbeddingFormatError as exc:
            raise UsageError(str(exc)) from None
    return build_semantic_inputs(cfg.data.classes, vocab, cfg.model.embed_dim).matrix.astype(np.float32)


def cmd_train(args):
    cfg = _load_run_config(args)
    l_mat = semantic_inputs(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)

    def show(row):
        extra = f" miou={row['miou']:.4f}" if row["miou"] is not None else ""
        log.info("iter %d lr=%.6f loss=%.4f pixacc=%.4f%s", row["iter"], row["lr"],
                 row["loss_total"], row["pixacc"], extra)
    try:
        res = train_loop(cfg.model, cfg.data, cfg.train, cfg.loss, l_mat, on_row=show)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    metrics = os.path.join(cfg.out_dir, "metrics.csv")
    ckpt = os.path.join(cfg.out_dir, "final.ckpt")
    write_metrics(metrics, res.rows)
    save_checkpoint(ckpt, cfg.model, res.params, {L_MAT_KEY: l_mat})
    m, acc, _ = res.final_eval
    print(f"wrote {metrics} and {ckpt}; final train mIoU={m:.4f} pixacc={acc:.4f}")
    return EXIT_OK


def _load_model(path, cfg: RunConfig):
    try:
        mcfg, params, extras = load_checkpoint(path)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {path}") from None
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None
    if mcfg.classes != len(cfg.data.classes):
        raise UsageError(f"{path}: checkpoint has {mcfg.classes} classes, config lists "
                         f"{len(cfg.data.classes)}")
    if cfg.data.side % mcfg.stride:
        raise UsageError(f"data.side={cfg.data.side} not divisible by checkpoint stride {mcfg.stride}")
    l_mat = extras.get(L_MAT_KEY)
    if l_mat is None or l_mat.shape != (mcfg.classes, mcfg.embed_dim):
        l_mat = semantic_inputs(cfg)
    return mcfg, params, l_mat


def cmd_eval(args):
    cfg = _load_run_config(args)
    mcfg, params, l_mat = _load_model(args.checkpoint, cfg)
    scenes = [generate_scene(cfg.data, i) for i in range(cfg.data.num_scenes)]
    m, acc, iou = evaluate(params, mcfg, scenes, l_mat)
    lines = [f"mIoU {m:.6f}", f"pixacc {acc:.6f}", "class              IoU"]
    for name, v in zip(cfg.data.classes, iou):
        lines.append(f"{name:<18s} {'n/a' if np.isnan(v) else f'{v:.6f}'}")
    print("\n".join(lines))
    out = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "eval.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "iou"])
        for name, v in zip(cfg.data.classes, iou):
            w.writerow([name, "" if np.isnan(v) else repr(float(v))])
        w.writerow(["miou", repr(m)])
        w.writerow(["pixacc", repr(acc)])
    return EXIT_OK


def cmd_gradcheck(args):
    base = args.seed if args.seed is not None else 0
    if args.fault is not None and args.fault not in check_names():
        raise UsageError(f"unknown check {args.fault!r}")
    failed = []
    for seed, rep in run_suite(seeds=(base, base + 1, base + 2), fault=args.fault):
        ok = rep.passed(TOL)
        print(f"[{'PASS' if ok else 'FAIL'}] seed={seed} {rep}")
        if not ok:
            failed.append((seed, rep))
    print(f"kernel backend: {kernels.BACKEND}")
    if failed:
        seed, worst = max(failed, key=lambda sr: sr[1].max_rel_error)
        print(f"gradcheck FAILED: {len(failed)} check(s) above {TOL:g}; worst {worst.op} "
              f"(seed {seed}) at {worst.worst[0]}[{worst.worst[1]}] "
              f"rel err {worst.max_rel_error:.3e}", file=sys.stderr)
        return EXIT_CHECK
    print("gradcheck passed")
    return EXIT_OK


def cmd_inspect_projection(args):
    cfg = _load_run_config(args)
    mcfg, params, l_mat = _load_model(args.checkpoint, cfg)
    if mcfg.mode == "baseline":
        raise UsageError("baseline checkpoints have no projection")
    if not 0 <= args.sample < cfg.data.num_scenes:
        raise UsageError(f"--sample {args.sample} outside [0, {cfg.data.num_scenes})")
    sample = generate_scene(cfg.data, args.sample)
    trace = ginet_forward(sample.image, l_mat, params, mcfg)[4]
    h, w = trace["hw"]
    out = args.out or os.path.join(cfg.out_dir, f"projection_{args.sample:05d}")
    os.makedirs(out, exist_ok=True)
    write_ppm(os.path.join(out, "input.ppm"), sample.image)
    for n, heat in enumerate(assignment_heatmaps(trace["gi"]["z"], h, w)):
        write_pgm(os.path.join(out, f"node_{n:03d}.pgm"), heat)
    print(f"wrote {mcfg.nodes} node heatmaps ({h}x{w}) and input.ppm to {out}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_run_config(args)
    l_mat = semantic_inputs(cfg)
    lambdas = [float(v) for v in args.lambdas.split(",")]
    out = os.path.join(cfg.out_dir, "sweep")
    try:
        results = lambda_sweep(cfg.model, cfg.data, cfg.train, cfg.loss.alpha, l_mat, out, lambdas)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for lam, (path, m) in results.items():
        print(f"lambda={lam:.1f} mIoU={m:.4f} {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ginet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--config", help="config file (default: bundled toy config)")
        sp.add_argument("--set", action="append", metavar="K=V", help="override a config key")
        sp.add_argument("--seed", type=int, help="override train.seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--embeddings", help="GloVe-style word vector file")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)

    common(sub.add_parser("train", help="train and write metrics.csv + final.ckpt"))
    common(sub.add_parser("eval", help="evaluate a checkpoint"), checkpoint=True)
    gc = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    gc.add_argument("--config", help="accepted for symmetry; checks use fixed toy sizes")
    gc.add_argument("--seed", type=int)
    gc.add_argument("--inject-fault", dest="fault", help=argparse.SUPPRESS)
    ip = sub.add_parser("inspect-projection", help="dump per-node assignment heatmaps")
    common(ip, checkpoint=True)
    ip.add_argument("--sample", type=int, default=0)
    sw = sub.add_parser("sweep", help="train once per SC-loss weight")
    common(sw)
    sw.add_argument("--lambdas", default="0,0.2,0.4,0.6,0.8,1.0")
    return p


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "inspect-projection": cmd_inspect_projection, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DataConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
