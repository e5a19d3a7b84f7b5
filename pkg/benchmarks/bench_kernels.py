"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Reports per-call time for each kernel at the toy-model sizes and for one
full forward+backward of the toy model, with each backend swapped in.
"""
import argparse
import timeit

import numpy as np

from ginet import _kernels_py, kernels
from ginet.data import SceneConfig, generate_scene
from ginet.embeddings import build_semantic_inputs
from ginet.losses import LossWeights
from ginet.model import GINetConfig, init_params, loss_and_grads

try:
    from ginet import _kernels_c
except ImportError:
    _kernels_c = None

NAMES = ("im2col", "col2im", "resize_bilinear", "resize_bilinear_backward")


def use(backend):
    for name in NAMES:
        setattr(kernels, name, getattr(backend, name))


def kernel_cases(rng):
    x = rng.random((32, 32, 16), dtype=np.float32)
    cols = rng.random((16 * 16, 9 * 16), dtype=np.float32)
    logits = rng.random((8, 8, 6), dtype=np.float32)
    grad = rng.random((32, 32, 6), dtype=np.float32)
    return {
        "im2col 32x32x16 s2": lambda b: b.im2col(x, 2),
        "col2im 32x32x16 s2": lambda b: b.col2im(cols, 32, 32, 16, 2),
        "upsample 8x8x6->32x32": lambda b: b.resize_bilinear(logits, 32, 32),
        "upsample bwd 32x32x6": lambda b: b.resize_bilinear_backward(grad, 8, 8),
    }


def time_call(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.append(("cython", _kernels_c))
    else:
        print("compiled extension not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    print(f"{'case':<28s}" + "".join(f"{n:>14s}" for n, _ in backends) + "     speedup")
    for case, fn in kernel_cases(rng).items():
        times = [time_call(lambda b=b: fn(b), args.repeat) for _, b in backends]
        sp = f"{times[0] / times[-1]:10.2f}x" if len(times) > 1 else ""
        print(f"{case:<28s}" + "".join(f"{t * 1e6:12.1f}us" for t in times) + sp)

    cfg = GINetConfig()
    dcfg = SceneConfig()
    params = init_params(cfg, 0)
    sample = generate_scene(dcfg, 0)
    l_mat = build_semantic_inputs(dcfg.classes, None, cfg.embed_dim).matrix.astype(np.float32)
    weights = LossWeights()
    times = []
    for _, b in backends:
        use(b)
        times.append(time_call(lambda: loss_and_grads(sample.image, sample.mask, l_mat, params, cfg, weights),
                               args.repeat))
    use(kernels._impl)
    sp = f"{times[0] / times[-1]:10.2f}x" if len(times) > 1 else ""
    print(f"{'model fwd+bwd (toy, 32x32)':<28s}" + "".join(f"{t * 1e3:12.3f}ms" for t in times) + sp)


if __name__ == "__main__":
    main()
