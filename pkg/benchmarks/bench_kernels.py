"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--resolution 128] [--repeat 5]

Each row is the best of ``--repeat`` timings per call, after one warm-up
call (which also triggers numba compilation or loads its cache).
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from strokepaint import _accel
from strokepaint.painter import PAINT_SHARPNESS
from strokepaint.rasterizer import SoftnessConfig, rasterize_vjp, soft_rasterize
from strokepaint.stroke_model import BrushType, sample_random_stroke
from strokepaint.surrogate import Adam, build_model


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def cases(resolution):
    cfg = SoftnessConfig(PAINT_SHARPNESS)
    rng = np.random.default_rng(0)
    g_fg = rng.standard_normal((resolution, resolution, 3))
    g_a = rng.standard_normal((resolution, resolution))
    for brush in BrushType:
        p = sample_random_stroke(brush, 1)
        yield f"soft_rasterize {brush.value}", lambda p=p: soft_rasterize(p, resolution, cfg)
        yield f"rasterize_vjp {brush.value}", lambda p=p: rasterize_vjp(p, resolution, cfg, g_fg, g_a)
    model = build_model("dual", "oil", 0)
    params = model.params()
    grads = [rng.standard_normal(p.shape) for p in params]
    opt = Adam(params)
    n = sum(p.size for p in params)
    yield f"adam step ({n / 1e6:.1f}M params)", lambda: opt.step(grads)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba unavailable; nothing to compare")
    _accel.set_threads(1)
    timings = {}
    for backend in ("numba", "numpy"):
        _accel.set_backend(backend)
        for name, fn in cases(args.resolution):
            timings.setdefault(name, {})[backend] = _best(fn, args.repeat)
    print(f"{'kernel':<28}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, t in timings.items():
        print(f"{name:<28}{1e3 * t['numba']:>10.2f}{1e3 * t['numpy']:>10.2f}{t['numpy'] / t['numba']:>8.1f}x")


if __name__ == "__main__":
    main()
