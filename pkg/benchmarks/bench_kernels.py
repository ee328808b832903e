"""Benchmark the compiled kernel core against the pure numpy fallback.

Both backends are bit-identical by contract (asserted here while timing);
the only difference is speed. Run:

    python3 benchmarks/bench_kernels.py
"""

import math
import time
from contextlib import contextmanager

import numpy as np

from eedlab import kernels, runtime
from eedlab.kernels import load_backend

BACKENDS = {}
try:
    BACKENDS["c"] = load_backend("c")
except ImportError:
    print("compiled backend unavailable; timing the fallback only")
BACKENDS["python"] = load_backend("python")

KERNEL_NAMES = ("conv2d", "linear", "avgpool2", "maxpool2", "rotate_bilinear",
                "seqsum", "seqdot")


@contextmanager
def active_backend(impl):
    saved = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(impl, name))
    try:
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def best_of(fn, repeats=5, inner=3):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            out = fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best, out


def cases():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 28, 28)).astype(np.float32)
    w = rng.standard_normal((16, 8, 3, 3)).astype(np.float32)
    b = rng.standard_normal(16).astype(np.float32)
    img = rng.standard_normal((28, 28)).astype(np.float32)
    wl = rng.standard_normal((128, 512)).astype(np.float32)
    xl = rng.standard_normal(512).astype(np.float32)
    v = rng.standard_normal(4096)
    theta = 2 * math.pi / 8
    model = runtime.build_standard_cnn(3, [16, 32, 32], 10, seed=1)
    oracle = runtime.build_c4_equivariant_model(2, 4, 10, seed=1)
    xin = rng.standard_normal(model.input_shape).astype(np.float32)
    return [
        ("conv2d 8x28x28 -> 16", lambda impl: impl.conv2d(x, w, b, 1, 1)),
        ("linear 512 -> 128", lambda impl: impl.linear(wl, xl, None)),
        ("avgpool2 w2", lambda impl: impl.avgpool2(x, 2, 2)),
        ("rotate_bilinear 28x28", lambda impl: impl.rotate_bilinear(
            img, math.cos(theta), math.sin(theta))),
        ("seqdot 4096", lambda impl: impl.seqdot(v, v)),
        ("cnn forward (3 blocks)", lambda impl: _forward(impl, model, xin)),
        ("groupconv forward (2 blocks)", lambda impl: _forward(impl, oracle, xin)),
    ]


def _forward(impl, model, xin):
    with active_backend(impl):
        return runtime.forward(model, xin)


def main():
    rows = []
    for label, fn in cases():
        timings = {}
        outputs = {}
        for name, impl in BACKENDS.items():
            timings[name], outputs[name] = best_of(lambda: fn(impl))
        if len(outputs) == 2:
            a, b = outputs["c"], outputs["python"]
            same = np.array_equal(a, b) if isinstance(a, np.ndarray) else a == b
            assert same, f"backend mismatch in {label}"
        rows.append((label, timings))
    width = max(len(r[0]) for r in rows)
    header = f"{'case':<{width}}  " + "".join(f"{n:>12}" for n in BACKENDS)
    if len(BACKENDS) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, timings in rows:
        line = f"{label:<{width}}  " + "".join(
            f"{timings[n] * 1e6:>10.1f}us" for n in BACKENDS)
        if len(timings) == 2:
            line += f"{timings['python'] / timings['c']:>9.1f}x"
        print(line)
    if len(BACKENDS) == 2:
        print("\nall outputs bit-identical across backends")


if __name__ == "__main__":
    main()
