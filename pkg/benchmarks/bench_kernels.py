"""Time the compiled kernels against the numpy fallback and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from salfer import _kernels_py as py
from salfer.cascade import HaarCascade
from salfer.kernels import compiled_available
from salfer.synthetic import render_face
from salfer.dataset import Emotion
from salfer.imaging import to_gray


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal((32, 1, 256, 256))
    x2 = rng.standard_normal((32, 8, 32, 32))
    cols = rng.standard_normal((32 * 64 * 64, 49))
    r = np.maximum(rng.standard_normal((32, 8, 64, 64)), 0)
    yield "im2col conv1 (32x1x256x256, 7x7/4)", lambda k: k.im2col(x1, 7, 7, 4, 3)
    yield "im2col conv2 (32x8x32x32, 5x5/1)", lambda k: k.im2col(x2, 5, 5, 1, 2)
    yield "col2im conv1", lambda k: k.col2im(cols, x1.shape, 7, 7, 4, 3)
    yield "maxpool2 forward (32x8x64x64)", lambda k: k.maxpool2_forward(r)
    out, idx = py.maxpool2_forward(r)
    yield "maxpool2 backward", lambda k: k.maxpool2_backward(out, idx, r.shape)


def cascade_case(module, gray):
    cascade = HaarCascade.load()
    return cascade.scan(gray, 2, kernels=module)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not compiled_available():
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    from salfer import _kernels as cy

    print(f"{'kernel':40s} {'numpy ms':>10s} {'compiled ms':>12s} {'speedup':>8s}  same")
    for name, fn in cases():
        tp, op = best_of(lambda: fn(py), args.repeat)
        tc, oc = best_of(lambda: fn(cy), args.repeat)
        op = op if isinstance(op, tuple) else (op,)
        oc = oc if isinstance(oc, tuple) else (oc,)
        same = all(np.array_equal(a, b) for a, b in zip(op, oc))
        print(f"{name:40s} {tp * 1e3:10.2f} {tc * 1e3:12.2f} {tp / tc:8.1f}  {same}")

    img, _ = render_face(Emotion.HAPPY, size=320, seed=0)
    gray = to_gray(img)
    tp, op = best_of(lambda: cascade_case(py, gray), 1)
    tc, oc = best_of(lambda: cascade_case(cy, gray), args.repeat)
    print(f"{'cascade scan, one scale (320x320)':40s} {tp * 1e3:10.2f} {tc * 1e3:12.2f} {tp / tc:8.1f}  "
          f"{np.array_equal(op, oc)}")


if __name__ == "__main__":
    main()
