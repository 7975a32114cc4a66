"""Compiled vs NumPy kernels: timing and agreement.

    python benchmarks/bench_kernels.py [--walks N] [--repeat R]
"""
import argparse
import time

import numpy as np

from pamlab import kernels


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(walks, rng):
    out = []
    for d, r, t in ((1, 10, 2.0), (2, 6, 1.0)):
        xi = rng.normal(size=(2 * r + 1) ** d)
        out.append((f"walks d={d} r={r} t={t} N={walks}",
                    lambda m, xi=xi, d=d, r=r, t=t: kernels.walk_log_weights(xi, d, r, r, t, 1, 0, walks, impl=m)[0]))
    for d, n_big, n_w in ((1, 481, 161), (2, 121, 41)):
        big = rng.random((n_big,) * d)
        tgt = rng.random((n_w,) * d)
        w = np.ones((n_w,) * d)
        out.append((f"shift scan d={d} big={n_big} window={n_w}",
                    lambda m, big=big, tgt=tgt, w=w, n=n_big - n_w + 1: kernels.shift_l1_scan(big, tgt, w, n, impl=m)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--walks", type=int, default=100000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = kernels.implementations()
    print(f"active backend: {kernels.backend()}; available: {', '.join(impls)}")
    print(f"{'case':44s} " + " ".join(f"{k:>9s}" for k in impls) + "  speedup  max|diff|")
    for name, fn in cases(args.walks, np.random.default_rng(0)):
        times, outs = [], []
        for m in impls.values():
            tm, o = best_of(lambda: fn(m), args.repeat)
            times.append(tm)
            outs.append(np.asarray(o))
        diff = 0.0
        if len(outs) > 1:
            a, b = outs
            if not np.array_equal(np.isfinite(a), np.isfinite(b)):
                raise SystemExit(f"{name}: backends disagree on absorbed walks")
            fin = np.isfinite(a)
            diff = float(np.max(np.abs(a[fin] - b[fin]), initial=0.0))
        speed = times[0] / times[-1]
        print(f"{name:44s} " + " ".join(f"{x:9.4f}" for x in times) + f"  {speed:6.1f}x  {diff:.2e}")


if __name__ == "__main__":
    main()
