"""Compare the accelerated kernels against the pure-numpy fallbacks.

The accelerated path (numba kd-tree traversal and tight O(N^2) loops) is the
default; PCAL_DISABLE_NUMBA=1 selects the numpy fallbacks (exact brute-force
scans and vectorized reductions). This script times both paths in-process by
benchmarking the fallback functions directly against the dispatching entry
points, then prints a table.

Usage: python3 benchmarks/bench_kernels.py [--n 4096] [--repeats 5]
"""

import argparse
import time

import numpy as np

import pcal.accel as accel
from pcal.geom import PointCloud, build_index, fdn_query, knn_query


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    pts = rng.normal(size=(args.n, 3))
    cloud = PointCloud(positions=pts)
    index = build_index(cloud)
    var_pts = pts[: min(args.n, 1024)]
    sm_n = min(args.n, 512)
    logits = rng.normal(size=(sm_n, 3))
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(logp)

    if accel.HAVE_NUMBA:
        # warm the JIT before timing
        knn_query(index, 0, 8)
        fdn_query(index, 0, 0.3)
        accel.pairwise_distance_variance(var_pts[:64])
        accel.smoothness_exact_mean(p[:64], logp[:64], var_pts[:64], 0.5)

    rows = []

    def bench(name, fast, slow):
        t_fast = _time(fast, args.repeats)
        t_slow = _time(slow, args.repeats)
        rows.append((name, t_fast, t_slow, t_slow / t_fast))

    qids = rng.integers(0, args.n, size=200)
    bench(f"KNN(8) x200 (N={args.n})",
          lambda: [knn_query(index, int(q), 8) for q in qids],
          lambda: [accel.knn_numpy(pts, pts[int(q)], 8, int(q)) for q in qids])
    bench(f"FDN(0.3) x200 (N={args.n})",
          lambda: [fdn_query(index, int(q), 0.3) for q in qids],
          lambda: [accel.fdn_numpy(pts, pts[int(q)], 0.3, int(q)) for q in qids])
    bench(f"pairwise variance (N={len(var_pts)})",
          lambda: accel.pairwise_distance_variance(var_pts),
          lambda: accel._pairwise_variance_numpy(var_pts))
    bench(f"exact smoothness (N={sm_n})",
          lambda: accel.smoothness_exact_mean(p, logp, pts[:sm_n], 0.5),
          lambda: accel._smoothness_exact_numpy(p, logp, pts[:sm_n], 0.5))

    mode = "numba" if accel.HAVE_NUMBA else "numpy (PCAL_DISABLE_NUMBA)"
    print(f"active accelerated path: {mode}\n")
    print(f"{'kernel':<34}{'accel (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for name, tf, ts, sp in rows:
        print(f"{name:<34}{tf:>12.5f}{ts:>12.5f}{sp:>9.1f}x")


if __name__ == "__main__":
    main()
