"""Time the compiled tree kernel against its pure-Python twin.

    python3 benchmarks/bench_kernels.py [--samples 4000] [--trees 5]

Both kernels grow the same trees (checked here too), so the ratio is a
like-for-like speedup.
"""

import argparse
import time

import numpy as np

from tsrnn import _treekernel_py
from tsrnn.baseline import ForestConfig, bootstrap_indices
from tsrnn.data import default_profiles, synth_generate

try:
    from tsrnn import _treekernel
except ImportError:
    _treekernel = None


def bench(impl, X, y, jobs, cfg):
    start = time.perf_counter()
    trees = [impl.build_tree(X, y, idx, 5, cfg.max_depth, cfg.min_samples_split,
                             cfg.max_features(X.shape[1]), seed) for idx, seed in jobs]
    built = time.perf_counter() - start
    start = time.perf_counter()
    leaves = [impl.apply_tree(X, *t[:4]) for t in trees]
    applied = time.perf_counter() - start
    return trees, leaves, built, applied


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--trees", type=int, default=5)
    args = ap.parse_args()

    per_class = args.samples // 5
    ds = synth_generate(default_profiles(), {c: per_class for c in range(1, 6)}, seed=0)
    X = np.ascontiguousarray(ds.flat() / 255.0)
    y = ds.class_index().astype(np.int32)
    cfg = ForestConfig()
    rng = np.random.default_rng(0)
    jobs = [(bootstrap_indices(rng, len(y)), np.uint64(k + 1)) for k in range(args.trees)]

    print(f"{len(y)} samples x {X.shape[1]} features, {args.trees} trees, depth <= {cfg.max_depth}")
    py = bench(_treekernel_py, X, y, jobs, cfg)
    print(f"python  build {py[2] / args.trees * 1e3:8.1f} ms/tree   apply {py[3] / args.trees * 1e3:7.2f} ms/tree")
    if _treekernel is None:
        print("cython  not built (pip install -e . with Cython available)")
        return
    cy = bench(_treekernel, X, y, jobs, cfg)
    same = all(all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(ta, tb))
               for ta, tb in zip(py[0], cy[0]))
    same &= all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(py[1], cy[1]))
    print(f"cython  build {cy[2] / args.trees * 1e3:8.1f} ms/tree   apply {cy[3] / args.trees * 1e3:7.2f} ms/tree")
    print(f"speedup build x{py[2] / cy[2]:.1f}, apply x{py[3] / cy[3]:.1f}; identical trees: {same}")


if __name__ == "__main__":
    main()
