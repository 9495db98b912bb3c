#!/usr/bin/env python3
"""Timing comparison of the tree-split kernels.

Runs ``best_split`` and ``apply_tree`` through the numpy reference and the
compiled extension on identical inputs, checks that both agree bit for bit,
and reports per-call times plus the speedup:

    python3 benchmarks/bench_kernels.py [--rows 2000] [--cols 8] [--repeat 30]
"""

import argparse
import time

import numpy as np

from gridband.kernels import _ref

try:
    from gridband.kernels import _fast
except ImportError:
    _fast = None


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--cols", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=30)
    ap.add_argument("--min-leaf", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = np.ascontiguousarray(rng.standard_normal((args.rows, args.cols)))
    y = X[:, 0] * 3.0 - X[:, 1] + rng.standard_normal(args.rows)

    from gridband.learners._tree import build_tree

    tree = build_tree(X, y, max_depth=8, min_leaf=args.min_leaf)
    apply_args = (X, tree.feature, tree.threshold, tree.left, tree.right)

    print(f"inputs: {args.rows} rows x {args.cols} cols, min_leaf={args.min_leaf}, "
          f"tree with {tree.n_nodes} nodes; best of {args.repeat} runs")

    if _fast is None:
        print("compiled extension not built; only the numpy reference is available")
        t = best_of(_ref.best_split, (X, y, args.min_leaf), args.repeat)
        print(f"best_split  reference: {t * 1e3:8.3f} ms")
        t = best_of(_ref.apply_tree, apply_args, args.repeat)
        print(f"apply_tree  reference: {t * 1e3:8.3f} ms")
        return 0

    if _ref.best_split(X, y, args.min_leaf) != _fast.best_split(X, y, args.min_leaf):
        raise SystemExit("backends disagree on best_split; refusing to time them")
    if not np.array_equal(_ref.apply_tree(*apply_args), _fast.apply_tree(*apply_args)):
        raise SystemExit("backends disagree on apply_tree; refusing to time them")

    for name, fn_ref, fn_fast, call_args in (
        ("best_split", _ref.best_split, _fast.best_split, (X, y, args.min_leaf)),
        ("apply_tree", _ref.apply_tree, _fast.apply_tree, apply_args),
    ):
        t_ref = best_of(fn_ref, call_args, args.repeat)
        t_fast = best_of(fn_fast, call_args, args.repeat)
        print(
            f"{name}  reference: {t_ref * 1e3:8.3f} ms   "
            f"compiled: {t_fast * 1e3:8.3f} ms   speedup: {t_ref / t_fast:6.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
