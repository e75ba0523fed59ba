"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from tmfun import _fallback
from tmfun.graph import build_knn_graph, normalize_sym

try:
    from tmfun import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    feats = rng.normal(size=(3000, 64)).astype(np.float32)
    g = normalize_sym(build_knn_graph(feats, 10))
    x = rng.normal(size=(3000, 64)).astype(np.float32)
    sims = rng.normal(size=(1024, 3000))
    self_index = np.arange(1024, dtype=np.int64)
    index = rng.integers(0, 3000, size=20_000).astype(np.int64)
    values = rng.normal(size=(20_000, 64))
    return {
        "spmm (3000 rows, nnz %d, d=64)" % g.nnz: lambda m: m.spmm(g.row_offsets, g.col_indices, g.weights, x),
        "topn_select (1024 x 3000, n=10)": lambda m: m.topn_select(sims, self_index, 10),
        "scatter_add_rows (20000 x 64)": lambda m: m.scatter_add_rows(np.zeros((3000, 64)), index, values),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':40s}" + "".join(f"{name:>12s}" for name in backends) + f"{'speedup':>10s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for b, m in backends.items()}
        row = f"{name:40s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"{times['python'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
