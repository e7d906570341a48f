"""Compiled vs pure-Python SA kernels on a swissroll frame field.

Usage: python3 benchmarks/bench_kernels.py [--n 1600] [--moves 20000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from procrustes_embed import kernels
from procrustes_embed.datasets import gen_swissroll
from procrustes_embed.embed_psa import _proposals, _weighted_adjacency, pca_frames
from procrustes_embed.neighborhoods import knn_graph
from procrustes_embed.numerics import make_rng


def setup(n, moves, clusters, seed=0):
    ds = gen_swissroll(n, rng=seed)
    g = knn_graph(ds.X, 12)
    r = make_rng(seed)
    frames = np.ascontiguousarray(pca_frames(ds.X, g, 2))
    ptr, idx, w = _weighted_adjacency(g)
    picks = r.integers(0, n, moves).astype(np.intp)
    props = _proposals(2, moves, 0.5, 0.2, r)
    u = r.uniform(size=moves)
    movable = np.ones(n, np.uint8)
    seeds = r.integers(0, n, clusters).astype(np.intp)
    axes = r.standard_normal((clusters, 2))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    uniforms = r.uniform(size=(clusters, idx.size + 1))
    return frames, (ptr, idx, w), (picks, props, u), (movable, seeds, axes, uniforms)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1600)
    ap.add_argument("--moves", type=int, default=20_000)
    ap.add_argument("--clusters", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    frames, adj, single, cluster = setup(args.n, args.moves, args.clusters)
    T = 1.0
    impls = {"python": (kernels.python_sa_sweep, kernels.python_wolff_sweep)}
    if kernels.BACKEND == "cython":
        impls["cython"] = (kernels.sa_sweep, kernels.wolff_sweep)
    else:
        print("compiled kernels not built; timing the Python fallback only")
    best = {}
    for name, (sweep, wolff) in impls.items():
        def run_sweep():
            sweep(frames.copy(), *adj, *single, T)

        def run_wolff():
            wolff(frames.copy(), *adj, *cluster, T)

        best[name] = (min(timeit.repeat(run_sweep, number=1, repeat=args.repeat)),
                      min(timeit.repeat(run_wolff, number=1, repeat=args.repeat)))
    print(f"n={args.n}, k=12, {args.moves} single-frame moves, {args.clusters} cluster moves")
    print(f"{'kernel':<8} {'sa_sweep [s]':>14} {'wolff_sweep [s]':>16}")
    for name, (a, b) in best.items():
        print(f"{name:<8} {a:>14.4f} {b:>16.4f}")
    if "cython" in best:
        py, cy = best["python"], best["cython"]
        print(f"speedup  {py[0] / cy[0]:>14.1f} {py[1] / cy[1]:>16.1f}")


if __name__ == "__main__":
    main()
