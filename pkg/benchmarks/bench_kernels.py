"""Time the compiled and numpy kernel backends side by side.

Usage: python benchmarks/bench_kernels.py [--n 256 1024 4096] [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from plapsys.kernels import backends
from plapsys.mesh import build_mesh


def cases(mesh, p, floor=1e-12):
    x = mesh.nodes
    u = np.ascontiguousarray(np.sin(np.pi * x / mesh.L) + 0.1 * x)
    h, w = mesh.h, mesh.edge_weights
    diag = np.full(mesh.n, 4.0)
    off = np.full(mesh.n - 1, -1.0)
    return {
        "weighted_operator": lambda k: k.weighted_operator(u, p, floor, h, w),
        "operator_and_conductance": lambda k: k.operator_and_conductance(u, p, floor, h, w),
        "gradient_energy": lambda k: k.gradient_energy(u, p, floor, h, w),
        "solve_tridiag": lambda k: k.solve_tridiag(diag, off, u),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    impls = backends()
    if "cython" not in impls:
        print("compiled backend not built; only timing the numpy fallback")
    names = list(impls)
    print(f"{'kernel':26s} {'n':>6s} " + " ".join(f"{k + ' [us]':>14s}" for k in names) + "   speedup")
    for n in args.n:
        mesh = build_mesh("interval", n, 1.0)
        for label, fn in cases(mesh, args.p).items():
            times = {}
            for name in names:
                k = impls[name]
                fn(k)
                times[name] = min(timeit.repeat(lambda: fn(k), number=args.repeat, repeat=3)) / args.repeat * 1e6
            cols = " ".join(f"{times[k]:14.2f}" for k in names)
            speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
            print(f"{label:26s} {n:6d} {cols} {speed}")


if __name__ == "__main__":
    main()
