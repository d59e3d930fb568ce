"""Time the compiled and numpy kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--subdivisions 3] [--repeat 5]

Prints one row per kernel (best of ``repeat`` runs, milliseconds) plus the
end-to-end all-pairs geodesic forward and backward pass.
"""
import argparse
import timeit

import numpy as np

from metricprior import kernels
from metricprior.geodesics import GeodesicConfig, geodesic_block
from metricprior.mesh import icosphere


def cases(mesh, rng):
    n, m = mesh.n_vertices, mesh.n_faces
    F = mesh.faces
    P = rng.standard_normal((m, 3, 3))
    U = rng.standard_normal((n, n))
    V = rng.standard_normal((m, 3, n))
    blocks = rng.standard_normal((m, 3, 3))
    X = mesh.vertices
    Q = rng.standard_normal((2000, 3))
    g, norms = kernels.normalize_field(V, 1e-12)
    return {
        "scatter_blocks": lambda: kernels.scatter_blocks(F, blocks, n),
        "face_grad": lambda: kernels.face_grad(P, F, U),
        "face_div": lambda: kernels.face_div(P, F, V, n),
        "face_outer": lambda: kernels.face_outer(F, U, V),
        "pair_contract": lambda: kernels.pair_contract(F, U, U),
        "normalize_field": lambda: kernels.normalize_field(V, 1e-12),
        "normalize_field_vjp": lambda: kernels.normalize_field_vjp(V, norms, V, 1e-12),
        "pairwise_distances": lambda: kernels.pairwise_distances(X),
        "nearest_sq": lambda: kernels.nearest_sq(Q, X),
        "geodesic fwd+bwd": lambda: geodesic_block(X, F, GeodesicConfig())[1](U),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--subdivisions", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mesh = icosphere(args.subdivisions)
    backends = kernels.available_backends()
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_faces} faces; backends: {', '.join(backends)}")
    timings = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in cases(mesh, np.random.default_rng(0)).items():
            fn()  # warm caches
            timings.setdefault(label, {})[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
    header = f"{'kernel':<22}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, row in timings.items():
        line = f"{label:<22}" + "".join(f"{row[b]:>14.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{row['python'] / row['compiled']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
