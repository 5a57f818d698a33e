"""Compare the numba and numpy kernel backends on a 64x128 half-disk problem.

    python3 benchmarks/bench_kernels.py [--mesh 64x128] [--repeat 5]

Each kernel is run once to trigger compilation, then timed ``--repeat``
times; the best time is reported together with the max deviation between
the two backends.
"""

import argparse
import math
import time

import numpy as np

from capilab import fem
from capilab.geometry import DomainSpec, boundary_point
from capilab.kernels import _numba, _numpy
from capilab.meshgen import build_mesh


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def max_dev(a, b):
    if isinstance(a, tuple):
        return max(max_dev(x, y) for x, y in zip(a, b) if isinstance(x, np.ndarray) or np.ndim(x) == 0)
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mesh", default="64x128")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    nr, na = (int(t) for t in args.mesh.split("x"))

    spec = DomainSpec("planar", 1.0, math.pi / 2, [(2, 0.1)])
    mesh = build_mesh(spec, nr, na)
    X = mesh.vertices[mesh.triangles]

    sys_ = fem.assemble(mesh)
    space = fem.p2_space(mesh)
    free = np.ones(space.ndof, bool)
    free[space.sigma_dofs] = False
    A = sys_.K[free][:, free].tocsr()
    A.sort_indices()
    b = -sys_.load[free]
    dinv = 1.0 / A.diagonal()
    x0 = np.zeros(len(b))
    maxiter = int(50 * math.sqrt(len(b)))

    P = boundary_point(spec, np.linspace(0, math.pi, 4096))
    nu = np.stack([np.cos(np.linspace(0, math.pi, 4096)), np.sin(np.linspace(0, math.pi, 4096))], 1)

    cases = {
        "p2_element_matrices": lambda m: m.p2_element_matrices(X, fem.QBARY6, fem.QW6, False),
        "pcg_csr": lambda m: m.pcg_csr(A.indptr, A.indices, A.data, b, x0, dinv, 1e-12, maxiter)[0],
        "max_pair_distance": lambda m: m.max_pair_distance(P, P),
        "ball_violations": lambda m: m.ball_violations(P, nu, 0.5, P, 1e-12),
    }
    print(f"mesh {nr}x{na}: {len(mesh.triangles)} triangles, {len(b)} free dofs")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max dev':>12}")
    for name, call in cases.items():
        t_np, r_np = best_of(lambda: call(_numpy), args.repeat)
        t_nb, r_nb = best_of(lambda: call(_numba), args.repeat)
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{max_dev(r_np, r_nb):>12.2e}")


if __name__ == "__main__":
    main()
