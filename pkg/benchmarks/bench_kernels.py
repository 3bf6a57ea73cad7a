"""Time the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--h 0.01] [--repeat 5]

The kernel timings call both code paths in one process. The end-to-end
torsion solve is timed in subprocesses with and without
SHAPEFLOW_DISABLE_NUMBA, because the flag is read at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from shapeflow import _kernels
from shapeflow.geometry import regular_polygon
from shapeflow.mesh import triangulate

SOLVE_SNIPPET = """
import time
from shapeflow.fem import solve_torsion
from shapeflow.geometry import regular_polygon
from shapeflow.mesh import triangulate
m = triangulate(regular_polygon(64), {h})
solve_torsion(m)
t0 = time.perf_counter()
for _ in range({repeat}):
    solve_torsion(m)
print((time.perf_counter() - t0) / {repeat})
"""


def best_of(fn, repeat):
    fn()  # warm-up, includes jit compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.01, help="absolute element size on the unit disk")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mesh = triangulate(regular_polygon(64), args.h)
    coords = mesh.points[mesh.triangles]
    ref_val, ref_grad = _kernels.reference_basis(2, _kernels.QUAD_POINTS)
    w = _kernels.QUAD_WEIGHTS
    rng = np.random.default_rng(0)
    n = 50 * len(coords)
    u_loc, lam = rng.normal(size=(n, 6)), rng.dirichlet(np.ones(3), size=n)
    glam = rng.normal(size=(n, 3, 2))

    print(f"mesh: {len(coords)} triangles, numba available: {_kernels.USE_NUMBA}")
    rows = []
    for name, call in [
        ("element_matrices", lambda nb: _kernels.element_matrices(coords, ref_val, ref_grad, w, use_numba=nb)),
        ("p2_gradients", lambda nb: _kernels.p2_gradients(u_loc, lam, glam, use_numba=nb)),
    ]:
        t_np = best_of(lambda: call(False), args.repeat)
        t_nb = best_of(lambda: call(True), args.repeat) if _kernels.USE_NUMBA else float("nan")
        rows.append((name, t_np, t_nb))

    code = SOLVE_SNIPPET.format(h=args.h, repeat=args.repeat)
    solve = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, SHAPEFLOW_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        solve[label] = float(out.stdout.strip())
    rows.append(("solve_torsion", solve["numpy"], solve["numba"]))

    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, t_np, t_nb in rows:
        print(f"{name:<18}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
