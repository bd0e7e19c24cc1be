"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --sizes 128 256 --repeat 5

Each row reports the best-of-``repeat`` wall time per call for both backends,
the speedup, and the largest absolute difference between their outputs.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np
import scipy.sparse as sp

from lcmflow import kernels
from lcmflow.flowfield import FlowField
from lcmflow.meshlap import RingOperator, build_stencil
from lcmflow.solver import diffusion_matrix


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(o) for o in out])
    return np.ravel(out)


def cases(size, rng):
    h = w = size
    n = h * w
    fields = rng.random((6, h, w))
    xs = rng.uniform(-2, w + 1, (h, w))
    ys = rng.uniform(-2, h + 1, (h, w))
    flow = FlowField(rng.normal(0, 0.5, (h, w)), rng.normal(0, 0.5, (h, w)))
    op = RingOperator.from_flow(build_stencil(w, h, 5), flow)
    center, lap, t = op._flat
    lap_t, t_t = op._adjoint
    psi = rng.random(n)
    xu = np.append(rng.random(n), 0.0)
    xv = np.append(rng.random(n), 0.0)
    wx = rng.random((h, w - 1))
    wy = rng.random((h - 1, w))
    x2 = rng.random((h, w))
    a = (diffusion_matrix(wx, wy) + 4.0 * sp.eye(n)).tocsr()
    a.sort_indices()
    b = rng.random(n)
    ip, ix, data = a.indptr.astype(np.int32), a.indices.astype(np.int32), a.data

    def sor(mod):
        x = np.zeros(n)
        mod.sor_sweeps(ip, ix, data, b, x, 1.9, 5)
        return x

    return {
        "bicubic_sample (6 fields)": lambda m: m.bicubic_sample(fields, xs, ys),
        "stencil_apply": lambda m: m.stencil_apply(center.reshape(h, w), lap.reshape(h, w, 6),
                                                   op.offsets, x2, False),
        "diffusion_apply": lambda m: m.diffusion_apply(wx, wy, x2),
        "ring_smooth_apply (u, v)": lambda m: m.ring_smooth_apply(center, lap, t, lap_t, t_t,
                                                                  psi, op._nbr, xu, xv),
        "ring_delta_grad (u, v)": lambda m: m.ring_delta_grad(center, lap, t, op._nbr, xu, xv),
        "sor_sweeps (5 sweeps)": sor,
    }


def end_to_end(size, backend):
    code = (
        "import time, numpy as np\n"
        "from lcmflow.synth import synth_sequence\n"
        "from lcmflow.solver import compute_flow, SolverParams\n"
        f"s = synth_sequence({size}, {size}, 3, 2, 42)\n"
        "t = time.perf_counter()\n"
        "compute_flow(s.frames[1], s.frames[0], SolverParams(xi=0.6, mesh_density=5))\n"
        "print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ)
    env.pop("LCMFLOW_PURE", None)
    if backend == "numpy":
        env["LCMFLOW_PURE"] = "1"
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[128, 256])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--end-to-end", type=int, default=64,
                        help="image side for a full compute_flow run per backend (0 skips)")
    args = parser.parse_args(argv)

    if kernels.BACKEND != "cython":
        print("compiled kernels are not built; nothing to compare")
        return 1
    cy = kernels.backend_module("cython")
    py = kernels.backend_module("numpy")
    rng = np.random.default_rng(0)
    header = f"{'kernel':28s} {'size':>5s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>9s}"
    print(header)
    print("-" * len(header))
    for size in args.sizes:
        for name, fn in cases(size, rng).items():
            tc, oc = best_time(lambda: fn(cy), args.repeat)
            tp, op = best_time(lambda: fn(py), args.repeat)
            diff = float(np.max(np.abs(_flat(oc) - _flat(op))))
            print(f"{name:28s} {size:5d} {tc * 1e3:10.3f} {tp * 1e3:10.3f} {tp / tc:8.1f} {diff:9.1e}")
    if args.end_to_end:
        tc = end_to_end(args.end_to_end, "cython")
        tp = end_to_end(args.end_to_end, "numpy")
        print(f"\ncompute_flow {args.end_to_end}x{args.end_to_end}: "
              f"cython {tc:.2f} s, numpy {tp:.2f} s, speedup {tp / tc:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
