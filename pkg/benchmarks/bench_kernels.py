"""Compiled vs pure-Python kernels: matvecs, PCG solves and one forward simulation.

    python3 benchmarks/bench_kernels.py [--sizes 64 128] [--repeat 5]
"""
import argparse
import time

import numpy as np

from heat_enclosure import _fallback, grid
from heat_enclosure.forward import TimeGrid, simulate
from heat_enclosure.geometry import Disk, Scene, rasterize
from heat_enclosure.probes import DirectionalProbe, TemporalProfile

try:
    from heat_enclosure import _kernels
except ImportError:
    _kernels = None


def best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_size(n, repeat, backends):
    scene = Scene((-0.5, -0.5, 0.5, 0.5), (Disk((0.1, 0.05), 0.15),), 1.0)
    mask = rasterize(scene, n)
    A = grid.build_neumann_laplacian(mask)
    st = A.stencil
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.dim)
    xg = st.scatter(x)
    shift = 800.0  # 1/dt of a typical mid-run step
    rows = {}
    for name, mod in backends:
        out = np.empty(A.dim)
        outg = np.empty_like(xg)

        def pcg_s():
            y = np.zeros_like(xg)
            mod.pcg_stencil(st.ce, st.cn, st.inv_h2, st.diag, shift, xg, y, 1e-10, 10_000, np.empty((5,) + xg.shape))

        def pcg_c():
            mod.pcg(A.indptr, A.indices, A.data, A.diag, shift, x, np.zeros(A.dim), 1e-10, 10_000,
                    np.empty((4, A.dim)))

        def sim():
            saved = grid._backend
            grid._backend = mod
            try:
                simulate(scene, mask, DirectionalProbe((1, 0), 100.0), TemporalProfile(), TimeGrid.graded(100, 1.0, 2.0),
                         operator=A)
            finally:
                grid._backend = saved

        rows[name] = {
            "csr_matvec": best(lambda: mod.csr_matvec(A.indptr, A.indices, A.data, x, shift, out), repeat * 20),
            "stencil_matvec": best(lambda: mod.stencil_matvec(st.ce, st.cn, st.inv_h2, xg, shift, outg), repeat * 20),
            "pcg_csr": best(pcg_c, repeat),
            "pcg_stencil": best(pcg_s, repeat),
            "simulate_100_steps": best(sim, max(1, repeat // 2)),
        }
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = [("python", _fallback)]
    if _kernels is not None:
        backends.insert(0, ("compiled", _kernels))
    else:
        print("compiled extension not built; timing the python backend only")
    for n in args.sizes:
        rows = bench_size(n, args.repeat, backends)
        print(f"\nn = {n}")
        print(f"{'kernel':<20}" + "".join(f"{b:>14}" for b, _ in backends) + ("     speedup" if len(backends) > 1 else ""))
        for k in rows[backends[0][0]]:
            vals = [rows[b][k] for b, _ in backends]
            line = f"{k:<20}" + "".join(f"{v * 1e3:>11.3f} ms" for v in vals)
            if len(vals) > 1:
                line += f"{vals[1] / vals[0]:>11.2f}x"
            print(line)


if __name__ == "__main__":
    main()
