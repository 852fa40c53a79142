"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--cells 256] [--repeat 20]

Both paths run in the same process through their explicit names, so the
environment flag does not matter here.  Results are checked for agreement
before timings are printed.
"""
import argparse
import time

import numpy as np

from genwave import _kernels
from genwave.geometry import Chart
from genwave.wavesolver import _Lattice


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def stencil_case(cells, rng):
    chart = Chart(((0.0, 1.0),) * 2, (16, 16), (True, False))
    lat = _Lattice(chart, (cells, cells))
    p = lat.size
    a_diag = 1.0 + 0.1 * rng.random((2, p))
    a_off = 0.05 * rng.random((1, p))
    b = rng.normal(size=(2, p))
    gtt = -(1.0 + 0.1 * rng.random(p))
    bt = 0.1 * rng.normal(size=p)
    f = rng.normal(size=p)
    u, uold = rng.normal(size=p), rng.normal(size=p)
    args = (a_diag, a_off, lat.pairs, b, gtt, bt, f, 1.0 / lat.steps,
            lat.nbr_p, lat.nbr_m, lat.nbr_d, lat.interior, 1e-3)
    return lat, u, uold, args


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", type=int, default=256, help="cells per axis (2-D lattice)")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--mats", type=int, default=20000, help="4x4 matrices per eigen batch")
    opts = ap.parse_args()
    rng = np.random.default_rng(0)

    lat, u, uold, args = stencil_case(opts.cells, rng)
    out_nb, out_np = np.empty_like(u), np.empty_like(u)
    _kernels.leapfrog_step_numba(u, uold, out_nb, *args)  # compile
    _kernels.leapfrog_step_numpy(u, uold, out_np, *args)
    diff = np.max(np.abs(out_nb - out_np)[lat.interior]) / np.max(np.abs(out_np))
    t_nb = best_of(lambda: _kernels.leapfrog_step_numba(u, uold, out_nb, *args), opts.repeat)
    t_np = best_of(lambda: _kernels.leapfrog_step_numpy(u, uold, out_np, *args), opts.repeat)

    a = rng.normal(size=(opts.mats, 4, 4))
    mats = a + np.swapaxes(a, 1, 2)
    _kernels.eigvalsh_batch_numba(mats[:2])  # compile
    e_nb, _ = _kernels.eigvalsh_batch_numba(mats)
    e_np, _ = _kernels.eigvalsh_batch_numpy(mats)
    ediff = np.max(np.abs(e_nb - e_np))
    s_nb = best_of(lambda: _kernels.eigvalsh_batch_numba(mats), max(3, opts.repeat // 4))
    s_np = best_of(lambda: _kernels.eigvalsh_batch_numpy(mats), max(3, opts.repeat // 4))

    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'max diff':>12}")
    print(f"{f'leapfrog {opts.cells}^2':<28}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}"
          f"{t_np / t_nb:>10.2f}{diff:>12.2e}")
    print(f"{f'eigvalsh {opts.mats} x 4x4':<28}{s_nb * 1e3:>12.3f}{s_np * 1e3:>12.3f}"
          f"{s_np / s_nb:>10.2f}{ediff:>12.2e}")


if __name__ == "__main__":
    main()
