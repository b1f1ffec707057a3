"""Compare the numba kernels with their pure numpy / Python fallbacks.

Run ``python3 benchmarks/bench_kernels.py``.  The library picks one backend
at import time (``STOPBRANCH_NUMBA=0`` forces the fallback); this script
calls both explicitly so it measures them side by side.
"""

import argparse
import time

import numpy as np

from stopbranch import Configuration, SeriesControl, TypeSpace, birth_death_law, build_generator, enumerate_truncated
from stopbranch import _kernels
from stopbranch.feller import _Sweep
from stopbranch.config_space import NO_STOP
from stopbranch.simulator import run_replicas


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def sweep_case(N):
    Q = build_generator(birth_death_law(1.0, 0.5), enumerate_truncated(TypeSpace((0.0,)), N))
    sw = _Sweep(Q, NO_STOP, 0.0, 1.0, SeriesControl())
    g = sw.grid
    rng = np.random.default_rng(0)
    H = rng.random((g.panels, g.m, Q.size, Q.size))
    return (H, sw.q, sw.C, sw.Cedge, g.weights, g.tail), g.panels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=32, help="truncation for the sweep benchmark")
    ap.add_argument("--replicas", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    sweep_args, panels = sweep_case(args.N)
    _kernels.backward_sweep_numba(*sweep_args)  # compile
    a = best_of(lambda: _kernels.backward_sweep_numpy(*sweep_args), args.repeat)
    b = best_of(lambda: _kernels.backward_sweep_numba(*sweep_args), args.repeat)
    same = np.allclose(_kernels.backward_sweep_numpy(*sweep_args)[0], _kernels.backward_sweep_numba(*sweep_args)[0], rtol=1e-12)
    print(f"backward sweep  N={args.N} panels={panels}: numpy {a * 1e3:8.2f} ms  numba {b * 1e3:8.2f} ms  "
          f"speedup {a / b:5.1f}x  agree={same}")

    law = birth_death_law(1.0, 0.5)
    # short paths are dominated by per-call overhead, long ones by the event loop
    for label, start, horizon, n in (
        ("short paths", Configuration.single(0, 1), 1.0, args.replicas),
        ("long paths ", Configuration.single(0, 50), 2.0, max(1, args.replicas // 50)),
    ):
        run = lambda backend, n: run_replicas(law, start, 0.0, horizon, None, n, 1, cap=100_000, backend=backend)
        run(_kernels.ssa_run_numba, 2)  # compile
        a = best_of(lambda: run(_kernels.ssa_run_python, n), 1)
        b = best_of(lambda: run(_kernels.ssa_run_numba, n), args.repeat)
        m = min(n, 200)
        same = all(np.array_equal(x, y) for x, y in zip(run(_kernels.ssa_run_python, m), run(_kernels.ssa_run_numba, m)))
        print(f"SSA {label} n={n}: python {a:8.3f} s   numba {b:8.3f} s   speedup {a / b:5.1f}x  identical={same}")

if __name__ == "__main__":
    main()
