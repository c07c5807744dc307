"""Compare the compiled heat-bath kernel with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 50 100 200] [--sweeps 20]

Both kernels consume the same uniforms, so the final configurations are also
checked for equality.
"""

import argparse
import time

import numpy as np

from gsclt import _kernels_py
from gsclt.model import DisorderSample, ModelParams, interaction_matrix

try:
    from gsclt import _kernels
except ImportError:
    _kernels = None


def _setup(N, n_rep, sweeps, params, seed):
    rng = np.random.default_rng(seed)
    J = interaction_matrix(DisorderSample(N, seed), params)
    spins = rng.integers(-params.S, params.S + 1, size=(n_rep, N)).astype(np.int8)
    u = rng.random((sweeps, n_rep, N))
    return spins, J, u


def _run(kernel, spins, J, u, params):
    spins = spins.copy()
    fields = np.ascontiguousarray(spins.astype(np.float64) @ J)
    t0 = time.perf_counter()
    kernel.heat_bath_sweeps(spins, fields, J, u, params.D, params.h, params.S)
    return time.perf_counter() - t0, spins


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 400])
    ap.add_argument("--sweeps", type=int, default=10)
    ap.add_argument("--replicas", type=int, default=4)
    args = ap.parse_args()

    params = ModelParams(0.1, 0.3, 0.2, 1)
    print(f"{'N':>6} {'python ms/sweep':>16} {'cython ms/sweep':>16} {'speedup':>9} {'identical':>10}")
    for N in args.sizes:
        spins, J, u = _setup(N, args.replicas, args.sweeps, params, seed=N)
        t_py, s_py = _run(_kernels_py, spins, J, u, params)
        per_py = 1e3 * t_py / args.sweeps
        if _kernels is None:
            print(f"{N:>6} {per_py:>16.3f} {'n/a':>16} {'n/a':>9} {'n/a':>10}")
            continue
        # repeat the fast kernel so the timing is not dominated by noise
        reps = max(1, int(0.2 / max(t_py / 50, 1e-6)))
        t_cy = min(_run(_kernels, spins, J, u, params)[0] for _ in range(min(reps, 20)))
        _, s_cy = _run(_kernels, spins, J, u, params)
        per_cy = 1e3 * t_cy / args.sweeps
        same = bool(np.array_equal(s_py, s_cy))
        print(f"{N:>6} {per_py:>16.3f} {per_cy:>16.4f} {per_py / per_cy:>8.0f}x {str(same):>10}")


if __name__ == "__main__":
    main()
