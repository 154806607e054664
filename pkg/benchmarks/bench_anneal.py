#!/usr/bin/env python3
"""Benchmark the annealing kernel: numba backend vs pure-numpy fallback.

Runs the same solve on both backends, checks the results are identical
(they consume the same pre-drawn randomness), and reports throughput.
The first numba call compiles; a warmup run keeps that out of the timing.

Select the default backend globally with PRUNEQUBO_BACKEND=numba|numpy.
"""

import argparse
import time

import numpy as np

from prunequbo import AnnealConfig, CoefficientSet, anneal, assemble_qubo, synth_problem
from prunequbo.kernels import HAS_NUMBA, set_backend, warmup


def run(q, config, backend):
    previous = set_backend(backend)
    try:
        warmup()
        start = time.perf_counter()
        result = anneal(q, config)
        elapsed = time.perf_counter() - start
    finally:
        set_backend(previous)
    return result, elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=96, help="number of filters")
    parser.add_argument("--layers", type=int, default=6)
    parser.add_argument("--reads", type=int, default=20)
    parser.add_argument("--sweeps", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    problem = synth_problem(args.n, args.layers, seed=args.seed)
    q = assemble_qubo(problem, CoefficientSet(gamma=1.0), "hybrid")
    config = AnnealConfig(num_reads=args.reads, sweeps_per_read=args.sweeps,
                          seed=args.seed)
    proposals = args.reads * args.sweeps * args.n

    res_np, t_np = run(q, config, "numpy")
    print(f"numpy : {t_np:8.3f} s   {proposals / t_np / 1e6:8.2f} M proposals/s   "
          f"best energy {res_np.best_energy:.6f}")

    if not HAS_NUMBA:
        print("numba : unavailable")
        return

    res_nb, t_nb = run(q, config, "numba")
    print(f"numba : {t_nb:8.3f} s   {proposals / t_nb / 1e6:8.2f} M proposals/s   "
          f"best energy {res_nb.best_energy:.6f}")
    print(f"speedup: {t_np / t_nb:.1f}x")

    same_mask = np.array_equal(res_np.best_mask.bits, res_nb.best_mask.bits)
    same_energy = res_np.best_energy == res_nb.best_energy
    print(f"backends agree: mask={same_mask} energy={same_energy}")
    if not (same_mask and same_energy):
        raise SystemExit("backend results diverged")


if __name__ == "__main__":
    main()
