"""Hot annealing kernel with numba and pure-numpy backends.

The Metropolis sweep loop dominates solver runtime, so it is compiled
with numba when available. Both backends share the same source function,
consume pre-drawn random arrays, and therefore produce bit-identical
results; `benchmarks/bench_anneal.py` compares their throughput.

Backend selection: the PRUNEQUBO_BACKEND environment variable ("numba",
"numpy", or "auto"); default is numba when importable.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ArgumentError

BACKEND_ENV = "PRUNEQUBO_BACKEND"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _sweep_read(diag, coup, bits, field, energy, perms, unifs, betas):
    """Run one annealing read over pre-drawn randomness.

    bits/field are mutated in place; field[i] must hold sum_j coup[i,j]*bits[j]
    on entry. Returns (best_bits, best_energy) over the trajectory.
    """
    n = diag.shape[0]
    sweeps = betas.shape[0]
    best_energy = energy
    best_bits = bits.copy()
    for s in range(sweeps):
        beta = betas[s]
        for t in range(n):
            i = perms[s, t]
            sign = 1.0 - 2.0 * bits[i]
            delta = sign * (diag[i] + field[i])
            if delta <= 0.0 or unifs[s, t] < math.exp(-beta * delta):
                bits[i] = 1 - bits[i]
                energy += delta
                for j in range(n):
                    field[j] += sign * coup[j, i]
                if energy < best_energy:
                    best_energy = energy
                    best_bits[:] = bits
    return best_bits, best_energy


_sweep_read_numpy = _sweep_read
if HAS_NUMBA:
    _sweep_read_numba = numba.njit(cache=True, nogil=True)(_sweep_read)
else:  # pragma: no cover
    _sweep_read_numba = None

_VALID = ("numba", "numpy")


def _resolve(name: str) -> str:
    if name in ("auto", ""):
        return "numba" if HAS_NUMBA else "numpy"
    if name not in _VALID:
        raise ArgumentError(f"backend must be one of {_VALID + ('auto',)}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ArgumentError("numba backend requested but numba is not importable")
    return name


_active = _resolve(os.environ.get(BACKEND_ENV, "auto"))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> str:
    """Switch backend; returns the previous one (used by tests and benchmarks)."""
    global _active
    previous = _active
    _active = _resolve(name)
    return previous


def sweep_read(diag, coup, bits, field, energy, perms, unifs, betas):
    if _active == "numba":
        return _sweep_read_numba(diag, coup, bits, field, energy, perms, unifs, betas)
    return _sweep_read_numpy(diag, coup, bits, field, energy, perms, unifs, betas)


def warmup() -> None:
    """Trigger JIT compilation on a tiny instance so timing excludes it."""
    if _active != "numba":
        return
    diag = np.zeros(2)
    coup = np.zeros((2, 2))
    bits = np.zeros(2, dtype=np.int8)
    field = np.zeros(2)
    perms = np.zeros((1, 2), dtype=np.int64)
    unifs = np.full((1, 2), 0.5)
    betas = np.ones(1)
    _sweep_read_numba(diag, coup, bits, field, 0.0, perms, unifs, betas)
